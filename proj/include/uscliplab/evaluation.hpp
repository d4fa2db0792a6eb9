#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "uscliplab/captions.hpp"
#include "uscliplab/encoders.hpp"

namespace usclip {

// -------------------- alignment --------------------

// Mean cosine between matched rows. Cosines are computed with an internal
// renormalization so that identical inputs give exactly 1.0.
double paired_alignment(const Mat& z_img, const Mat& z_txt);

// Mean cosine over all mismatched pairs (i != j). The upstream results table
// never pins this definition down, so it is an implementation-defined
// convention here and is labeled as such wherever it is reported.
double cross_alignment(const Mat& z_img, const Mat& z_txt);

inline constexpr const char* kCrossAlignmentNote =
    "implementation-defined convention: mean cosine over mismatched pairs (i != j)";

// -------------------- retrieval --------------------

enum class RetrievalDirection { image_to_text, text_to_image };

// Fraction of queries whose true match (the diagonal entry) ranks in the top
// K. A competitor beats the match when its score is strictly higher, or ties
// it from a lower index. image_to_text ranks along rows, text_to_image along
// columns. K must not exceed the candidate count.
double recall_at_k(const Mat& similarity, int k, RetrievalDirection direction);

struct RetrievalTable {
  std::vector<int> ks;                 // ascending
  std::map<int, double> image_to_text;  // K -> recall
  std::map<int, double> text_to_image;
};

RetrievalTable retrieval_table(const Mat& similarity, const std::vector<int>& ks = {1, 5, 10});

// -------------------- auroc --------------------

// Rank-statistic AUROC with tie-averaging; labels are 0/1 and both classes
// must be present.
double auroc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

// Macro one-vs-rest over the measured classes: a class is measured when the
// evaluated labels contain at least one positive and one negative for it;
// unmeasurable classes are skipped. No measurable class at all is an error.
double auroc_macro_ovr(const Mat& class_scores, const std::vector<int>& labels);

// -------------------- zero-shot classification --------------------

enum class PromptStrategy { single, ensemble_mean, ensemble_max };

const char* prompt_strategy_name(PromptStrategy s);
PromptStrategy parse_prompt_strategy(const std::string& name);

struct ClassPrompt {
  std::string label;
  MetadataFields fields;  // must satisfy the tier-2 preconditions
};

struct ZeroShotResult {
  PromptStrategy strategy = PromptStrategy::single;
  std::vector<int> predictions;
  Mat scores;  // per-image, per-class scores that fed the argmax
  double accuracy = 0.0;
};

// single renders tier-2 template #1 per class; ensemble_mean renormalizes the
// mean of all ten tier-2 prompt embeddings; ensemble_max scores each image by
// the maximum cosine over the ten. Argmax ties go to the lowest class index.
ZeroShotResult zero_shot_classify(const Mat& z_img, const std::vector<ClassPrompt>& classes,
                                  const std::vector<int>& labels, DualEncoderModel& model,
                                  PromptStrategy strategy);

// -------------------- linear probe --------------------

struct ProbeConfig {
  double l2 = 1.0;        // ridge penalty on weights (bias unpenalized)
  int max_iters = 1000;   // full-batch gradient descent iterations
  double tol = 1e-9;      // relative objective improvement to keep going
  double init_step = 0.5;
};

struct ProbeModel {
  Mat w;  // classes x dim
  std::vector<double> b;
  int num_classes = 0;
  double final_objective = 0.0;
  int iters = 0;
};

// Multinomial logistic regression minimizing sum-CE + 0.5 * l2 * ||W||^2 from
// a zero start, with a monotone backtracking step size. Deterministic.
ProbeModel train_linear_probe(const Mat& x, const std::vector<int>& labels, int num_classes,
                              const ProbeConfig& cfg = {});
Mat probe_scores(const ProbeModel& m, const Mat& x);
std::vector<int> probe_predict(const ProbeModel& m, const Mat& x);

struct ProbeResult {
  double auroc = 0.0;
  double accuracy = 0.0;
};

// Trains on x[train_idx], reports macro AUROC and accuracy on x[test_idx].
ProbeResult linear_probe(const Mat& x, const std::vector<int>& labels,
                         const std::vector<size_t>& train_idx, const std::vector<size_t>& test_idx,
                         int num_classes, const ProbeConfig& cfg = {});

// -------------------- few-shot adaptation --------------------

struct FewShotDraw {
  std::vector<size_t> selected;  // ascending subset of the pool
  size_t shots = 0;
  bool floor_applied = false;
};

// Class-stratified draw of max(ceil(fraction * pool), num_classes) samples
// with at least one per class, allocated by largest remainder and shuffled
// per (seed, class). fraction 1.0 selects the whole pool.
FewShotDraw few_shot_select(const std::vector<int>& labels, const std::vector<size_t>& pool,
                            int num_classes, double fraction, uint64_t seed);

struct FewShotResult {
  double fraction = 0.0;
  std::vector<uint64_t> seeds;
  std::vector<double> aurocs;      // per seed
  std::vector<double> accuracies;  // per seed
  double auroc_mean = 0.0;
  double auroc_std = 0.0;  // sample std (n-1); two seeds minimum for a nonzero value
  bool floor_applied = false;
};

FewShotResult few_shot_adapt(const Mat& x, const std::vector<int>& labels,
                             const std::vector<size_t>& train_pool,
                             const std::vector<size_t>& test_idx, int num_classes, double fraction,
                             const std::vector<uint64_t>& seeds, const ProbeConfig& cfg = {});

// -------------------- per-group breakdown --------------------

struct GroupAccuracy {
  std::string group;
  int count = 0;
  int correct = 0;
  double accuracy = 0.0;
};

struct GroupReport {
  std::vector<GroupAccuracy> groups;  // sorted by group name
  std::vector<std::string> omitted;   // expected groups with no samples
  double overall = 0.0;
  int total = 0;
};

// Accuracy per group plus counts; overall equals the count-weighted mean of
// the group accuracies. Expected groups that never appear are listed as
// omitted rather than reported with an empty denominator.
GroupReport per_group_report(const std::vector<int>& predictions, const std::vector<int>& labels,
                             const std::vector<std::string>& groups,
                             const std::vector<std::string>& expected_groups = {});

// -------------------- report --------------------

struct EvalReport {
  std::string model_tag;
  std::string strategy;  // zero-shot block label
  int eval_count = 0;
  double paired_alignment = 0.0;
  double cross_alignment = 0.0;
  double zero_shot_accuracy = 0.0;
  GroupReport zero_shot_by_organ;
  RetrievalTable retrieval;
  double probe_auroc = 0.0;
  double probe_accuracy = 0.0;
  std::vector<FewShotResult> few_shot;
};

void save_eval_report(const EvalReport& r, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

}  // namespace usclip
