// Acceptance gate: one pass/fail line per criterion, exit code = failures.
// Criteria 1-7 are fast module-level identities; 8-10 share one end-to-end
// run of the full pipeline on a synthetic corpus.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracle_helpers.hpp"
#include "uscliplab/pipeline.hpp"
#include "uscliplab/synthetic.hpp"

using namespace usclip;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

// -------------------- criterion 1 --------------------

Outcome criterion_info_nce_identity() {
  Outcome out;
  auto t0 = Clock::now();
  for (int n : {2, 8, 32}) {
    Mat logits(n, n);
    for (double& v : logits.a) v = 0.3;
    InfoNce r = info_nce_loss(logits);
    out.require(std::abs(r.loss - std::log(static_cast<double>(n))) < 1e-9,
                "uniform " + std::to_string(n) + "x" + std::to_string(n) + " loss " + fmt(r.loss));
  }
  Mat sat(8, 8);
  for (int i = 0; i < 8; ++i) sat.at(i, i) = 50.0;
  double sat_loss = info_nce_loss(sat).loss;
  out.require(sat_loss < 1e-6, "saturated diagonal loss " + fmt(sat_loss));
  double elapsed = seconds_since(t0);
  out.require(elapsed < 1.0, "took " + fmt(elapsed) + "s");
  return out;
}

// -------------------- criterion 2 --------------------

Outcome criterion_gradient_check() {
  Outcome out;
  auto t0 = Clock::now();
  Rng rng(21);
  double worst = 0.0;
  for (int n : {4, 8}) {
    for (int trial = 0; trial < 10; ++trial) {
      Mat logits = oracle::random_mat(n, n, rng, -2.0, 2.0);
      Mat analytic = info_nce_loss(logits).grad;
      Mat fd = oracle::fd_gradient([](const Mat& m) { return info_nce_loss(m).loss; }, logits,
                                   1e-5);
      worst = std::max(worst, oracle::max_rel_error(analytic, fd));
    }
  }
  out.require(worst < 1e-4, "max relative error " + fmt(worst));
  double elapsed = seconds_since(t0);
  out.require(elapsed < 5.0, "took " + fmt(elapsed) + "s");
  out.note("max rel err " + fmt(worst));
  return out;
}

// -------------------- criterion 3 --------------------

Outcome criterion_metric_oracles() {
  Outcome out;
  Rng rng(33);

  for (int trial = 0; trial < 50; ++trial) {
    int n = 4 + static_cast<int>(rng.below(97));  // n <= 100
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform() * 16.0) / 16.0;
      labels[i] = rng.coin() ? 1 : 0;
      pos += labels[i];
    }
    if (pos == 0) labels[0] = 1;
    if (pos == n) labels[0] = 0;
    if (auroc_binary(scores, labels) != oracle::auroc_pairs(scores, labels)) {
      out.require(false, "auroc oracle mismatch at trial " + std::to_string(trial));
      break;
    }
  }

  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.below(29));
    Mat s = oracle::random_mat(n, n, rng);
    if (trial % 3 == 0) {
      for (double& v : s.a) v = std::round(v * 4.0) / 4.0;
    }
    for (int k : {1, std::max(1, n / 2), n}) {
      bool i2t_ok = recall_at_k(s, k, RetrievalDirection::image_to_text) ==
                    oracle::recall_by_sorting(s, k, true);
      bool t2i_ok = recall_at_k(s, k, RetrievalDirection::text_to_image) ==
                    oracle::recall_by_sorting(s, k, false);
      if (!i2t_ok || !t2i_ok) {
        out.require(false, "recall oracle mismatch at trial " + std::to_string(trial) + ", k=" +
                               std::to_string(k));
        trial = 50;
        break;
      }
    }
  }

  // random-similarity retrieval averages K/N
  const int kN = 100, kTrials = 1000;
  std::vector<int> ks = {1, 5, 10};
  std::vector<double> sums(ks.size(), 0.0);
  for (int trial = 0; trial < kTrials; ++trial) {
    Mat s = oracle::random_mat(kN, kN, rng);
    for (size_t j = 0; j < ks.size(); ++j) {
      sums[j] += recall_at_k(s, ks[j], RetrievalDirection::image_to_text);
    }
  }
  for (size_t j = 0; j < ks.size(); ++j) {
    double mean = sums[j] / kTrials;
    double want = static_cast<double>(ks[j]) / kN;
    out.require(std::abs(mean - want) < 0.02,
                "random R@" + std::to_string(ks[j]) + " mean " + fmt(mean) + " vs " + fmt(want));
  }
  return out;
}

// -------------------- criterion 4 --------------------

Outcome criterion_diversity_arithmetic() {
  Outcome out;
  DiversityRatios templ = diversity_ratios(64762, 302, 964, 5114);
  out.require(std::abs(templ.distinct1 - 0.0047) < 5e-5, "distinct1 " + fmt(templ.distinct1));
  out.require(std::abs(templ.distinct2 - 0.0162) < 5e-5, "distinct2 " + fmt(templ.distinct2));
  out.require(std::abs(templ.mean_len - 12.7) < 0.05, "mean len " + fmt(templ.mean_len));
  DiversityRatios rewritten = diversity_ratios(98243, 729, 4525, 5114);
  out.require(std::abs(rewritten.distinct1 - 0.0074) < 5e-5, "distinct1 " + fmt(rewritten.distinct1));
  out.require(std::abs(rewritten.distinct2 - 0.0486) < 5e-5, "distinct2 " + fmt(rewritten.distinct2));
  out.require(std::abs(rewritten.mean_len - 19.2) < 0.05, "mean len " + fmt(rewritten.mean_len));
  return out;
}

// -------------------- criterion 5 --------------------

Outcome criterion_template_goldens() {
  Outcome out;
  std::ifstream golden("data/template_goldens.txt");
  if (!golden.good()) {
    out.require(false, "data/template_goldens.txt not found next to the binary");
    return out;
  }
  const TemplateLibrary& lib = TemplateLibrary::builtin();
  int checked = 0;
  std::string line;
  while (std::getline(golden, line)) {
    if (line.empty()) continue;
    size_t p1 = line.find('|');
    size_t p2 = line.find('|', p1 + 1);
    int tier = std::stoi(line.substr(0, p1));
    int index = std::stoi(line.substr(p1 + 1, p2 - p1 - 1));
    std::string want = line.substr(p2 + 1);
    if (lib.get(tier, index) != want) {
      out.require(false, "template " + std::to_string(tier) + "#" + std::to_string(index) +
                             " deviates from the golden transcription");
    }
    ++checked;
  }
  out.require(checked == 30, "expected 30 golden templates, saw " + std::to_string(checked));

  Rng rng(1);
  MetadataFields breast;
  breast.tissue = "breast";
  breast.condition = "benign";
  Caption c2 = render_caption(lib, 2, 1, breast, rng);
  out.require(c2.text == "An ultrasound image of breast with benign findings.",
              "tier-2 example rendered as '" + c2.text + "'");

  MetadataFields bare;
  bare.tissue = "liver";
  Caption c3 = render_caption(lib, 3, 1, bare, rng);
  out.require(c3.text ==
                  "Ultrasound of unknown region in a patient. unremarkable findings. "
                  "Assessment: unspecified condition.",
              "tier-3 fallback rendered as '" + c3.text + "'");
  return out;
}

// -------------------- criterion 6 --------------------

Outcome criterion_split_protocol() {
  Outcome out;
  const std::array<double, 3> ratios{0.7, 0.15, 0.15};

  Rng rng(66);
  for (int trial = 0; trial < 100; ++trial) {
    int n_sources = 1 + static_cast<int>(rng.below(5));
    std::vector<SampleRecord> records;
    std::vector<int> source_sizes(n_sources);
    for (int s = 0; s < n_sources; ++s) {
      int n = 1 + static_cast<int>(rng.below(80));
      source_sizes[s] = n;
      for (int i = 0; i < n; ++i) {
        SampleRecord rec;
        rec.sample_id = "t" + std::to_string(trial) + "_s" + std::to_string(s) + "_" +
                        std::to_string(i);
        rec.source_dataset = "src" + std::to_string(s);
        rec.embedded_image = Image(4, 4, 0.5);
        records.push_back(std::move(rec));
      }
    }
    SplitAssignment split = stratified_split(records, ratios, 1000 + trial);
    // per-source, per-split counts stay within +/-1 of the exact quota
    for (int s = 0; s < n_sources; ++s) {
      std::array<int, 3> counts{0, 0, 0};
      for (const auto& rec : records) {
        if (rec.source_dataset != "src" + std::to_string(s)) continue;
        counts[static_cast<int>(split.by_sample.at(rec.sample_id))]++;
      }
      int total = counts[0] + counts[1] + counts[2];
      if (total != source_sizes[s]) {
        out.require(false, "trial " + std::to_string(trial) + ": split lost records");
      }
      for (int k = 0; k < 3; ++k) {
        double quota = ratios[k] * source_sizes[s];
        if (std::abs(counts[k] - quota) > 1.0 + 1e-9) {
          out.require(false, "trial " + std::to_string(trial) + " source " + std::to_string(s) +
                                 " split " + std::to_string(k) + ": " +
                                 std::to_string(counts[k]) + " vs quota " + fmt(quota));
        }
      }
    }
    if (!out.ok) return out;
  }

  // external records never enter the internal split
  std::vector<SampleRecord> mixed;
  for (int i = 0; i < 40; ++i) {
    SampleRecord rec;
    rec.sample_id = "m" + std::to_string(i);
    rec.source_dataset = i % 2 ? "a" : "b";
    rec.embedded_image = Image(4, 4, 0.5);
    if (i >= 36) {
      rec.split = Split::external;
      rec.held_out = true;
    }
    mixed.push_back(std::move(rec));
  }
  std::vector<SampleRecord> internal(mixed.begin(), mixed.begin() + 36);
  SplitAssignment split = stratified_split(internal, ratios, 7);
  apply_split(mixed, split);
  for (int i = 36; i < 40; ++i) {
    out.require(mixed[i].split == Split::external, "external record was reassigned");
    out.require(!split.by_sample.count(mixed[i].sample_id),
                "external record appears in the assignment");
  }

  // same seed, same assignment; different seed, different assignment
  SplitAssignment again = stratified_split(internal, ratios, 7);
  out.require(again.by_sample == split.by_sample, "same-seed split is not deterministic");
  SplitAssignment other = stratified_split(internal, ratios, 8);
  out.require(other.by_sample != split.by_sample, "seed has no effect on the split");
  return out;
}

// -------------------- criterion 7 --------------------

Outcome criterion_freeze_matrix() {
  Outcome out;
  Vocabulary vocab = Vocabulary::build({"liver lesion with mass findings"});

  auto trainable_by_rule = [](const std::string& name, const FreezeConfig& f) {
    if (name.rfind("image_head/", 0) == 0 || name.rfind("text_head/", 0) == 0 ||
        name == "temperature/rho") {
      return true;
    }
    if (name.rfind("image_encoder/", 0) == 0) return f.train_image_encoder;
    if (name.rfind("text_encoder/", 0) == 0) return f.train_text_encoder;
    return false;
  };

  std::map<std::string, size_t> counts;
  for (const std::string& name : {"heads_only", "image_enc", "text_enc", "full"}) {
    FreezeConfig freeze = FreezeConfig::from_name(name);
    DualEncoderModel model =
        DualEncoderModel::build("toy", "toy", TextEncoderKind::contrastive, vocab, 33);
    configure_trainable(model, freeze);
    counts[name] = trainable_param_count(model);

    auto groups = model.param_groups();
    std::vector<std::vector<double>> before;
    for (ParamGroup* g : groups) {
      before.push_back(g->value);
      for (size_t i = 0; i < g->grad.size(); ++i) g->grad[i] = 1e-3 * ((i % 11) + 1.0);
    }
    AdamW opt;
    opt.init(groups);
    opt.step(groups, 1e-3);

    for (size_t gi = 0; gi < groups.size(); ++gi) {
      bool changed = groups[gi]->value != before[gi];
      bool expected = trainable_by_rule(groups[gi]->name, freeze);
      if (changed != expected) {
        out.require(false, name + ": group " + groups[gi]->name +
                               (changed ? " changed but should be frozen"
                                        : " frozen but should train"));
      }
    }
  }

  out.require(counts["heads_only"] < counts["image_enc"], "heads_only !< image_enc");
  out.require(counts["heads_only"] < counts["text_enc"], "heads_only !< text_enc");
  out.require(counts["image_enc"] < counts["full"], "image_enc !< full");
  out.require(counts["text_enc"] < counts["full"], "text_enc !< full");
  return out;
}

// -------------------- criteria 8-10: shared pipeline run --------------------

struct PipelineRun {
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  fs::path out_dir;
  RunConfig config;
  std::vector<EpochLogEntry> log;
  EvalReport report;  // single-prompt strategy
};

PipelineRun run_pipeline() {
  PipelineRun run;
  fs::path dir = fs::temp_directory_path() / "uscliplab_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  run.out_dir = dir / "out";

  fs::path cfg_path = dir / "config.json";
  {
    std::ofstream f(cfg_path);
    f << "{\"paths\": {\"out_dir\": \"" << run.out_dir.generic_string() << "\"}}";
  }

  try {
    run.config = load_config(cfg_path);
    auto t0 = Clock::now();
    run_synth(run.config, 120, 7);
    run_ingest(run.config);
    run_caption(run.config);
    run_train(run.config);
    run.report = run_eval(run.config);
    run.seconds = seconds_since(t0);
    run.log = load_train_log(run.out_dir / "checkpoints" / "full" / "train_log.jsonl");
    run.ok = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome criterion_end_to_end(const PipelineRun& run) {
  Outcome out;
  if (!run.ok) {
    out.require(false, "pipeline failed: " + run.error);
    return out;
  }
  out.require(!run.log.empty() && run.log.front().epoch == 0, "missing epoch-0 snapshot");
  double gain = run.log.back().val_paired_alignment - run.log.front().val_paired_alignment;
  out.require(gain >= 0.3, "alignment gain " + fmt(gain));

  out.require(run.report.zero_shot_accuracy >= 0.5,
              "zero-shot accuracy " + fmt(run.report.zero_shot_accuracy));

  double baseline = 1.0 / run.report.eval_count;
  double r1 = run.report.retrieval.image_to_text.at(1);
  out.require(r1 >= 5.0 * baseline, "R@1 " + fmt(r1) + " vs 5x baseline " + fmt(5.0 * baseline));

  out.require(run.report.probe_auroc >= 0.9, "probe auroc " + fmt(run.report.probe_auroc));
  out.require(run.seconds < 600.0, "took " + fmt(run.seconds) + "s");
  out.note("gain " + fmt(gain) + ", zero-shot " + fmt(run.report.zero_shot_accuracy) + ", R@1 " +
           fmt(r1) + ", probe " + fmt(run.report.probe_auroc) + ", " + fmt(run.seconds) + "s");
  return out;
}

Outcome criterion_few_shot_contract(const PipelineRun& run) {
  Outcome out;
  if (!run.ok) {
    out.require(false, "pipeline failed: " + run.error);
    return out;
  }
  const FewShotResult* full = nullptr;
  const FewShotResult* frac05 = nullptr;
  const FewShotResult* frac10 = nullptr;
  for (const auto& fs_entry : run.report.few_shot) {
    if (fs_entry.fraction == 1.0) full = &fs_entry;
    if (fs_entry.fraction == 0.05) frac05 = &fs_entry;
    if (fs_entry.fraction == 0.10) frac10 = &fs_entry;
  }
  if (!full || !frac05 || !frac10) {
    out.require(false, "missing few-shot fractions in the report");
    return out;
  }

  for (double a : full->aurocs) {
    out.require(a == run.report.probe_auroc, "full-fraction seed auroc deviates from the probe");
  }
  out.require(std::abs(full->auroc_mean - run.report.probe_auroc) < 1e-12,
              "full-fraction mean " + fmt(full->auroc_mean));
  out.require(full->auroc_std < 1e-12, "full-fraction std " + fmt(full->auroc_std));

  for (const FewShotResult* f : {frac05, frac10}) {
    std::string tag = fmt(f->fraction);
    out.require(f->seeds.size() == 5, "fraction " + tag + " ran " +
                                          std::to_string(f->seeds.size()) + " seeds");
    out.require(f->auroc_mean > 0.5, "fraction " + tag + " mean " + fmt(f->auroc_mean) +
                                         " not above chance");
    out.require(f->auroc_mean < full->auroc_mean,
                "fraction " + tag + " mean " + fmt(f->auroc_mean) + " not below full " +
                    fmt(full->auroc_mean));
    out.require(f->auroc_std > 0.0, "fraction " + tag + " std is zero");
  }
  out.note("0.05: " + fmt(frac05->auroc_mean) + "+/-" + fmt(frac05->auroc_std) + ", 0.10: " +
           fmt(frac10->auroc_mean) + "+/-" + fmt(frac10->auroc_std) + ", full: " +
           fmt(full->auroc_mean));
  return out;
}

// Text backend whose feature depends only on which organ word appears, making
// every prompt template of a class embed to the same point.
class MarkerTextEncoder : public TextEncoder {
 public:
  MarkerTextEncoder(const Vocabulary& vocab, TextEncoderKind kind) : kind_(kind) {
    for (const char* organ : {"breast", "lung", "thyroid", "liver"}) {
      markers_.push_back(vocab.lookup(organ));
    }
  }
  std::string name() const override { return "marker"; }
  int output_dim() const override { return 8; }
  int token_cap() const override { return usclip::token_cap(kind_); }
  Mat forward(const std::vector<TokenSequence>& batch, bool) override {
    Mat out(static_cast<int>(batch.size()), 8);
    for (int i = 0; i < out.rows; ++i) {
      bool hit = false;
      for (size_t t = 0; t < batch[i].ids.size() && !hit; ++t) {
        if (!batch[i].mask[t]) continue;
        for (size_t m = 0; m < markers_.size(); ++m) {
          if (batch[i].ids[t] == markers_[m] && markers_[m] != Vocabulary::kUnk) {
            out.at(i, static_cast<int>(m)) = 1.0;
            hit = true;
            break;
          }
        }
      }
      if (!hit) out.at(i, 7) = 1.0;
    }
    return out;
  }
  void backward(const Mat&) override {}
  std::vector<ParamGroup*> param_groups() override { return {}; }

 private:
  TextEncoderKind kind_;
  std::vector<int> markers_;
};

Outcome criterion_prompt_strategies(const PipelineRun& run) {
  Outcome out;

  // identity half: with ten identical per-class embeddings, ensemble_mean and
  // ensemble_max must predict exactly like single on every input
  EncoderRegistry::instance().register_text(
      "marker", [](const Vocabulary& vocab, TextEncoderKind kind, uint64_t) {
        return std::make_unique<MarkerTextEncoder>(vocab, kind);
      });
  Vocabulary vocab = Vocabulary::build({"breast lung thyroid liver ultrasound"});
  DualEncoderModel model =
      DualEncoderModel::build("toy", "marker", TextEncoderKind::contrastive, vocab, 91);
  std::vector<ClassPrompt> classes;
  for (const char* organ : {"breast", "lung", "thyroid", "liver"}) {
    ClassPrompt c;
    c.label = organ;
    c.fields.tissue = organ;
    c.fields.condition = "unspecified condition";
    classes.push_back(c);
  }
  Rng rng(14);
  Mat queries = oracle::random_unit_rows(32, kJointDim, rng);
  ZeroShotResult single = zero_shot_classify(queries, classes, {}, model, PromptStrategy::single);
  ZeroShotResult mean =
      zero_shot_classify(queries, classes, {}, model, PromptStrategy::ensemble_mean);
  ZeroShotResult max =
      zero_shot_classify(queries, classes, {}, model, PromptStrategy::ensemble_max);
  out.require(single.predictions == mean.predictions,
              "ensemble_mean deviates from single on identical templates");
  out.require(single.predictions == max.predictions,
              "ensemble_max deviates from single on identical templates");

  // corpus half: on the trained synthetic run the strategies score within 0.05
  if (!run.ok) {
    out.require(false, "pipeline failed: " + run.error);
    return out;
  }
  try {
    double a_single = run.report.zero_shot_accuracy;
    double a_mean = run_eval(run.config, "ensemble_mean").zero_shot_accuracy;
    double a_max = run_eval(run.config, "ensemble_max").zero_shot_accuracy;
    out.require(std::abs(a_single - a_mean) < 0.05,
                "single " + fmt(a_single) + " vs ensemble_mean " + fmt(a_mean));
    out.require(std::abs(a_single - a_max) < 0.05,
                "single " + fmt(a_single) + " vs ensemble_max " + fmt(a_max));
    out.require(std::abs(a_mean - a_max) < 0.05,
                "ensemble_mean " + fmt(a_mean) + " vs ensemble_max " + fmt(a_max));
    out.note("single " + fmt(a_single) + ", mean " + fmt(a_mean) + ", max " + fmt(a_max));
  } catch (const std::exception& e) {
    out.require(false, std::string("strategy evals failed: ") + e.what());
  }
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    const char* description;
    Outcome outcome;
  };
  std::vector<Criterion> criteria;

  criteria.push_back({"symmetric InfoNCE hits ln N on uniform logits and vanishes when "
                      "the diagonal saturates",
                      criterion_info_nce_identity()});
  criteria.push_back({"analytic InfoNCE gradient matches central finite differences",
                      criterion_gradient_check()});
  criteria.push_back({"AUROC and recall match brute-force oracles; random retrieval averages K/N",
                      criterion_metric_oracles()});
  criteria.push_back({"diversity ratios reproduce the reference corpus arithmetic",
                      criterion_diversity_arithmetic()});
  criteria.push_back({"caption templates render byte-identically to the golden transcription",
                      criterion_template_goldens()});
  criteria.push_back({"stratified split keeps the per-source +/-1 invariant and quarantines "
                      "external records",
                      criterion_split_protocol()});
  criteria.push_back({"freeze configurations update exactly the declared parameter groups",
                      criterion_freeze_matrix()});

  PipelineRun run = run_pipeline();
  criteria.push_back({"synthetic end-to-end run clears the alignment, zero-shot, retrieval "
                      "and probe bars in time",
                      criterion_end_to_end(run)});
  criteria.push_back({"few-shot adaptation reproduces the probe at fraction 1.0 and "
                      "interpolates above chance below it",
                      criterion_few_shot_contract(run)});
  criteria.push_back({"prompt strategies agree exactly on identical templates and closely "
                      "on the synthetic corpus",
                      criterion_prompt_strategies(run)});

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    failures += c.outcome.ok ? 0 : 1;
    std::cout << (c.outcome.ok ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1) << ": "
              << c.description;
    if (!c.outcome.detail.empty()) std::cout << " (" << c.outcome.detail << ")";
    std::cout << "\n";
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << "\n";
  return failures;
}
