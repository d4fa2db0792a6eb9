#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uscliplab/common.hpp"
#include "uscliplab/corpus.hpp"
#include "uscliplab/encoders.hpp"

namespace usclip {

// -------------------- loss --------------------

struct InfoNce {
  double loss = 0.0;
  Mat grad;  // dL/dlogits, same shape as the input
};

// Symmetric contrastive loss over an N x N logit table whose matched pairs
// sit on the diagonal: the mean of a row-wise and a column-wise cross-entropy.
// Returns the loss together with its exact logit gradient. Requires a square
// table with N >= 2.
InfoNce info_nce_loss(const Mat& logits);

// -------------------- schedule --------------------

// Half-cosine decay evaluated at integer epochs: peak at epoch 0, floor at
// epoch == total_epochs. Out-of-range epochs are an error, not a clamp.
double cosine_lr(int epoch, int total_epochs, double peak_lr, double floor_lr = 0.0);

// -------------------- augmentation --------------------

inline constexpr int kAugResize = 288;

// Deterministic core: bilinear resize to 288, crop a 256 window at (ox, oy),
// then optionally mirror horizontally. Offsets must lie in [0, 32].
Image augment_with(const Image& img, int ox, int oy, bool flip);

// Training view: offsets drawn as below(33) for x then y, then a coin flip.
Image augment_train(const Image& img, Rng& rng);

// Evaluation view: resize to 288 and take the centred 256 crop.
Image eval_view(const Image& img);

// -------------------- freeze configurations --------------------

struct FreezeConfig {
  bool train_image_encoder = true;
  bool train_text_encoder = true;

  // heads_only | image_enc | text_enc | full
  static FreezeConfig from_name(const std::string& name);
  std::string name() const;
};

// Applies the freeze flags to the encoder parameter groups. Projection heads
// and the temperature always stay trainable.
void configure_trainable(DualEncoderModel& model, const FreezeConfig& freeze);

size_t trainable_param_count(DualEncoderModel& model);

// -------------------- optimizer --------------------

// Decoupled weight decay: the Adam step uses the raw gradient only, then
// shrinks decayed groups by lr * wd * value. Frozen groups are untouched.
class AdamW {
 public:
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void init(const std::vector<ParamGroup*>& groups);
  void step(const std::vector<ParamGroup*>& groups, double lr);
  int step_count() const { return t_; }

  // checkpoint plumbing
  const std::vector<double>& m_state(size_t i) const { return m_[i]; }
  const std::vector<double>& v_state(size_t i) const { return v_[i]; }
  void restore(int t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// -------------------- train loop --------------------

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-4;
  double lr_floor = 0.0;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double tau_init = 0.07;
  uint64_t seed = 42;
  FreezeConfig freeze;
};

struct TrainPair {
  std::string sample_id;
  Image image;  // raw (pre-augmentation, unnormalized)
  std::string caption;
};

struct EpochLogEntry {
  int epoch = 0;  // 0 is the pre-training snapshot
  double train_loss = 0.0;
  double lr = 0.0;
  double tau = 0.0;
  double val_paired_alignment = 0.0;
};

void save_train_log(const std::vector<EpochLogEntry>& log, const std::filesystem::path& path);
std::vector<EpochLogEntry> load_train_log(const std::filesystem::path& path);

// -------------------- checkpoints --------------------

struct CheckpointGroup {
  std::string name;
  std::vector<int> shape;
  bool trainable = true;
  bool apply_weight_decay = true;
};

// Full training state: model weights, optimizer moments and step count, and
// enough construction metadata to rebuild the model. Saving and loading a
// checkpoint is bit-exact, and no RNG state is stored: every random stream is
// derived from (seed, purpose, epoch, step), so a resumed run replays the
// exact draws of an uninterrupted one.
struct Checkpoint {
  std::string format = "uscliplab-checkpoint-v1";
  std::string config_hash;
  uint64_t seed = 0;
  int epoch = 0;  // epochs completed
  int adam_step = 0;
  double best_val_alignment = -2.0;
  std::string image_backend = "toy";
  std::string text_backend = "toy";
  TextEncoderKind text_kind = TextEncoderKind::contrastive;
  TrainConfig config;
  Vocabulary vocab;
  std::vector<CheckpointGroup> groups;
  std::map<std::string, std::vector<double>> weights;
  std::map<std::string, std::vector<double>> adam_m;
  std::map<std::string, std::vector<double>> adam_v;
};

Checkpoint capture_checkpoint(DualEncoderModel& model, const AdamW& optimizer,
                              const TrainConfig& config, int epoch, double best_val_alignment,
                              const std::string& config_hash);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Rebuilds the model from construction metadata and loads the stored weights.
DualEncoderModel rebuild_model(const Checkpoint& ckpt);

// -------------------- fit --------------------

struct FitResult {
  std::vector<EpochLogEntry> log;  // epochs..0..N (entry per epoch plus the snapshot)
  Checkpoint best;
  Checkpoint last;
  int best_epoch = 0;
};

// Trains the model in place. Emits one log entry per epoch plus an epoch-0
// snapshot (evaluation-mode loss and alignment before any update). Batches
// follow the shuffled order; a trailing batch is kept when it has at least
// two pairs and dropped when it would be a singleton, since the contrastive
// loss needs in-batch negatives. When `resume` is given, training continues
// from its stored epoch and optimizer state and reproduces an uninterrupted
// run bit for bit.
FitResult fit(DualEncoderModel& model, const std::vector<TrainPair>& train_pairs,
              const std::vector<TrainPair>& val_pairs, const TrainConfig& config,
              const NormStats& stats, const std::string& config_hash = "",
              const Checkpoint* resume = nullptr);

}  // namespace usclip
