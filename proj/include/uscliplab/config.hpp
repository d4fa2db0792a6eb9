#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "uscliplab/training.hpp"

namespace usclip {

// One config file drives every pipeline stage. Unknown keys are rejected by
// name; defaults fill in the published recipe (20 epochs, batch 32, lr 1e-4,
// weight decay 1e-4, temperature 0.07).

struct PathsConfig {
  std::string manifest;  // optional: empty means <out_dir>/corpus/manifest.json
  std::string out_dir;   // required; all artifacts land under it
};

struct CorpusConfig {
  double blank_threshold = 0.04;
  std::array<double, 3> ratios{0.7, 0.15, 0.15};  // train/val/test
  bool dedup = true;
};

struct CaptionConfig {
  std::string mode = "template";    // template | llm
  std::string tier_policy = "auto";  // auto | 1 | 2 | 3
  std::string llm_endpoint;          // env var can supply this instead
  std::string llm_model = "default";
  bool grounding_filter = true;
  int retries = 3;
};

struct EncoderSelection {
  std::string image_backend = "toy";
  std::string text_backend = "toy";
  std::string text_kind = "contrastive";  // contrastive | clinical
};

struct EvaluationOptions {
  std::string strategy = "single";  // single | ensemble_mean | ensemble_max
  std::vector<int> recall_ks{1, 5, 10};
  std::vector<double> fractions{0.05, 0.10, 1.0};
  std::vector<uint64_t> few_shot_seeds{1, 2, 3, 4, 5};
  double probe_l2 = 1.0;
  std::string probe_input = "joint";  // joint | features
};

struct RunConfig {
  uint64_t seed = 42;
  PathsConfig paths;
  CorpusConfig corpus;
  CaptionConfig captions;
  EncoderSelection encoders;
  TrainConfig training;  // training.seed mirrors the top-level seed
  EvaluationOptions evaluation;
  std::string config_hash;  // hash of the canonical, fully-defaulted form
};

// Parses, applies dotted --override key=value pairs, validates (unknown keys
// and bad values are ConfigErrors naming the field), and fills the hash.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});

// Canonical serialization used for hashing and provenance.
std::string config_canonical_json(const RunConfig& config);

// Short tag naming the trained model variant; currently the freeze name.
std::string model_tag(const RunConfig& config);

// Resolved path helpers (fixed relative names under out_dir).
std::filesystem::path manifest_path(const RunConfig& config);

}  // namespace usclip
