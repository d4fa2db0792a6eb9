#include "uscliplab/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "uscliplab/evaluation.hpp"
#include "uscliplab/tokenizer.hpp"

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// wraps json type errors with the dotted field name
template <typename T>
void read_field(const json& section, const char* key, const char* dotted, T& target) {
  if (!section.contains(key)) return;
  try {
    section.at(key).get_to(target);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + dotted + "': " + e.what());
  }
}

void reject_unknown_keys(const json& section, const std::string& prefix,
                         const std::set<std::string>& known) {
  if (!section.is_object()) {
    throw ConfigError("config section '" + prefix + "' must be an object");
  }
  for (const auto& [key, value] : section.items()) {
    if (!known.count(key)) {
      std::string dotted = prefix.empty() ? key : prefix + "." + key;
      throw ConfigError("unknown config key '" + dotted + "'");
    }
    (void)value;
  }
}

void apply_override(json& doc, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "' is not key=value");
  }
  std::string key = spec.substr(0, eq);
  std::string value = spec.substr(eq + 1);

  json* node = &doc;
  size_t start = 0;
  while (true) {
    size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + spec + "' has an empty path segment");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      break;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

void validate(const RunConfig& c) {
  if (c.paths.out_dir.empty()) throw ConfigError("paths.out_dir is required");
  if (c.corpus.blank_threshold < 0.0) {
    throw ConfigError("corpus.blank_threshold must be non-negative");
  }
  double ratio_sum = c.corpus.ratios[0] + c.corpus.ratios[1] + c.corpus.ratios[2];
  for (double r : c.corpus.ratios) {
    if (r <= 0.0) throw ConfigError("corpus.ratios entries must be positive");
  }
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw ConfigError("ratios must sum to 1");

  if (c.captions.mode != "template" && c.captions.mode != "llm") {
    throw ConfigError("captions.mode must be 'template' or 'llm'");
  }
  if (c.captions.tier_policy != "auto" && c.captions.tier_policy != "1" &&
      c.captions.tier_policy != "2" && c.captions.tier_policy != "3") {
    throw ConfigError("captions.tier_policy must be auto, 1, 2 or 3");
  }
  if (c.captions.retries < 0) throw ConfigError("captions.retries must be non-negative");

  if (c.encoders.image_backend.empty()) throw ConfigError("encoders.image_backend is required");
  if (c.encoders.text_backend.empty()) throw ConfigError("encoders.text_backend is required");
  parse_text_encoder_kind(c.encoders.text_kind);  // throws ConfigError on bad value

  if (c.training.epochs < 1) throw ConfigError("training.epochs must be at least 1");
  if (c.training.batch_size < 2) throw ConfigError("training.batch_size must be at least 2");
  if (c.training.lr <= 0.0) throw ConfigError("training.lr must be positive");
  if (c.training.lr_floor < 0.0 || c.training.lr_floor > c.training.lr) {
    throw ConfigError("training.lr_floor must lie in [0, training.lr]");
  }
  if (c.training.weight_decay < 0.0) throw ConfigError("training.weight_decay must be non-negative");
  if (c.training.tau_init < 0.01 || c.training.tau_init > 1.0) {
    throw ConfigError("training.tau_init must lie in [0.01, 1.0]");
  }

  parse_prompt_strategy(c.evaluation.strategy);  // throws ConfigError on bad value
  if (c.evaluation.recall_ks.empty()) throw ConfigError("evaluation.recall_ks must be non-empty");
  for (int k : c.evaluation.recall_ks) {
    if (k < 1) throw ConfigError("evaluation.recall_ks entries must be positive");
  }
  if (c.evaluation.fractions.empty()) throw ConfigError("evaluation.fractions must be non-empty");
  for (double f : c.evaluation.fractions) {
    if (f <= 0.0 || f > 1.0) throw ConfigError("evaluation.fractions entries must lie in (0, 1]");
  }
  if (c.evaluation.few_shot_seeds.empty()) {
    throw ConfigError("evaluation.few_shot_seeds must be non-empty");
  }
  if (c.evaluation.probe_l2 < 0.0) throw ConfigError("evaluation.probe_l2 must be non-negative");
  if (c.evaluation.probe_input != "joint" && c.evaluation.probe_input != "features") {
    throw ConfigError("evaluation.probe_input must be 'joint' or 'features'");
  }
}

RunConfig from_json(const json& doc) {
  reject_unknown_keys(doc, "", {"seed", "paths", "corpus", "captions", "encoders", "training",
                                "evaluation"});
  RunConfig c;
  read_field(doc, "seed", "seed", c.seed);

  if (doc.contains("paths")) {
    const json& s = doc.at("paths");
    reject_unknown_keys(s, "paths", {"manifest", "out_dir"});
    read_field(s, "manifest", "paths.manifest", c.paths.manifest);
    read_field(s, "out_dir", "paths.out_dir", c.paths.out_dir);
  }
  if (doc.contains("corpus")) {
    const json& s = doc.at("corpus");
    reject_unknown_keys(s, "corpus", {"blank_threshold", "ratios", "dedup"});
    read_field(s, "blank_threshold", "corpus.blank_threshold", c.corpus.blank_threshold);
    if (s.contains("ratios")) {
      std::vector<double> r;
      read_field(s, "ratios", "corpus.ratios", r);
      if (r.size() != 3) throw ConfigError("corpus.ratios must have exactly 3 entries");
      std::copy(r.begin(), r.end(), c.corpus.ratios.begin());
    }
    read_field(s, "dedup", "corpus.dedup", c.corpus.dedup);
  }
  if (doc.contains("captions")) {
    const json& s = doc.at("captions");
    reject_unknown_keys(s, "captions",
                        {"mode", "tier_policy", "llm_endpoint", "llm_model", "grounding_filter",
                         "retries"});
    read_field(s, "mode", "captions.mode", c.captions.mode);
    if (s.contains("tier_policy") && s.at("tier_policy").is_number_integer()) {
      // a bare tier number is the natural override spelling; fold it into the string form
      c.captions.tier_policy = std::to_string(s.at("tier_policy").get<int>());
    } else {
      read_field(s, "tier_policy", "captions.tier_policy", c.captions.tier_policy);
    }
    read_field(s, "llm_endpoint", "captions.llm_endpoint", c.captions.llm_endpoint);
    read_field(s, "llm_model", "captions.llm_model", c.captions.llm_model);
    read_field(s, "grounding_filter", "captions.grounding_filter", c.captions.grounding_filter);
    read_field(s, "retries", "captions.retries", c.captions.retries);
  }
  if (doc.contains("encoders")) {
    const json& s = doc.at("encoders");
    reject_unknown_keys(s, "encoders", {"image_backend", "text_backend", "text_kind"});
    read_field(s, "image_backend", "encoders.image_backend", c.encoders.image_backend);
    read_field(s, "text_backend", "encoders.text_backend", c.encoders.text_backend);
    read_field(s, "text_kind", "encoders.text_kind", c.encoders.text_kind);
  }
  if (doc.contains("training")) {
    const json& s = doc.at("training");
    reject_unknown_keys(s, "training",
                        {"epochs", "batch_size", "lr", "lr_floor", "weight_decay", "tau_init",
                         "freeze"});
    read_field(s, "epochs", "training.epochs", c.training.epochs);
    read_field(s, "batch_size", "training.batch_size", c.training.batch_size);
    read_field(s, "lr", "training.lr", c.training.lr);
    read_field(s, "lr_floor", "training.lr_floor", c.training.lr_floor);
    read_field(s, "weight_decay", "training.weight_decay", c.training.weight_decay);
    read_field(s, "tau_init", "training.tau_init", c.training.tau_init);
    if (s.contains("freeze")) {
      std::string freeze;
      read_field(s, "freeze", "training.freeze", freeze);
      c.training.freeze = FreezeConfig::from_name(freeze);
    }
  }
  if (doc.contains("evaluation")) {
    const json& s = doc.at("evaluation");
    reject_unknown_keys(s, "evaluation",
                        {"strategy", "recall_ks", "fractions", "few_shot_seeds", "probe_l2",
                         "probe_input"});
    read_field(s, "strategy", "evaluation.strategy", c.evaluation.strategy);
    read_field(s, "recall_ks", "evaluation.recall_ks", c.evaluation.recall_ks);
    read_field(s, "fractions", "evaluation.fractions", c.evaluation.fractions);
    read_field(s, "few_shot_seeds", "evaluation.few_shot_seeds", c.evaluation.few_shot_seeds);
    read_field(s, "probe_l2", "evaluation.probe_l2", c.evaluation.probe_l2);
    read_field(s, "probe_input", "evaluation.probe_input", c.evaluation.probe_input);
  }

  c.training.seed = c.seed;
  return c;
}

}  // namespace

std::string config_canonical_json(const RunConfig& c) {
  ordered_json doc = {
      {"seed", c.seed},
      {"paths", {{"manifest", c.paths.manifest}, {"out_dir", c.paths.out_dir}}},
      {"corpus",
       {{"blank_threshold", c.corpus.blank_threshold},
        {"ratios", c.corpus.ratios},
        {"dedup", c.corpus.dedup}}},
      {"captions",
       {{"mode", c.captions.mode},
        {"tier_policy", c.captions.tier_policy},
        {"llm_endpoint", c.captions.llm_endpoint},
        {"llm_model", c.captions.llm_model},
        {"grounding_filter", c.captions.grounding_filter},
        {"retries", c.captions.retries}}},
      {"encoders",
       {{"image_backend", c.encoders.image_backend},
        {"text_backend", c.encoders.text_backend},
        {"text_kind", c.encoders.text_kind}}},
      {"training",
       {{"epochs", c.training.epochs},
        {"batch_size", c.training.batch_size},
        {"lr", c.training.lr},
        {"lr_floor", c.training.lr_floor},
        {"weight_decay", c.training.weight_decay},
        {"tau_init", c.training.tau_init},
        {"freeze", c.training.freeze.name()}}},
      {"evaluation",
       {{"strategy", c.evaluation.strategy},
        {"recall_ks", c.evaluation.recall_ks},
        {"fractions", c.evaluation.fractions},
        {"few_shot_seeds", c.evaluation.few_shot_seeds},
        {"probe_l2", c.evaluation.probe_l2},
        {"probe_input", c.evaluation.probe_input}}},
  };
  return doc.dump();
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);

  RunConfig c = from_json(doc);
  validate(c);
  c.config_hash = hex64(fnv1a64(config_canonical_json(c)));
  return c;
}

std::string model_tag(const RunConfig& config) { return config.training.freeze.name(); }

std::filesystem::path manifest_path(const RunConfig& config) {
  if (!config.paths.manifest.empty()) return config.paths.manifest;
  return std::filesystem::path(config.paths.out_dir) / "corpus" / "manifest.json";
}

}  // namespace usclip
