#include "uscliplab/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "uscliplab/common.hpp"

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

// -------------------- enums --------------------

const char* organ_name(Organ o) {
  switch (o) {
    case Organ::breast: return "breast";
    case Organ::lung: return "lung";
    case Organ::thyroid: return "thyroid";
    case Organ::liver: return "liver";
  }
  throw std::logic_error("organ_name: bad enum");
}

Organ parse_organ(const std::string& name) {
  for (Organ o : all_organs()) {
    if (name == organ_name(o)) return o;
  }
  throw ConfigError("unknown organ '" + name + "' (expected breast, lung, thyroid or liver)");
}

std::vector<Organ> all_organs() {
  return {Organ::breast, Organ::lung, Organ::thyroid, Organ::liver};
}

std::vector<std::string> canonical_conditions(Organ o) {
  if (o == Organ::lung) return {"healthy", "covid", "other"};
  return {"normal", "benign", "malignant"};
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::external: return "external";
  }
  throw std::logic_error("split_name: bad enum");
}

Split parse_split(const std::string& name) {
  for (Split s : {Split::train, Split::val, Split::test, Split::external}) {
    if (name == split_name(s)) return s;
  }
  throw ConfigError("unknown split '" + name + "'");
}

const char* caption_source_name(CaptionSource s) {
  switch (s) {
    case CaptionSource::expert: return "expert";
    case CaptionSource::template_based: return "template";
    case CaptionSource::llm: return "llm";
  }
  throw std::logic_error("caption_source_name: bad enum");
}

CaptionSource parse_caption_source(const std::string& name) {
  for (CaptionSource s : {CaptionSource::expert, CaptionSource::template_based, CaptionSource::llm}) {
    if (name == caption_source_name(s)) return s;
  }
  throw ConfigError("unknown caption source '" + name + "'");
}

// -------------------- label schema --------------------

void LabelSchema::validate() const {
  if (dataset_name.empty()) throw ConfigError("label schema: dataset name is empty");
  if (condition_values.empty()) throw ConfigError("label schema: no condition values");
  std::set<std::string> values(condition_values.begin(), condition_values.end());
  for (const auto& [raw, canonical] : condition_mapping) {
    if (!values.count(canonical)) {
      throw ConfigError("label schema for '" + dataset_name + "': mapping target '" +
                        canonical + "' is not a canonical condition");
    }
    (void)raw;
  }
}

LabelSchema default_schema(const std::string& dataset_name, Organ organ) {
  LabelSchema s;
  s.dataset_name = dataset_name;
  s.organ = organ;
  s.condition_values = canonical_conditions(organ);
  for (const auto& c : s.condition_values) {
    s.condition_mapping[c] = c;
    std::string cap = c;
    cap[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cap[0])));
    s.condition_mapping[cap] = c;
    std::string upper = c;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    s.condition_mapping[upper] = c;
  }
  return s;
}

std::string map_labels(const std::string& raw, const LabelSchema& schema) {
  auto it = schema.condition_mapping.find(raw);
  if (it != schema.condition_mapping.end()) return it->second;
  std::ostringstream msg;
  msg << "unmapped raw label '" << raw << "' for dataset '" << schema.dataset_name
      << "'; valid keys:";
  for (const auto& [k, v] : schema.condition_mapping) {
    msg << " '" << k << "'";
    (void)v;
  }
  throw ConfigError(msg.str());
}

// -------------------- records --------------------

Image load_image(const SampleRecord& rec) {
  if (rec.embedded_image) return *rec.embedded_image;
  if (rec.image_path.empty()) {
    throw std::runtime_error("record '" + rec.sample_id + "' has no image");
  }
  return read_png(rec.image_path);
}

// -------------------- manifest --------------------

namespace {

std::map<std::string, std::string> parse_metadata(const json& j, const std::string& where) {
  std::map<std::string, std::string> out;
  if (!j.is_object()) throw ConfigError("manifest: metadata of " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) {
      out[k] = v.get<std::string>();
    } else if (v.is_number_integer()) {
      out[k] = std::to_string(v.get<long long>());
    } else if (v.is_number_float()) {
      std::ostringstream ss;
      ss << v.get<double>();
      out[k] = ss.str();
    } else {
      throw ConfigError("manifest: metadata value '" + k + "' of " + where +
                        " must be a string or number");
    }
  }
  return out;
}

}  // namespace

std::vector<ManifestDataset> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw ConfigError("manifest must be a top-level list of dataset blocks");

  std::vector<ManifestDataset> out;
  for (const auto& block : j) {
    ManifestDataset d;
    if (!block.is_object() || !block.contains("name") || !block.contains("organ") ||
        !block.contains("records")) {
      throw ConfigError("manifest: each dataset block needs name, organ and records");
    }
    d.name = block.at("name").get<std::string>();
    d.organ = parse_organ(block.at("organ").get<std::string>());
    d.held_out = block.value("held_out", false);
    for (const auto& r : block.at("records")) {
      ManifestRecord rec;
      if (!r.is_object() || !r.contains("sample_id") || !r.contains("image_path")) {
        throw ConfigError("manifest: unparseable record row in dataset '" + d.name +
                          "' (sample_id and image_path are required)");
      }
      rec.sample_id = r.at("sample_id").get<std::string>();
      rec.image_path = r.at("image_path").get<std::string>();
      if (r.contains("raw_label") && !r.at("raw_label").is_null()) {
        rec.raw_label = r.at("raw_label").get<std::string>();
      }
      if (r.contains("caption") && !r.at("caption").is_null()) {
        rec.caption = r.at("caption").get<std::string>();
      }
      if (r.contains("metadata") && !r.at("metadata").is_null()) {
        rec.metadata = parse_metadata(r.at("metadata"), rec.sample_id);
      }
      for (const auto& [k, v] : r.items()) {
        if (k != "sample_id" && k != "image_path" && k != "raw_label" && k != "caption" &&
            k != "metadata") {
          throw ConfigError("manifest: unknown record field '" + k + "' in dataset '" + d.name + "'");
        }
        (void)v;
      }
      d.records.push_back(std::move(rec));
    }
    out.push_back(std::move(d));
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestDataset>& datasets) {
  ordered_json j = ordered_json::array();
  for (const auto& d : datasets) {
    ordered_json block;
    block["name"] = d.name;
    block["organ"] = organ_name(d.organ);
    block["held_out"] = d.held_out;
    ordered_json records = ordered_json::array();
    for (const auto& r : d.records) {
      ordered_json rec;
      rec["sample_id"] = r.sample_id;
      rec["image_path"] = r.image_path;
      if (r.raw_label) rec["raw_label"] = *r.raw_label;
      if (r.caption) rec["caption"] = *r.caption;
      if (!r.metadata.empty()) {
        ordered_json m;
        for (const auto& [k, v] : r.metadata) m[k] = v;
        rec["metadata"] = m;
      }
      records.push_back(std::move(rec));
    }
    block["records"] = std::move(records);
    j.push_back(std::move(block));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

// -------------------- registry --------------------

void save_registry(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : records) {
    if (r.image_path.empty()) {
      throw std::invalid_argument("save_registry: record '" + r.sample_id +
                                  "' has no image file to reference");
    }
    ordered_json row;
    row["sample_id"] = r.sample_id;
    row["source_dataset"] = r.source_dataset;
    row["organ"] = organ_name(r.organ);
    row["image_path"] = r.image_path;
    row["condition"] = r.condition ? ordered_json(*r.condition) : ordered_json(nullptr);
    row["caption"] = r.caption ? ordered_json(*r.caption) : ordered_json(nullptr);
    row["caption_source"] = caption_source_name(r.caption_source);
    row["split"] = r.split ? ordered_json(split_name(*r.split)) : ordered_json(nullptr);
    row["held_out"] = r.held_out;
    ordered_json m = ordered_json::object();
    for (const auto& [k, v] : r.metadata) m[k] = v;
    row["metadata"] = std::move(m);
    rows.push_back(std::move(row));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write registry: " + path.string());
  out << rows.dump(2) << "\n";
}

std::vector<SampleRecord> load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read registry: " + path.string());
  json rows = json::parse(in);
  if (!rows.is_array()) throw std::runtime_error("registry must be a JSON array");
  std::vector<SampleRecord> records;
  for (const auto& row : rows) {
    SampleRecord r;
    r.sample_id = row.at("sample_id").get<std::string>();
    r.source_dataset = row.at("source_dataset").get<std::string>();
    r.organ = parse_organ(row.at("organ").get<std::string>());
    r.image_path = row.at("image_path").get<std::string>();
    if (!row.at("condition").is_null()) r.condition = row.at("condition").get<std::string>();
    if (!row.at("caption").is_null()) r.caption = row.at("caption").get<std::string>();
    r.caption_source = parse_caption_source(row.at("caption_source").get<std::string>());
    if (!row.at("split").is_null()) r.split = parse_split(row.at("split").get<std::string>());
    r.held_out = row.at("held_out").get<bool>();
    for (auto& [k, v] : row.at("metadata").items()) r.metadata[k] = v.get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

void DatasetRegistry::register_dataset(const ManifestDataset& block, const LabelSchema& schema) {
  schema.validate();
  for (const auto& d : datasets_) {
    if (d.name == block.name) {
      throw ConfigError("dataset '" + block.name + "' registered twice");
    }
  }

  DatasetInfo info;
  info.name = block.name;
  info.organ = block.organ;
  info.held_out = block.held_out;
  info.record_count = static_cast<int>(block.records.size());
  datasets_.push_back(info);

  for (const auto& r : block.records) {
    SampleRecord rec;
    rec.sample_id = r.sample_id;
    rec.source_dataset = block.name;
    rec.organ = block.organ;
    rec.image_path = r.image_path;
    rec.held_out = block.held_out;
    if (block.held_out) rec.split = Split::external;
    if (r.raw_label) rec.condition = map_labels(*r.raw_label, schema);
    if (r.caption) {
      rec.caption = *r.caption;
      rec.caption_source = CaptionSource::expert;
    }
    rec.metadata = r.metadata;
    records_.push_back(std::move(rec));
  }
}

DatasetRegistry DatasetRegistry::from_manifest(const std::filesystem::path& manifest_path,
                                               const std::map<std::string, LabelSchema>& schemas) {
  auto blocks = load_manifest(manifest_path);
  DatasetRegistry reg;
  size_t total = 0;
  for (const auto& block : blocks) {
    auto it = schemas.find(block.name);
    const LabelSchema schema =
        it != schemas.end() ? it->second : default_schema(block.name, block.organ);
    reg.register_dataset(block, schema);
    total += block.records.size();
  }
  if (total == 0) throw ConfigError("manifest contains no records");

  // image paths in the manifest are relative to the manifest file
  std::filesystem::path base = manifest_path.parent_path();
  for (auto& r : reg.records_) {
    if (r.image_path.empty()) continue;
    std::filesystem::path p(r.image_path);
    if (p.is_relative()) r.image_path = (base / p).lexically_normal().string();
  }

  std::set<std::string> seen;
  for (const auto& r : reg.records_) {
    if (!seen.insert(r.sample_id).second) {
      throw ConfigError("duplicate sample_id '" + r.sample_id + "' across datasets");
    }
  }
  reg.sort_by_sample_id();
  return reg;
}

void DatasetRegistry::sort_by_sample_id() {
  std::sort(records_.begin(), records_.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
}

// -------------------- preprocessing ops --------------------

std::vector<SampleRecord> deduplicate(const std::vector<SampleRecord>& records,
                                      const ImageLoader& loader) {
  std::vector<SampleRecord> out;
  // hash -> pixel buffers already kept, for equality verification on collision
  std::unordered_map<uint64_t, std::vector<std::vector<double>>> seen;
  for (const auto& rec : records) {
    Image img = loader(rec);
    uint64_t h = fnv1a64_bytes(&img.width, sizeof(img.width));
    h = fnv1a64_bytes(&img.height, sizeof(img.height), h);
    h = fnv1a64_bytes(img.pixels.data(), img.pixels.size() * sizeof(double), h);

    auto& bucket = seen[h];
    bool duplicate = false;
    for (const auto& prev : bucket) {
      if (prev == img.pixels) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    bucket.push_back(img.pixels);
    out.push_back(rec);
  }
  return out;
}

bool filter_blank_frames(const Image& img, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("blank threshold must be non-negative");
  return mean_intensity(img) >= threshold;  // boundary kept
}

bool filter_blank_frames(const SampleRecord& rec, double threshold, const ImageLoader& loader) {
  return filter_blank_frames(loader(rec), threshold);
}

std::vector<SampleRecord> drop_blank_frames(const std::vector<SampleRecord>& records,
                                            double threshold, const ImageLoader& loader) {
  std::vector<SampleRecord> out;
  for (const auto& rec : records) {
    if (filter_blank_frames(rec, threshold, loader)) out.push_back(rec);
  }
  return out;
}

NormStats compute_norm_stats(const std::vector<SampleRecord>& train_records,
                             const ImageLoader& loader) {
  if (train_records.empty()) {
    throw std::invalid_argument("compute_norm_stats: no train records");
  }
  double sum = 0.0, sumsq = 0.0;
  size_t count = 0;
  for (const auto& rec : train_records) {
    if (!rec.split || *rec.split != Split::train) {
      throw std::invalid_argument("compute_norm_stats: record '" + rec.sample_id +
                                  "' is not in the train split");
    }
    Image img = loader(rec);
    for (double v : img.pixels) {
      sum += v;
      sumsq += v * v;
    }
    count += img.pixels.size();
  }
  NormStats stats;
  stats.mean = sum / static_cast<double>(count);
  double var = sumsq / static_cast<double>(count) - stats.mean * stats.mean;
  if (var < 0.0) var = 0.0;
  stats.std = std::max(std::sqrt(var), 1e-6);
  return stats;
}

Image preprocess_image(const Image& img, const NormStats& stats) {
  if (img.empty()) throw std::invalid_argument("preprocess_image: zero-area image");
  Image resized = resize_bilinear(img, kModelImageSize, kModelImageSize);
  for (double& v : resized.pixels) v = (v - stats.mean) / stats.std;
  return resized;
}

Image preprocess_image(const SampleRecord& rec, const NormStats& stats, const ImageLoader& loader) {
  return preprocess_image(loader(rec), stats);
}

// -------------------- splits --------------------

namespace {

void check_ratios(const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("ratios must sum to 1");
}

}  // namespace

std::array<int, 3> largest_remainder_counts(int n, const std::array<double, 3>& ratios) {
  check_ratios(ratios);
  std::array<int, 3> counts{};
  std::array<double, 3> remainders{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = n * ratios[i];
    counts[i] = static_cast<int>(std::floor(exact + 1e-12));
    remainders[i] = exact - counts[i];
    assigned += counts[i];
  }
  int seats = n - assigned;
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b] + 1e-15; });
  for (int s = 0; s < seats; ++s) counts[order[s % 3]] += 1;
  return counts;
}

SplitAssignment stratified_split(const std::vector<SampleRecord>& records,
                                 const std::array<double, 3>& ratios, uint64_t seed) {
  check_ratios(ratios);
  if (records.empty()) throw std::invalid_argument("stratified_split: no records");

  std::map<std::string, std::vector<std::string>> by_source;
  for (const auto& rec : records) {
    if (rec.held_out || (rec.split && *rec.split == Split::external)) {
      throw std::invalid_argument("stratified_split: external record '" + rec.sample_id +
                                  "' must be excluded from split input");
    }
    if (rec.source_dataset.empty()) {
      throw std::invalid_argument("stratified_split: record '" + rec.sample_id +
                                  "' has no source dataset");
    }
    by_source[rec.source_dataset].push_back(rec.sample_id);
  }

  SplitAssignment out;
  out.ratios = ratios;
  out.seed = seed;
  for (auto& [source, ids] : by_source) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "split", fnv1a64(source)));
    rng.shuffle(ids);
    auto counts = largest_remainder_counts(static_cast<int>(ids.size()), ratios);
    size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      Split split = s == 0 ? Split::train : (s == 1 ? Split::val : Split::test);
      for (int k = 0; k < counts[s]; ++k) out.by_sample[ids[pos++]] = split;
    }
  }
  return out;
}

void apply_split(std::vector<SampleRecord>& records, const SplitAssignment& assignment) {
  for (auto& rec : records) {
    if (rec.held_out) {
      rec.split = Split::external;
      continue;
    }
    auto it = assignment.by_sample.find(rec.sample_id);
    if (it == assignment.by_sample.end()) {
      throw std::runtime_error("split assignment is missing sample '" + rec.sample_id + "'");
    }
    rec.split = it->second;
  }
}

void SplitAssignment::save(const std::filesystem::path& path) const {
  ordered_json j;
  j["ratios"] = ratios;
  j["seed"] = seed;
  ordered_json assignment;
  for (const auto& [id, split] : by_sample) assignment[id] = split_name(split);
  j["assignment"] = std::move(assignment);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file: " + path.string());
  out << j.dump(2) << "\n";
}

SplitAssignment SplitAssignment::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path.string());
  json j;
  in >> j;
  SplitAssignment out;
  auto r = j.at("ratios");
  for (int i = 0; i < 3; ++i) out.ratios[i] = r.at(i).get<double>();
  out.seed = j.at("seed").get<uint64_t>();
  for (const auto& [id, split] : j.at("assignment").items()) {
    out.by_sample[id] = parse_split(split.get<std::string>());
  }
  return out;
}

}  // namespace usclip
