#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uscliplab/image.hpp"

namespace usclip {

enum class Organ { breast, lung, thyroid, liver };

const char* organ_name(Organ o);
Organ parse_organ(const std::string& name);
std::vector<Organ> all_organs();

// Canonical condition vocabulary per organ: lung uses {healthy, covid, other},
// everything else uses {normal, benign, malignant}.
std::vector<std::string> canonical_conditions(Organ o);

enum class Split { train, val, test, external };
const char* split_name(Split s);
Split parse_split(const std::string& name);

enum class CaptionSource { expert, template_based, llm };
const char* caption_source_name(CaptionSource s);
CaptionSource parse_caption_source(const std::string& name);

// -------------------- label schema --------------------

struct LabelSchema {
  std::string dataset_name;
  Organ organ = Organ::breast;
  std::vector<std::string> condition_values;            // canonical, ordered
  std::map<std::string, std::string> condition_mapping; // raw label -> canonical

  void validate() const;
};

// Identity mapping over the organ's canonical conditions plus common case
// variants (capitalized, upper-case).
LabelSchema default_schema(const std::string& dataset_name, Organ organ);

// raw label -> canonical condition; throws listing the valid keys on a miss.
std::string map_labels(const std::string& raw, const LabelSchema& schema);

// -------------------- records --------------------

struct SampleRecord {
  std::string sample_id;
  std::string source_dataset;
  Organ organ = Organ::breast;
  std::string image_path;              // empty when the image is embedded
  std::optional<Image> embedded_image;
  std::optional<std::string> condition;  // canonical
  std::optional<std::string> caption;
  CaptionSource caption_source = CaptionSource::template_based;
  std::optional<Split> split;
  bool held_out = false;
  std::map<std::string, std::string> metadata;  // raw columns, verbatim
};

using ImageLoader = std::function<Image(const SampleRecord&)>;

// Default loader: embedded image if present, else PNG from image_path.
Image load_image(const SampleRecord& rec);

// -------------------- manifest --------------------

struct ManifestRecord {
  std::string sample_id;
  std::string image_path;
  std::optional<std::string> raw_label;
  std::optional<std::string> caption;
  std::map<std::string, std::string> metadata;
};

struct ManifestDataset {
  std::string name;
  Organ organ = Organ::breast;
  bool held_out = false;
  std::vector<ManifestRecord> records;
};

std::vector<ManifestDataset> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestDataset>& datasets);

// -------------------- registry --------------------

struct DatasetInfo {
  std::string name;
  Organ organ = Organ::breast;
  bool held_out = false;
  int record_count = 0;
};

class DatasetRegistry {
 public:
  // Registers one dataset block. Raw labels are mapped through the schema;
  // expert captions pass through verbatim. Held-out datasets get
  // Split::external immediately and never enter internal splitting.
  void register_dataset(const ManifestDataset& block, const LabelSchema& schema);

  // Registers every block of a manifest file. Schemas are looked up by
  // dataset name in `schemas`; missing entries fall back to default_schema.
  static DatasetRegistry from_manifest(const std::filesystem::path& manifest_path,
                                       const std::map<std::string, LabelSchema>& schemas = {});

  // Deterministic record order regardless of ingestion interleaving.
  void sort_by_sample_id();

  std::vector<SampleRecord>& records() { return records_; }
  const std::vector<SampleRecord>& records() const { return records_; }
  const std::vector<DatasetInfo>& datasets() const { return datasets_; }

 private:
  std::vector<SampleRecord> records_;
  std::vector<DatasetInfo> datasets_;
};

// Canonical record list persisted between pipeline stages. Embedded images
// are not serialized; registry records must be file-backed.
void save_registry(const std::filesystem::path& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> load_registry(const std::filesystem::path& path);

// -------------------- preprocessing ops --------------------

// Drops exact-duplicate images (content hash of the decoded pixel buffer,
// equality-verified on hash match). The first record in input order wins.
std::vector<SampleRecord> deduplicate(const std::vector<SampleRecord>& records,
                                      const ImageLoader& loader = load_image);

// Keep rule for near-empty frames: drop iff mean intensity < threshold.
bool filter_blank_frames(const Image& img, double threshold);
bool filter_blank_frames(const SampleRecord& rec, double threshold,
                         const ImageLoader& loader = load_image);
std::vector<SampleRecord> drop_blank_frames(const std::vector<SampleRecord>& records,
                                            double threshold,
                                            const ImageLoader& loader = load_image);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

// Population statistics over all pixels of all train-split records.
// std is clamped below at 1e-6.
NormStats compute_norm_stats(const std::vector<SampleRecord>& train_records,
                             const ImageLoader& loader = load_image);

inline constexpr int kModelImageSize = 256;

// Bilinear resize to 256x256 followed by (value - mean) / std.
Image preprocess_image(const Image& img, const NormStats& stats);
Image preprocess_image(const SampleRecord& rec, const NormStats& stats,
                       const ImageLoader& loader = load_image);

// -------------------- splits --------------------

struct SplitAssignment {
  std::array<double, 3> ratios{0.7, 0.15, 0.15};  // train, val, test
  uint64_t seed = 0;
  std::map<std::string, Split> by_sample;  // never contains Split::external

  void save(const std::filesystem::path& path) const;
  static SplitAssignment load(const std::filesystem::path& path);
};

// Largest-remainder seat allocation of n records over the three ratios.
// Ties in the remainders resolve toward the earlier split (train, val, test).
std::array<int, 3> largest_remainder_counts(int n, const std::array<double, 3>& ratios);

// Per-source-dataset stratified split. Input must not contain external
// records; ratios must be non-negative and sum to 1.
SplitAssignment stratified_split(const std::vector<SampleRecord>& records,
                                 const std::array<double, 3>& ratios, uint64_t seed);

void apply_split(std::vector<SampleRecord>& records, const SplitAssignment& assignment);

}  // namespace usclip
