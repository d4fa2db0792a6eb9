#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uscliplab/common.hpp"
#include "uscliplab/corpus.hpp"

namespace usclip {

// -------------------- metadata fields --------------------

struct MetadataFields {
  std::optional<std::string> tissue;
  std::optional<std::string> condition;
  std::optional<std::string> patient_info;
  std::optional<std::string> region;
  std::optional<std::string> findings;
  std::map<std::string, std::string> raw;  // source columns, verbatim
};

// Resolves placeholder inputs from a record's organ, canonical condition and
// raw metadata columns:
//   patient_info <- Age, Gender, Pregnancy status
//   region       <- Zone, Tissue composition, Tissue   (first present wins)
//   findings     <- Shape, Margin, Echogenicity, Posterior features,
//                   Consolidation, Effusion            (joined with ", ")
//   condition    <- Diagnosis, Classification, BI-RADS, Interpretation,
//                   Zone-derived severity, else the mapped canonical label
// Column names match case-insensitively.
MetadataFields build_metadata_fields(const SampleRecord& rec);

// -------------------- template grammar --------------------

class TemplateLibrary {
 public:
  static const TemplateLibrary& builtin();

  // tier in 1..3, index in 1..10
  const std::string& get(int tier, int index) const;
  int templates_per_tier() const { return 10; }
  int tiers() const { return 3; }

 private:
  TemplateLibrary();
  std::vector<std::vector<std::string>> tiers_;
};

// Richest satisfiable tier:
//   3 if patient_info or findings resolve, or a region source more specific
//     than the bare tissue label (Zone / Tissue composition) is present
//   2 if a condition resolves
//   1 otherwise
// Throws when tissue is absent: a caption cannot be grounded at all.
int select_tier(const MetadataFields& fields);

struct Caption {
  std::string text;
  int tier = 0;  // 1..3 for template captions, 0 for expert/llm
  std::optional<int> template_index;
  CaptionSource source = CaptionSource::template_based;
};

// Fallback strings for tier-3 placeholders that fail to resolve.
const std::map<std::string, std::string>& placeholder_fallbacks();

// Renders one caption. When index is not given, a template is drawn
// uniformly from the tier via rng. Tier-1 needs tissue; tier-2 additionally
// needs condition; tier-3 substitutes documented fallbacks for whatever is
// missing (tissue must still be present for select_tier to allow any tier).
Caption render_caption(const TemplateLibrary& lib, int tier, std::optional<int> index,
                       const MetadataFields& fields, Rng& rng);

// -------------------- diversity --------------------

struct DiversityRatios {
  double distinct1 = 0.0;
  double distinct2 = 0.0;  // bigrams never cross caption boundaries
  double mean_len = 0.0;
};

// Pure arithmetic on published-style counts:
//   distinct1 = unique_unigrams / total_tokens
//   distinct2 = unique_bigrams / (total_tokens - caption_count), 0 when the
//               denominator is 0
//   mean_len  = total_tokens / caption_count
DiversityRatios diversity_ratios(long long total_tokens, long long unique_unigrams,
                                 long long unique_bigrams, long long caption_count);

struct DiversityReport {
  long long caption_count = 0;
  long long total_tokens = 0;
  long long unique_unigrams = 0;
  long long unique_bigrams = 0;
  DiversityRatios ratios;
  double median_len = 0.0;
  double p90_len = 0.0;
};

// Tokenization for diversity metrics: lowercase, punctuation characters
// removed, whitespace split.
std::vector<std::string> diversity_tokens(const std::string& caption);

DiversityReport diversity_report(const std::vector<std::string>& captions);

// -------------------- caption file io --------------------

struct CaptionRow {
  std::string sample_id;
  Caption caption;
};

void save_captions_jsonl(const std::filesystem::path& path, const std::vector<CaptionRow>& rows);
std::vector<CaptionRow> load_captions_jsonl(const std::filesystem::path& path);

}  // namespace usclip
