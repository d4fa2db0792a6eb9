#include "uscliplab/captions.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

// -------------------- metadata fields --------------------

namespace {

std::optional<std::string> column_ci(const std::map<std::string, std::string>& raw,
                                     const std::string& key) {
  std::string want = to_lower(key);
  for (const auto& [k, v] : raw) {
    if (to_lower(k) == want && !trim(v).empty()) return trim(v);
  }
  return std::nullopt;
}

std::optional<std::string> first_column(const std::map<std::string, std::string>& raw,
                                        const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    if (auto v = column_ci(raw, k)) return v;
  }
  return std::nullopt;
}

}  // namespace

MetadataFields build_metadata_fields(const SampleRecord& rec) {
  MetadataFields f;
  f.raw = rec.metadata;
  f.tissue = organ_name(rec.organ);

  auto age = column_ci(rec.metadata, "Age");
  auto gender = column_ci(rec.metadata, "Gender");
  auto pregnancy = column_ci(rec.metadata, "Pregnancy status");
  if (age || gender || pregnancy) {
    std::string s = "a";
    if (age) s += " " + *age + "-year-old";
    if (gender) s += " " + to_lower(*gender);
    s += " patient";
    if (pregnancy) s += ", " + to_lower(*pregnancy);
    f.patient_info = s;
  }

  f.region = first_column(rec.metadata, {"Zone", "Tissue composition", "Tissue"});

  std::vector<std::string> finding_parts;
  for (const auto& key :
       {"Shape", "Margin", "Echogenicity", "Posterior features", "Consolidation", "Effusion"}) {
    if (auto v = column_ci(rec.metadata, key)) finding_parts.push_back(*v);
  }
  if (!finding_parts.empty()) {
    std::string joined;
    for (size_t i = 0; i < finding_parts.size(); ++i) {
      if (i) joined += ", ";
      joined += finding_parts[i];
    }
    f.findings = joined;
  }

  f.condition = first_column(
      rec.metadata, {"Diagnosis", "Classification", "BI-RADS", "Interpretation", "Zone-derived severity"});
  if (!f.condition && rec.condition) f.condition = *rec.condition;
  return f;
}

// -------------------- template grammar --------------------

TemplateLibrary::TemplateLibrary() {
  tiers_ = {
      {
          "An ultrasound image of {Tissue}.",
          "A B-mode ultrasound showing {Tissue}.",
          "Sonographic appearance of {Tissue}.",
          "This is an ultrasound image of {Tissue}.",
          "A grayscale ultrasound image demonstrating {Tissue}.",
          "Ultrasound findings consistent with {Tissue}.",
          "A clinical ultrasound scan of {Tissue}.",
          "An echographic image of {Tissue}.",
          "This sonogram shows {Tissue}.",
          "A diagnostic ultrasound image of {Tissue}, obtained for clinical evaluation.",
      },
      {
          "An ultrasound image of {Tissue} with {Condition} findings.",
          "A B-mode ultrasound of {Tissue}, consistent with {Condition}.",
          "Sonographic appearance of {Condition} {Tissue}.",
          "This ultrasound demonstrates {Tissue} exhibiting features of {Condition}.",
          "A clinical ultrasound scan of {Tissue}, indicative of {Condition} pathology.",
          "Echographic findings of {Tissue} showing {Condition} characteristics.",
          "This sonogram of {Tissue} is consistent with a {Condition} diagnosis.",
          "A diagnostic ultrasound image of {Tissue}, with imaging features suggestive of {Condition}.",
          "Ultrasound of {Tissue} presenting sonographic signs of {Condition}.",
          "A grayscale ultrasound demonstrating {Condition} changes in {Tissue}.",
      },
      {
          "Ultrasound of {Region} in {PatientInfo}. {Findings}. Assessment: {Condition}.",
          "Sonographic findings in {Region}: {Findings}. {PatientInfo}. Diagnosis: {Condition}.",
          "An ultrasound image of {Region} consistent with {Condition}. {Findings}.",
          "{Region} evaluated by sonography. {Findings}. Conclusion: {Condition}.",
          "{PatientInfo} underwent ultrasound imaging. {Findings} identified in {Region}, "
          "suggestive of {Condition}.",
          "Sonography: {Region}, {PatientInfo}. {Findings}. {Condition}.",
          "{PatientInfo}. Ultrasound of {Region} reveals {Findings}, consistent with {Condition}.",
          "{Condition} pattern on ultrasound. {Region} demonstrates {Findings}. {PatientInfo}.",
          "Sonographic examination of {Region}. {Findings}. {Condition}.",
          "Ultrasound performed on {PatientInfo}. Examination of {Region} revealed {Findings}. "
          "Impression: {Condition}.",
      },
  };
}

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary lib;
  return lib;
}

const std::string& TemplateLibrary::get(int tier, int index) const {
  if (tier < 1 || tier > 3) throw std::invalid_argument("template tier must be 1, 2 or 3");
  if (index < 1 || index > 10) throw std::invalid_argument("template index must be in 1..10");
  return tiers_[tier - 1][index - 1];
}

int select_tier(const MetadataFields& fields) {
  if (!fields.tissue || trim(*fields.tissue).empty()) {
    throw std::invalid_argument("select_tier: tissue is required to ground a caption");
  }
  bool specific_region =
      column_ci(fields.raw, "Zone").has_value() || column_ci(fields.raw, "Tissue composition").has_value();
  if (fields.patient_info || fields.findings || specific_region) return 3;
  if (fields.condition) return 2;
  return 1;
}

const std::map<std::string, std::string>& placeholder_fallbacks() {
  static const std::map<std::string, std::string> fallbacks = {
      {"PatientInfo", "a patient"},
      {"Region", "unknown region"},
      {"Findings", "unremarkable findings"},
      {"Condition", "unspecified condition"},
  };
  return fallbacks;
}

Caption render_caption(const TemplateLibrary& lib, int tier, std::optional<int> index,
                       const MetadataFields& fields, Rng& rng) {
  if (tier < 1 || tier > 3) throw std::invalid_argument("render_caption: tier must be 1, 2 or 3");
  int idx = index ? *index : 1 + static_cast<int>(rng.below(10));
  std::string text = lib.get(tier, idx);  // validates the index

  if (!fields.tissue) throw std::invalid_argument("render_caption: tissue is required");
  if (tier == 1) {
    text = replace_all(text, "{Tissue}", *fields.tissue);
  } else if (tier == 2) {
    if (!fields.condition) {
      throw std::invalid_argument("render_caption: tier 2 requires a condition");
    }
    text = replace_all(text, "{Tissue}", *fields.tissue);
    text = replace_all(text, "{Condition}", *fields.condition);
  } else {
    const auto& fb = placeholder_fallbacks();
    text = replace_all(text, "{PatientInfo}",
                       fields.patient_info ? *fields.patient_info : fb.at("PatientInfo"));
    text = replace_all(text, "{Region}", fields.region ? *fields.region : fb.at("Region"));
    text = replace_all(text, "{Findings}", fields.findings ? *fields.findings : fb.at("Findings"));
    text = replace_all(text, "{Condition}",
                       fields.condition ? *fields.condition : fb.at("Condition"));
  }
  if (text.find('{') != std::string::npos) {
    throw std::logic_error("render_caption: unresolved placeholder in '" + text + "'");
  }

  Caption c;
  c.text = text;
  c.tier = tier;
  c.template_index = idx;
  c.source = CaptionSource::template_based;
  return c;
}

// -------------------- diversity --------------------

DiversityRatios diversity_ratios(long long total_tokens, long long unique_unigrams,
                                 long long unique_bigrams, long long caption_count) {
  if (caption_count <= 0 || total_tokens <= 0) {
    throw std::invalid_argument("diversity_ratios: counts must be positive");
  }
  DiversityRatios r;
  r.distinct1 = static_cast<double>(unique_unigrams) / static_cast<double>(total_tokens);
  long long denom = total_tokens - caption_count;
  r.distinct2 = denom > 0 ? static_cast<double>(unique_bigrams) / static_cast<double>(denom) : 0.0;
  r.mean_len = static_cast<double>(total_tokens) / static_cast<double>(caption_count);
  return r;
}

std::vector<std::string> diversity_tokens(const std::string& caption) {
  std::string cleaned;
  cleaned.reserve(caption.size());
  for (unsigned char c : caption) {
    if (std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::vector<std::string> tokens;
  std::istringstream ss(cleaned);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

DiversityReport diversity_report(const std::vector<std::string>& captions) {
  if (captions.empty()) throw std::invalid_argument("diversity_report: empty caption list");

  DiversityReport rep;
  rep.caption_count = static_cast<long long>(captions.size());
  std::set<std::string> unigrams;
  std::set<std::string> bigrams;
  std::vector<long long> lengths;
  lengths.reserve(captions.size());
  for (const auto& cap : captions) {
    auto tokens = diversity_tokens(cap);
    lengths.push_back(static_cast<long long>(tokens.size()));
    rep.total_tokens += static_cast<long long>(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
      unigrams.insert(tokens[i]);
      if (i + 1 < tokens.size()) bigrams.insert(tokens[i] + " " + tokens[i + 1]);
    }
  }
  rep.unique_unigrams = static_cast<long long>(unigrams.size());
  rep.unique_bigrams = static_cast<long long>(bigrams.size());
  rep.ratios = diversity_ratios(rep.total_tokens, rep.unique_unigrams, rep.unique_bigrams,
                                rep.caption_count);

  std::sort(lengths.begin(), lengths.end());
  size_t n = lengths.size();
  rep.median_len = n % 2 == 1 ? static_cast<double>(lengths[n / 2])
                              : (lengths[n / 2 - 1] + lengths[n / 2]) / 2.0;
  size_t rank90 = static_cast<size_t>(std::ceil(0.9 * static_cast<double>(n)));  // nearest rank
  rep.p90_len = static_cast<double>(lengths[rank90 == 0 ? 0 : rank90 - 1]);
  return rep;
}

// -------------------- caption file io --------------------

void save_captions_jsonl(const std::filesystem::path& path, const std::vector<CaptionRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write captions file: " + path.string());
  for (const auto& row : rows) {
    ordered_json j;
    j["sample_id"] = row.sample_id;
    j["text"] = row.caption.text;
    if (row.caption.tier >= 1) {
      j["tier"] = row.caption.tier;
    } else {
      j["tier"] = caption_source_name(row.caption.source);
    }
    if (row.caption.template_index) {
      j["template_index"] = *row.caption.template_index;
    } else {
      j["template_index"] = nullptr;
    }
    j["source"] = caption_source_name(row.caption.source);
    out << j.dump() << "\n";
  }
}

std::vector<CaptionRow> load_captions_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open captions file: " + path.string());
  std::vector<CaptionRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line);
    CaptionRow row;
    row.sample_id = j.at("sample_id").get<std::string>();
    row.caption.text = j.at("text").get<std::string>();
    if (j.at("tier").is_number_integer()) row.caption.tier = j.at("tier").get<int>();
    if (j.contains("template_index") && !j.at("template_index").is_null()) {
      row.caption.template_index = j.at("template_index").get<int>();
    }
    row.caption.source = parse_caption_source(j.at("source").get<std::string>());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace usclip
