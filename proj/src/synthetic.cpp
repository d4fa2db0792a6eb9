#include "uscliplab/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "uscliplab/common.hpp"

namespace usclip {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

std::string condition_finding(Organ organ, int cond_idx) {
  if (organ == Organ::lung) {
    switch (cond_idx) {
      case 0: return "no consolidation";
      case 1: return "multiple B-lines";
      default: return "focal consolidation";
    }
  }
  switch (cond_idx) {
    case 0: return "homogeneous echotexture";
    case 1: return "well-circumscribed hypoechoic area";
    default: return "irregular hypoechoic area with shadowing";
  }
}

}  // namespace

std::vector<SampleRecord> generate_synthetic_corpus(int n, uint64_t seed) {
  if (n < 12) {
    throw std::invalid_argument("generate_synthetic_corpus: n must be at least 12 (one per cell)");
  }

  const auto organs = all_organs();
  const char* sides[] = {"left", "right", "upper", "lower"};

  std::vector<SampleRecord> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    int cell = k % 12;
    Organ organ = organs[cell / 3];
    int cond_idx = cell % 3;
    std::string condition = canonical_conditions(organ)[cond_idx];

    Rng rng(derive_seed(seed, "synth-record", static_cast<uint64_t>(k)));
    double amp = rng.uniform(synth::kAmpLo, synth::kAmpHi);
    double offset = rng.uniform(-synth::kOffsetRange, synth::kOffsetRange);
    double phase_x = rng.uniform(0.0, kTau);
    double phase_y = rng.uniform(0.0, kTau);
    double phase_slow = rng.uniform(0.0, kTau);

    double base = synth::kBaseLevel + synth::kBaseStep * (cell / 3);
    Image img(synth::kImageSize, synth::kImageSize);
    for (int y = 0; y < synth::kImageSize; ++y) {
      double slow = synth::kSlowWaveAmp * std::sin(kTau * y / synth::kImageSize + phase_slow);
      for (int x = 0; x < synth::kImageSize; ++x) {
        double v = base + offset + slow;
        if (cond_idx == 1) {
          v += amp * std::sin(kTau * x / synth::kStripePeriod + phase_x);
        } else if (cond_idx == 2) {
          v += amp * std::sin(kTau * x / synth::kCheckerPeriod + phase_x) *
               std::sin(kTau * y / synth::kCheckerPeriod + phase_y);
        }
        img.at(y, x) = v;
      }
    }

    SampleRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%04d", k);
    rec.sample_id = id;
    rec.source_dataset = std::string("synth_") + organ_name(organ);
    rec.organ = organ;
    rec.embedded_image = std::move(img);
    rec.condition = condition;
    rec.metadata["Tissue"] = organ_name(organ);
    rec.metadata["Diagnosis"] = condition;
    // a deterministic third of the records carries richer metadata so the
    // caption grammar exercises its top tier inside the pipeline too
    if (k % 3 == 0) {
      rec.metadata["Age"] = std::to_string(20 + (k * 7) % 60);
      rec.metadata["Gender"] = (k % 2 == 0) ? "female" : "male";
      rec.metadata["Zone"] = std::string(sides[k % 4]) + " " + organ_name(organ);
      if (organ == Organ::lung) {
        rec.metadata["Consolidation"] = condition_finding(organ, cond_idx);
      } else {
        rec.metadata["Echogenicity"] = condition_finding(organ, cond_idx);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace usclip
