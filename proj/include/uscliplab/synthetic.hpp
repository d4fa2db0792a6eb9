#pragma once

#include <cstdint>
#include <vector>

#include "uscliplab/corpus.hpp"

namespace usclip {

// Synthetic desk-scale corpus. Each record's image deterministically encodes
// its (organ, condition) cell:
//
//   organ     -> base intensity level  0.20 + 0.18 * organ_index
//   condition -> overlay pattern
//       index 0: none (flat)
//       index 1: vertical grating,  amplitude A, period 16 px
//       index 2: checkerboard,      amplitude A, period  8 px
//
// plus per-record nuisance variation that never crosses a decision boundary:
// a global offset in [-0.03, 0.03], A drawn from [0.08, 0.14], random phases,
// and a slow vertical wave (amplitude 0.03, period = image height) that keeps
// byte patterns unique within a cell. The nuisance is wide enough that a
// handful of labeled shots cannot pin down a cell the way the full train
// split can, but the image mean stays within 0.055 of its base level and
// every pixel stays inside [0, 1].
//
// Inverse rule (decodes any generated image, including after 8-bit PNG
// quantization):
//   organ     = index of the nearest base level to the image mean
//   condition = let dx = mean |I(x+1,y)-I(x,y)|, dy = mean |I(x,y+1)-I(x,y)|;
//               2 if min(dx,dy) > 0.008, else 1 if dx > 0.008, else 0
namespace synth {
inline constexpr int kImageSize = 256;
inline constexpr double kBaseLevel = 0.20;
inline constexpr double kBaseStep = 0.18;
inline constexpr double kAmpLo = 0.08;
inline constexpr double kAmpHi = 0.14;
inline constexpr int kStripePeriod = 16;
inline constexpr int kCheckerPeriod = 8;
inline constexpr double kOffsetRange = 0.03;
inline constexpr double kSlowWaveAmp = 0.03;
inline constexpr double kEdgeThreshold = 0.008;
}  // namespace synth

// Emits n records with embedded images, canonical conditions and metadata
// fields. Cells (4 organs x 3 conditions) are balanced within +-1; requires
// n >= 12. Byte-identical output for equal (n, seed).
std::vector<SampleRecord> generate_synthetic_corpus(int n, uint64_t seed);

}  // namespace usclip
