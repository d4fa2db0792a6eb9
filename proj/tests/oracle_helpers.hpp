#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written from the metric definitions directly, favoring
// the dumbest possible algorithm over sharing code with the implementation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "uscliplab/common.hpp"
#include "uscliplab/image.hpp"
#include "uscliplab/matrix.hpp"
#include "uscliplab/synthetic.hpp"

namespace oracle {

// Symmetric contrastive loss computed term by term from the definition:
// mean over rows of -log softmax(diagonal) plus the same over columns,
// halved. No gradient, no shared code with the implementation.
inline double info_nce(const usclip::Mat& logits) {
  const int n = logits.rows;
  double row_ce = 0.0, col_ce = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(logits.at(i, j) - mx);
    row_ce += -(logits.at(i, i) - mx - std::log(denom));
  }
  for (int j = 0; j < n; ++j) {
    double mx = logits.at(0, j);
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (int i = 0; i < n; ++i) denom += std::exp(logits.at(i, j) - mx);
    col_ce += -(logits.at(j, j) - mx - std::log(denom));
  }
  return 0.5 * (row_ce / n + col_ce / n);
}

// Central finite differences of a scalar function of a matrix.
inline usclip::Mat fd_gradient(const std::function<double(const usclip::Mat&)>& f,
                               usclip::Mat x, double h = 1e-5) {
  usclip::Mat g(x.rows, x.cols);
  for (size_t i = 0; i < x.a.size(); ++i) {
    double keep = x.a[i];
    x.a[i] = keep + h;
    double up = f(x);
    x.a[i] = keep - h;
    double down = f(x);
    x.a[i] = keep;
    g.a[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_rel_error(double got, double want) {
  double scale = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / scale;
}

inline double max_rel_error(const usclip::Mat& got, const usclip::Mat& want) {
  double worst = 0.0;
  for (size_t i = 0; i < got.a.size(); ++i) {
    double scale = std::max({std::abs(got.a[i]), std::abs(want.a[i]), 1e-8});
    worst = std::max(worst, std::abs(got.a[i] - want.a[i]) / scale);
  }
  return worst;
}

// AUROC by counting concordant pairs: over every (positive, negative) pair,
// score 1 for positive ranked higher, 0.5 for a tie.
inline double auroc_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long long pairs = 0;
  for (size_t p = 0; p < scores.size(); ++p) {
    if (labels[p] != 1) continue;
    for (size_t q = 0; q < scores.size(); ++q) {
      if (labels[q] != 0) continue;
      ++pairs;
      if (scores[p] > scores[q]) wins += 1.0;
      else if (scores[p] == scores[q]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Recall@K by explicitly sorting every candidate list. Competitors are
// ordered by score descending, index ascending; the true match is the
// diagonal entry.
inline double recall_by_sorting(const usclip::Mat& sim, int k, bool image_to_text) {
  const int n = sim.rows;
  int hits = 0;
  for (int q = 0; q < n; ++q) {
    std::vector<std::pair<double, int>> cands;
    for (int c = 0; c < n; ++c) {
      cands.push_back({image_to_text ? sim.at(q, c) : sim.at(c, q), c});
    }
    std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int r = 0; r < k; ++r) {
      if (cands[r].second == q) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / n;
}

// Decodes a synthetic image back to its (organ, condition) cell using the
// generator's documented inverse rule: nearest base intensity level for the
// organ, mean absolute neighbor differences for the texture.
struct DecodedCell {
  int organ = 0;
  int condition = 0;
};

inline DecodedCell decode_synthetic(const usclip::Image& img) {
  using namespace usclip::synth;
  double mean = 0.0;
  for (double v : img.pixels) mean += v;
  mean /= static_cast<double>(img.pixels.size());

  DecodedCell cell;
  double best = 1e9;
  for (int o = 0; o < 4; ++o) {
    double d = std::abs(mean - (kBaseLevel + kBaseStep * o));
    if (d < best) {
      best = d;
      cell.organ = o;
    }
  }

  double dx = 0.0, dy = 0.0;
  long long nx = 0, ny = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x + 1 < img.width; ++x) {
      dx += std::abs(img.at(y, x + 1) - img.at(y, x));
      ++nx;
    }
  }
  for (int y = 0; y + 1 < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      dy += std::abs(img.at(y + 1, x) - img.at(y, x));
      ++ny;
    }
  }
  dx /= static_cast<double>(nx);
  dy /= static_cast<double>(ny);
  if (std::min(dx, dy) > kEdgeThreshold) cell.condition = 2;
  else if (dx > kEdgeThreshold) cell.condition = 1;
  else cell.condition = 0;
  return cell;
}

// Random helpers shared by several suites.
inline usclip::Mat random_mat(int rows, int cols, usclip::Rng& rng, double lo = -1.0,
                              double hi = 1.0) {
  usclip::Mat m(rows, cols);
  for (double& v : m.a) v = rng.uniform(lo, hi);
  return m;
}

inline usclip::Mat random_unit_rows(int rows, int cols, usclip::Rng& rng) {
  usclip::Mat m = random_mat(rows, cols, rng);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += m.at(r, c) * m.at(r, c);
    s = std::sqrt(s);
    for (int c = 0; c < cols; ++c) m.at(r, c) /= s;
  }
  return m;
}

}  // namespace oracle
