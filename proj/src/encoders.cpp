#include "uscliplab/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uscliplab/common.hpp"

namespace usclip {

// -------------------- parameters --------------------

ParamGroup::ParamGroup(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  size_t count = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("ParamGroup: non-positive dim in shape");
    count *= static_cast<size_t>(d);
  }
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

void init_uniform_fan_in(ParamGroup& g, int fan_in, uint64_t seed, double scale) {
  if (fan_in <= 0) throw std::invalid_argument("init_uniform_fan_in: fan_in must be positive");
  double bound = scale / std::sqrt(static_cast<double>(fan_in));
  Rng rng(seed);
  for (double& v : g.value) v = rng.uniform(-bound, bound);
}

uint64_t param_bits_hash(const ParamGroup& g) {
  return fnv1a64_bytes(g.value.data(), g.value.size() * sizeof(double));
}

// -------------------- conv helpers --------------------

namespace {

// dst[y][x] += coeff * src[y+dy][x+dx] over the valid overlap
void add_shifted(double* dst, const double* src, int H, int W, int dy, int dx, double coeff) {
  int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
  int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
  for (int y = y_lo; y < y_hi; ++y) {
    double* d = dst + static_cast<size_t>(y) * W;
    const double* s = src + static_cast<size_t>(y + dy) * W + dx;
    for (int x = x_lo; x < x_hi; ++x) d[x] += coeff * s[x];
  }
}

// sum over a[y][x] * b[y+dy][x+dx]
double dot_shifted(const double* a, const double* b, int H, int W, int dy, int dx) {
  int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
  int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
  double acc = 0.0;
  for (int y = y_lo; y < y_hi; ++y) {
    const double* pa = a + static_cast<size_t>(y) * W;
    const double* pb = b + static_cast<size_t>(y + dy) * W + dx;
    for (int x = x_lo; x < x_hi; ++x) acc += pa[x] * pb[x];
  }
  return acc;
}

// 3x3 convolution with padding 1
void conv3x3_forward(const double* in, double* out, const double* w, const double* b, int c_in,
                     int c_out, int H, int W) {
  size_t plane = static_cast<size_t>(H) * W;
  for (int oc = 0; oc < c_out; ++oc) {
    std::fill(out + oc * plane, out + (oc + 1) * plane, b[oc]);
  }
  for (int oc = 0; oc < c_out; ++oc) {
    for (int ic = 0; ic < c_in; ++ic) {
      const double* wk = w + (static_cast<size_t>(oc) * c_in + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          add_shifted(out + oc * plane, in + ic * plane, H, W, ky - 1, kx - 1, wk[ky * 3 + kx]);
        }
      }
    }
  }
}

void conv3x3_backward_params(const double* in, const double* d_out, double* d_w, double* d_b,
                             int c_in, int c_out, int H, int W) {
  size_t plane = static_cast<size_t>(H) * W;
  for (int oc = 0; oc < c_out; ++oc) {
    const double* dout = d_out + oc * plane;
    double acc = 0.0;
    for (size_t i = 0; i < plane; ++i) acc += dout[i];
    d_b[oc] += acc;
    for (int ic = 0; ic < c_in; ++ic) {
      double* dwk = d_w + (static_cast<size_t>(oc) * c_in + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          dwk[ky * 3 + kx] += dot_shifted(dout, in + ic * plane, H, W, ky - 1, kx - 1);
        }
      }
    }
  }
}

void conv3x3_backward_input(const double* w, const double* d_out, double* d_in, int c_in,
                            int c_out, int H, int W) {
  size_t plane = static_cast<size_t>(H) * W;
  for (int oc = 0; oc < c_out; ++oc) {
    const double* dout = d_out + oc * plane;
    for (int ic = 0; ic < c_in; ++ic) {
      const double* wk = w + (static_cast<size_t>(oc) * c_in + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          add_shifted(d_in + ic * plane, dout, H, W, -(ky - 1), -(kx - 1), wk[ky * 3 + kx]);
        }
      }
    }
  }
}

void relu_forward(double* buf, uint8_t* mask, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (buf[i] > 0.0) {
      mask[i] = 1;
    } else {
      mask[i] = 0;
      buf[i] = 0.0;
    }
  }
}

// 4x4 average pooling, stride 4
void avgpool4_forward(const double* in, double* out, int channels, int H, int W) {
  int oh = H / 4, ow = W / 4;
  for (int c = 0; c < channels; ++c) {
    const double* ip = in + static_cast<size_t>(c) * H * W;
    double* op = out + static_cast<size_t>(c) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < 4; ++dy) {
          const double* row = ip + static_cast<size_t>(y * 4 + dy) * W + x * 4;
          acc += row[0] + row[1] + row[2] + row[3];
        }
        op[static_cast<size_t>(y) * ow + x] = acc / 16.0;
      }
    }
  }
}

void avgpool4_backward(const double* d_out, double* d_in, int channels, int H, int W) {
  int oh = H / 4, ow = W / 4;
  for (int c = 0; c < channels; ++c) {
    const double* dop = d_out + static_cast<size_t>(c) * oh * ow;
    double* dip = d_in + static_cast<size_t>(c) * H * W;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double g = dop[static_cast<size_t>(y) * ow + x] / 16.0;
        for (int dy = 0; dy < 4; ++dy) {
          double* row = dip + static_cast<size_t>(y * 4 + dy) * W + x * 4;
          row[0] += g;
          row[1] += g;
          row[2] += g;
          row[3] += g;
        }
      }
    }
  }
}

constexpr int kStageChannels[4] = {1, 4, 16, 64};
constexpr int kStageSize[4] = {256, 64, 16, 4};

// head activation leak: keeps every hidden unit learning even when the
// narrow init puts its pre-activation within reach of a few optimizer steps
constexpr double kHeadLeak = 0.1;

}  // namespace

// -------------------- toy image encoder --------------------

struct ToyImageEncoder::Cache {
  std::vector<double> stage_in[3];   // conv inputs
  std::vector<uint8_t> relu_mask[3]; // at pre-pool resolution
};

ToyImageEncoder::~ToyImageEncoder() = default;

ToyImageEncoder::ToyImageEncoder(uint64_t seed) {
  for (int s = 0; s < 3; ++s) {
    int c_in = kStageChannels[s], c_out = kStageChannels[s + 1];
    std::string base = "image_encoder/conv" + std::to_string(s + 1);
    conv_w_[s] = ParamGroup(base + ".w", {c_out, c_in, 3, 3});
    conv_b_[s] = ParamGroup(base + ".b", {c_out});
    init_uniform_fan_in(conv_w_[s], c_in * 9, derive_seed(seed, "init", fnv1a64(conv_w_[s].name)));
    // biases stay zero
  }
}

Mat ToyImageEncoder::forward(const std::vector<Image>& batch, bool training) {
  if (batch.empty()) throw std::invalid_argument("encode_image: empty batch");
  Mat features(static_cast<int>(batch.size()), kToyFeatureDim);
  caches_.clear();
  if (training) caches_.resize(batch.size());

  std::vector<double> conv_out, pooled, cur;
  for (size_t n = 0; n < batch.size(); ++n) {
    const Image& img = batch[n];
    if (img.width != 256 || img.height != 256) {
      throw std::invalid_argument("toy image encoder expects 256x256 inputs, got " +
                                  std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    cur = img.pixels;
    for (int s = 0; s < 3; ++s) {
      int c_in = kStageChannels[s], c_out = kStageChannels[s + 1];
      int H = kStageSize[s];
      conv_out.assign(static_cast<size_t>(c_out) * H * H, 0.0);
      conv3x3_forward(cur.data(), conv_out.data(), conv_w_[s].value.data(),
                      conv_b_[s].value.data(), c_in, c_out, H, H);
      if (training) {
        caches_[n].stage_in[s] = cur;
        caches_[n].relu_mask[s].assign(conv_out.size(), 0);
        relu_forward(conv_out.data(), caches_[n].relu_mask[s].data(), conv_out.size());
      } else {
        for (double& v : conv_out) v = v > 0.0 ? v : 0.0;
      }
      int oh = H / 4;
      pooled.assign(static_cast<size_t>(c_out) * oh * oh, 0.0);
      avgpool4_forward(conv_out.data(), pooled.data(), c_out, H, H);
      cur = pooled;
    }
    // global average pool over the 4x4 maps
    int hw = kStageSize[3] * kStageSize[3];
    for (int c = 0; c < kToyFeatureDim; ++c) {
      double acc = 0.0;
      const double* p = cur.data() + static_cast<size_t>(c) * hw;
      for (int i = 0; i < hw; ++i) acc += p[i];
      features.at(static_cast<int>(n), c) = acc / hw;
    }
  }
  return features;
}

void ToyImageEncoder::backward(const Mat& grad_features) {
  if (caches_.size() != static_cast<size_t>(grad_features.rows)) {
    throw std::logic_error("image encoder backward without a matching forward cache");
  }
  std::vector<double> d_pool, d_conv, d_in;
  for (int n = 0; n < grad_features.rows; ++n) {
    const Cache& cache = caches_[n];
    // GAP backward into the pooled stage-3 maps
    int hw = kStageSize[3] * kStageSize[3];
    d_pool.assign(static_cast<size_t>(kToyFeatureDim) * hw, 0.0);
    for (int c = 0; c < kToyFeatureDim; ++c) {
      double g = grad_features.at(n, c) / hw;
      for (int i = 0; i < hw; ++i) d_pool[static_cast<size_t>(c) * hw + i] = g;
    }
    for (int s = 2; s >= 0; --s) {
      int c_in = kStageChannels[s], c_out = kStageChannels[s + 1];
      int H = kStageSize[s];
      d_conv.assign(static_cast<size_t>(c_out) * H * H, 0.0);
      avgpool4_backward(d_pool.data(), d_conv.data(), c_out, H, H);
      const auto& mask = cache.relu_mask[s];
      for (size_t i = 0; i < d_conv.size(); ++i) {
        if (!mask[i]) d_conv[i] = 0.0;
      }
      bool need_input_grad = s > 0;
      if (need_input_grad) {
        d_in.assign(static_cast<size_t>(c_in) * H * H, 0.0);
      }
      conv3x3_backward_params(cache.stage_in[s].data(), d_conv.data(), conv_w_[s].grad.data(),
                              conv_b_[s].grad.data(), c_in, c_out, H, H);
      if (need_input_grad) {
        conv3x3_backward_input(conv_w_[s].value.data(), d_conv.data(), d_in.data(), c_in, c_out,
                               H, H);
        d_pool = d_in;
      }
    }
  }
}

std::vector<ParamGroup*> ToyImageEncoder::param_groups() {
  std::vector<ParamGroup*> out;
  for (int s = 0; s < 3; ++s) {
    out.push_back(&conv_w_[s]);
    out.push_back(&conv_b_[s]);
  }
  return out;
}

// -------------------- toy text encoder --------------------

ToyTextEncoder::ToyTextEncoder(int vocab_size, TextEncoderKind kind, uint64_t seed) : kind_(kind) {
  if (vocab_size < 4) throw std::invalid_argument("toy text encoder needs a vocabulary");
  embedding_ = ParamGroup("text_encoder/embedding", {vocab_size, kToyFeatureDim});
  init_uniform_fan_in(embedding_, kToyFeatureDim, derive_seed(seed, "init", fnv1a64(embedding_.name)));
}

Mat ToyTextEncoder::forward(const std::vector<TokenSequence>& batch, bool training) {
  if (batch.empty()) throw std::invalid_argument("encode_text: empty batch");
  Mat features(static_cast<int>(batch.size()), kToyFeatureDim);
  int vocab_size = embedding_.shape[0];
  for (size_t n = 0; n < batch.size(); ++n) {
    const TokenSequence& seq = batch[n];
    if (seq.cap != token_cap()) {
      throw std::invalid_argument("token cap mismatch: sequence cap " + std::to_string(seq.cap) +
                                  " vs encoder cap " + std::to_string(token_cap()));
    }
    int count = 0;
    double* f = features.row(static_cast<int>(n));
    for (int t = 0; t < seq.cap; ++t) {
      if (!seq.mask[t]) continue;
      int id = seq.ids[t];
      if (id < 0 || id >= vocab_size) {
        throw std::invalid_argument("token id out of vocabulary range");
      }
      const double* e = embedding_.value.data() + static_cast<size_t>(id) * kToyFeatureDim;
      for (int d = 0; d < kToyFeatureDim; ++d) f[d] += e[d];
      ++count;
    }
    if (count == 0) throw std::invalid_argument("encode_text: sequence has no real tokens");
    for (int d = 0; d < kToyFeatureDim; ++d) f[d] /= count;
  }
  if (training) {
    cache_ = batch;
  } else {
    cache_.clear();
  }
  return features;
}

void ToyTextEncoder::backward(const Mat& grad_features) {
  if (cache_.size() != static_cast<size_t>(grad_features.rows)) {
    throw std::logic_error("text encoder backward without a matching forward cache");
  }
  for (int n = 0; n < grad_features.rows; ++n) {
    const TokenSequence& seq = cache_[n];
    int count = seq.real_length();
    const double* g = grad_features.row(n);
    for (int t = 0; t < seq.cap; ++t) {
      if (!seq.mask[t]) continue;
      double* e = embedding_.grad.data() + static_cast<size_t>(seq.ids[t]) * kToyFeatureDim;
      for (int d = 0; d < kToyFeatureDim; ++d) e[d] += g[d] / count;
    }
  }
}

std::vector<ParamGroup*> ToyTextEncoder::param_groups() { return {&embedding_}; }

// -------------------- registry --------------------

EncoderRegistry& EncoderRegistry::instance() {
  static EncoderRegistry reg = [] {
    EncoderRegistry r;
    r.register_image("toy",
                     [](uint64_t seed) { return std::make_unique<ToyImageEncoder>(seed); });
    r.register_text("toy", [](const Vocabulary& vocab, TextEncoderKind kind, uint64_t seed) {
      return std::make_unique<ToyTextEncoder>(vocab.size(), kind, seed);
    });
    return r;
  }();
  return reg;
}

void EncoderRegistry::register_image(const std::string& name, ImageFactory factory) {
  for (auto& [n, f] : image_) {
    if (n == name) {
      f = std::move(factory);
      return;
    }
  }
  image_.emplace_back(name, std::move(factory));
}

void EncoderRegistry::register_text(const std::string& name, TextFactory factory) {
  for (auto& [n, f] : text_) {
    if (n == name) {
      f = std::move(factory);
      return;
    }
  }
  text_.emplace_back(name, std::move(factory));
}

namespace {
std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}
}  // namespace

std::unique_ptr<ImageEncoder> EncoderRegistry::make_image(const std::string& name,
                                                          uint64_t seed) const {
  for (const auto& [n, f] : image_) {
    if (n == name) return f(seed);
  }
  throw ConfigError("unknown image encoder backend '" + name +
                    "' (available: " + join_names(image_backends()) + ")");
}

std::unique_ptr<TextEncoder> EncoderRegistry::make_text(const std::string& name,
                                                        const Vocabulary& vocab,
                                                        TextEncoderKind kind,
                                                        uint64_t seed) const {
  for (const auto& [n, f] : text_) {
    if (n == name) return f(vocab, kind, seed);
  }
  throw ConfigError("unknown text encoder backend '" + name +
                    "' (available: " + join_names(text_backends()) + ")");
}

std::vector<std::string> EncoderRegistry::image_backends() const {
  std::vector<std::string> out;
  for (const auto& [n, f] : image_) {
    out.push_back(n);
    (void)f;
  }
  return out;
}

std::vector<std::string> EncoderRegistry::text_backends() const {
  std::vector<std::string> out;
  for (const auto& [n, f] : text_) {
    out.push_back(n);
    (void)f;
  }
  return out;
}

// -------------------- projection head --------------------

ProjectionHead::ProjectionHead(int input_dim, int output_dim, const std::string& name_prefix,
                               uint64_t seed)
    : input_dim_(input_dim), output_dim_(output_dim) {
  if (input_dim <= 0 || output_dim <= 0) {
    throw std::invalid_argument("projection head dims must be positive");
  }
  int hidden = input_dim;  // hidden width equals the input dim
  w1_ = ParamGroup(name_prefix + "/w1", {hidden, input_dim});
  b1_ = ParamGroup(name_prefix + "/b1", {hidden});
  w2_ = ParamGroup(name_prefix + "/w2", {output_dim, hidden});
  // narrow init: the desk-scale recipe takes few optimizer steps, and the
  // adaptive updates move each weight by roughly lr per step, so the starting
  // scale decides how far the head geometry can rotate within a run
  constexpr double kHeadInitScale = 0.125;
  init_uniform_fan_in(w1_, input_dim, derive_seed(seed, "init", fnv1a64(w1_.name)), kHeadInitScale);
  init_uniform_fan_in(w2_, hidden, derive_seed(seed, "init", fnv1a64(w2_.name)), kHeadInitScale);
}

Mat ProjectionHead::forward(const Mat& features, bool training) {
  if (features.cols != input_dim_) {
    throw std::invalid_argument("projection head: expected " + std::to_string(input_dim_) +
                                "-d features, got " + std::to_string(features.cols));
  }
  int n = features.rows;
  int hidden = input_dim_;
  Mat h(n, hidden);
  for (int i = 0; i < n; ++i) {
    const double* f = features.row(i);
    double* hi = h.row(i);
    for (int j = 0; j < hidden; ++j) {
      const double* w = w1_.value.data() + static_cast<size_t>(j) * input_dim_;
      double acc = b1_.value[j];
      for (int k = 0; k < input_dim_; ++k) acc += w[k] * f[k];
      hi[j] = acc > 0.0 ? acc : kHeadLeak * acc;
    }
  }
  Mat out(n, output_dim_);
  for (int i = 0; i < n; ++i) {
    const double* hi = h.row(i);
    double* oi = out.row(i);
    for (int j = 0; j < output_dim_; ++j) {
      const double* w = w2_.value.data() + static_cast<size_t>(j) * hidden;
      double acc = 0.0;
      for (int k = 0; k < hidden; ++k) acc += w[k] * hi[k];
      oi[j] = acc;
    }
  }
  if (training) {
    cache_input_ = features;
    cache_hidden_ = h;
  } else {
    cache_input_ = Mat();
    cache_hidden_ = Mat();
  }
  return out;
}

Mat ProjectionHead::backward(const Mat& grad_out) {
  if (cache_input_.rows != grad_out.rows) {
    throw std::logic_error("projection head backward without a matching forward cache");
  }
  int n = grad_out.rows;
  int hidden = input_dim_;

  Mat d_hidden(n, hidden);
  for (int i = 0; i < n; ++i) {
    const double* g = grad_out.row(i);
    const double* hi = cache_hidden_.row(i);
    for (int j = 0; j < output_dim_; ++j) {
      double gj = g[j];
      double* wg = w2_.grad.data() + static_cast<size_t>(j) * hidden;
      const double* w = w2_.value.data() + static_cast<size_t>(j) * hidden;
      double* dh = d_hidden.row(i);
      for (int k = 0; k < hidden; ++k) {
        wg[k] += gj * hi[k];
        dh[k] += gj * w[k];
      }
    }
  }
  // leaky gate: the activation preserves sign, so the post-activation cache
  // tells which side of the kink each unit sat on
  for (int i = 0; i < n; ++i) {
    const double* hi = cache_hidden_.row(i);
    double* dh = d_hidden.row(i);
    for (int k = 0; k < hidden; ++k) {
      if (hi[k] <= 0.0) dh[k] *= kHeadLeak;
    }
  }
  Mat d_input(n, input_dim_);
  for (int i = 0; i < n; ++i) {
    const double* dh = d_hidden.row(i);
    const double* f = cache_input_.row(i);
    double* di = d_input.row(i);
    for (int j = 0; j < hidden; ++j) {
      double gj = dh[j];
      if (gj == 0.0) continue;
      b1_.grad[j] += gj;
      double* wg = w1_.grad.data() + static_cast<size_t>(j) * input_dim_;
      const double* w = w1_.value.data() + static_cast<size_t>(j) * input_dim_;
      for (int k = 0; k < input_dim_; ++k) {
        wg[k] += gj * f[k];
        di[k] += gj * w[k];
      }
    }
  }
  return d_input;
}

std::vector<ParamGroup*> ProjectionHead::param_groups() { return {&w1_, &b1_, &w2_}; }

// -------------------- normalization, temperature, similarity --------------------

RowNorms normalize_rows(const Mat& m) {
  RowNorms rn;
  rn.unit = Mat(m.rows, m.cols);
  rn.norms.resize(m.rows);
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += r[j] * r[j];
    double norm = std::sqrt(acc);
    if (norm < 1e-12) {
      throw std::runtime_error("degenerate embedding: pre-normalization norm below 1e-12");
    }
    rn.norms[i] = norm;
    double* u = rn.unit.row(i);
    for (int j = 0; j < m.cols; ++j) u[j] = r[j] / norm;
  }
  return rn;
}

Mat normalize_rows_backward(const Mat& g, const RowNorms& rn) {
  if (g.rows != rn.unit.rows || g.cols != rn.unit.cols) {
    throw std::invalid_argument("normalize_rows_backward: shape mismatch");
  }
  Mat out(g.rows, g.cols);
  for (int i = 0; i < g.rows; ++i) {
    const double* gi = g.row(i);
    const double* zi = rn.unit.row(i);
    double dot = 0.0;
    for (int j = 0; j < g.cols; ++j) dot += gi[j] * zi[j];
    double inv = 1.0 / rn.norms[i];
    double* oi = out.row(i);
    for (int j = 0; j < g.cols; ++j) oi[j] = (gi[j] - dot * zi[j]) * inv;
  }
  return out;
}

Temperature::Temperature(double initial_tau) {
  if (initial_tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  rho_ = ParamGroup("temperature/rho", {1});
  rho_.value[0] = std::log(initial_tau);
  rho_.apply_weight_decay = false;
}

double Temperature::tau() const { return std::exp(rho_.value[0]); }

void Temperature::clamp() {
  double lo = std::log(0.01), hi = std::log(1.0);
  rho_.value[0] = std::clamp(rho_.value[0], lo, hi);
}

Mat similarity_logits(const Mat& z_img, const Mat& z_txt, const Temperature& temperature) {
  if (z_img.rows != z_txt.rows) {
    throw std::invalid_argument("similarity_logits: image batch " + std::to_string(z_img.rows) +
                                " vs text batch " + std::to_string(z_txt.rows));
  }
  if (z_img.cols != z_txt.cols) {
    throw std::invalid_argument("similarity_logits: embedding dims differ");
  }
  for (const Mat* m : {&z_img, &z_txt}) {
    for (int i = 0; i < m->rows; ++i) {
      const double* r = m->row(i);
      double acc = 0.0;
      for (int j = 0; j < m->cols; ++j) acc += r[j] * r[j];
      if (std::abs(acc - 1.0) > 1e-6) {
        throw std::invalid_argument("similarity_logits: inputs must be row-normalized");
      }
    }
  }
  Mat logits = matmul_nt(z_img, z_txt);
  double inv_tau = 1.0 / temperature.tau();
  for (double& v : logits.a) v *= inv_tau;
  return logits;
}

// -------------------- dual encoder model --------------------

std::vector<ParamGroup*> DualEncoderModel::param_groups() {
  std::vector<ParamGroup*> out;
  for (auto* g : image_encoder->param_groups()) out.push_back(g);
  for (auto* g : text_encoder->param_groups()) out.push_back(g);
  for (auto* g : image_head->param_groups()) out.push_back(g);
  for (auto* g : text_head->param_groups()) out.push_back(g);
  out.push_back(&temperature.group());
  return out;
}

ParamGroup* DualEncoderModel::find_group(const std::string& name) {
  for (auto* g : param_groups()) {
    if (g->name == name) return g;
  }
  return nullptr;
}

DualEncoderModel DualEncoderModel::build(const std::string& image_backend,
                                         const std::string& text_backend, TextEncoderKind kind,
                                         Vocabulary vocab, uint64_t seed) {
  DualEncoderModel m;
  m.vocab = std::move(vocab);
  m.text_kind = kind;
  m.image_backend = image_backend;
  m.text_backend = text_backend;
  m.seed = seed;
  auto& reg = EncoderRegistry::instance();
  m.image_encoder = reg.make_image(image_backend, derive_seed(seed, "image_encoder"));
  m.text_encoder = reg.make_text(text_backend, m.vocab, kind, derive_seed(seed, "text_encoder"));
  m.image_head = std::make_unique<ProjectionHead>(m.image_encoder->output_dim(), kJointDim,
                                                  "image_head", derive_seed(seed, "image_head"));
  m.text_head = std::make_unique<ProjectionHead>(m.text_encoder->output_dim(), kJointDim,
                                                 "text_head", derive_seed(seed, "text_head"));
  return m;
}

Mat encode_image(DualEncoderModel& model, const std::vector<Image>& batch, bool training) {
  return model.image_encoder->forward(batch, training);
}

Mat encode_text(DualEncoderModel& model, const std::vector<TokenSequence>& batch, bool training) {
  return model.text_encoder->forward(batch, training);
}

Mat project_and_normalize(const Mat& features, ProjectionHead& head) {
  return normalize_rows(head.forward(features, false)).unit;
}

}  // namespace usclip
