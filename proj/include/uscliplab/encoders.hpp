#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "uscliplab/image.hpp"
#include "uscliplab/matrix.hpp"
#include "uscliplab/tokenizer.hpp"

namespace usclip {

inline constexpr int kJointDim = 256;
inline constexpr int kToyFeatureDim = 64;

// -------------------- parameters --------------------

struct ParamGroup {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;
  bool apply_weight_decay = true;  // rho opts out

  ParamGroup() = default;
  ParamGroup(std::string n, std::vector<int> s);
  size_t count() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Symmetric uniform fan-in initialization: U(-s, s) with s = scale/sqrt(fan_in).
void init_uniform_fan_in(ParamGroup& g, int fan_in, uint64_t seed, double scale = 1.0);

uint64_t param_bits_hash(const ParamGroup& g);

// -------------------- encoder backends --------------------

// Backend contract for pluggable encoders. A backend declares its kind and
// output dim, encodes batches, and may expose trainable parameter groups
// (an external frozen backbone exposes none). Nothing downstream of the raw
// feature matrix is allowed to branch on the backend identity.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::string name() const = 0;
  virtual int output_dim() const = 0;
  // training=true caches activations for a following backward() call.
  virtual Mat forward(const std::vector<Image>& batch, bool training) = 0;
  virtual void backward(const Mat& grad_features) = 0;
  virtual std::vector<ParamGroup*> param_groups() = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string name() const = 0;
  virtual int output_dim() const = 0;
  virtual int token_cap() const = 0;
  virtual Mat forward(const std::vector<TokenSequence>& batch, bool training) = 0;
  virtual void backward(const Mat& grad_features) = 0;
  virtual std::vector<ParamGroup*> param_groups() = 0;
};

// Three conv(3x3, pad 1) + ReLU + avgpool(4) stages over a 256x256 input,
// channels 1 -> 4 -> 16 -> 64, then global average pooling to a 64-d feature.
class ToyImageEncoder : public ImageEncoder {
 public:
  explicit ToyImageEncoder(uint64_t seed);
  ~ToyImageEncoder() override;  // out of line: Cache is incomplete here
  std::string name() const override { return "toy"; }
  int output_dim() const override { return kToyFeatureDim; }
  Mat forward(const std::vector<Image>& batch, bool training) override;
  void backward(const Mat& grad_features) override;
  std::vector<ParamGroup*> param_groups() override;

 private:
  struct Cache;
  ParamGroup conv_w_[3];
  ParamGroup conv_b_[3];
  std::vector<Cache> caches_;
};

// Learned token embeddings, mean-pooled over the unpadded positions.
class ToyTextEncoder : public TextEncoder {
 public:
  ToyTextEncoder(int vocab_size, TextEncoderKind kind, uint64_t seed);
  std::string name() const override { return "toy"; }
  int output_dim() const override { return kToyFeatureDim; }
  int token_cap() const override { return usclip::token_cap(kind_); }
  Mat forward(const std::vector<TokenSequence>& batch, bool training) override;
  void backward(const Mat& grad_features) override;
  std::vector<ParamGroup*> param_groups() override;

 private:
  TextEncoderKind kind_;
  ParamGroup embedding_;
  std::vector<TokenSequence> cache_;
};

// Config-driven backend discovery. "toy" ships registered; tests add mocks.
class EncoderRegistry {
 public:
  using ImageFactory = std::function<std::unique_ptr<ImageEncoder>(uint64_t seed)>;
  using TextFactory = std::function<std::unique_ptr<TextEncoder>(
      const Vocabulary& vocab, TextEncoderKind kind, uint64_t seed)>;

  static EncoderRegistry& instance();
  void register_image(const std::string& name, ImageFactory factory);
  void register_text(const std::string& name, TextFactory factory);
  std::unique_ptr<ImageEncoder> make_image(const std::string& name, uint64_t seed) const;
  std::unique_ptr<TextEncoder> make_text(const std::string& name, const Vocabulary& vocab,
                                         TextEncoderKind kind, uint64_t seed) const;
  std::vector<std::string> image_backends() const;
  std::vector<std::string> text_backends() const;

 private:
  std::vector<std::pair<std::string, ImageFactory>> image_;
  std::vector<std::pair<std::string, TextFactory>> text_;
};

// -------------------- projection + similarity --------------------

// Linear -> leaky ReLU (slope 0.1) -> Linear, hidden width equal to the input
// dim. The output layer carries no bias: outputs feed a row normalization, so
// an output bias could only shift every embedding by the same vector, which
// shrinks the angular spread between samples without adding capacity.
class ProjectionHead {
 public:
  ProjectionHead(int input_dim, int output_dim, const std::string& name_prefix, uint64_t seed);
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  Mat forward(const Mat& features, bool training);
  // grad wrt pre-normalization outputs -> grad wrt input features
  Mat backward(const Mat& grad_out);
  std::vector<ParamGroup*> param_groups();

 private:
  int input_dim_, output_dim_;
  ParamGroup w1_, b1_, w2_;
  Mat cache_input_, cache_hidden_;  // hidden is post-activation
};

struct RowNorms {
  Mat unit;               // row-normalized matrix
  std::vector<double> norms;
};

// Row-wise L2 normalization; pre-normalization norms below 1e-12 are an error.
RowNorms normalize_rows(const Mat& m);
// g is the loss gradient wrt the unit rows; returns gradient wrt the inputs.
Mat normalize_rows_backward(const Mat& g, const RowNorms& rn);

class Temperature {
 public:
  explicit Temperature(double initial_tau = 0.07);
  double tau() const;
  double rho() const { return rho_.value[0]; }
  void set_rho(double rho) { rho_.value[0] = rho; }
  // keeps tau inside [0.01, 1.0]; call after every optimizer step
  void clamp();
  ParamGroup& group() { return rho_; }
  const ParamGroup& group() const { return rho_; }

 private:
  ParamGroup rho_;
};

// logits[i][j] = (z_img[i] . z_txt[j]) / tau; requires equal batch sizes and
// row-normalized inputs.
Mat similarity_logits(const Mat& z_img, const Mat& z_txt, const Temperature& temperature);

// -------------------- dual encoder model --------------------

struct DualEncoderModel {
  std::unique_ptr<ImageEncoder> image_encoder;
  std::unique_ptr<TextEncoder> text_encoder;
  std::unique_ptr<ProjectionHead> image_head;
  std::unique_ptr<ProjectionHead> text_head;
  Temperature temperature;
  Vocabulary vocab;
  TextEncoderKind text_kind = TextEncoderKind::contrastive;
  std::string image_backend = "toy";
  std::string text_backend = "toy";
  uint64_t seed = 0;

  std::vector<ParamGroup*> param_groups();
  ParamGroup* find_group(const std::string& name);

  static DualEncoderModel build(const std::string& image_backend, const std::string& text_backend,
                                TextEncoderKind kind, Vocabulary vocab, uint64_t seed);
};

// Convenience wrappers matching the module surface; eval mode by default.
Mat encode_image(DualEncoderModel& model, const std::vector<Image>& batch, bool training = false);
Mat encode_text(DualEncoderModel& model, const std::vector<TokenSequence>& batch,
                bool training = false);

// head forward (eval mode) followed by row normalization
Mat project_and_normalize(const Mat& features, ProjectionHead& head);

}  // namespace usclip
