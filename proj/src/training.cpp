#include "uscliplab/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian doubles");

// -------------------- loss --------------------

InfoNce info_nce_loss(const Mat& logits) {
  if (logits.rows != logits.cols) {
    throw std::invalid_argument("info_nce_loss: logit table must be square");
  }
  int n = logits.rows;
  if (n < 2) {
    throw std::invalid_argument("info_nce_loss: need at least two pairs for in-batch negatives");
  }
  InfoNce out;
  out.grad = Mat(n, n);
  double scale = 1.0 / (2.0 * n);
  // the two directions accumulate separately so that transposing the logits
  // swaps the accumulators instead of reordering one running sum
  double row_loss = 0.0;
  double col_loss = 0.0;

  // image -> text: cross-entropy along each row
  for (int i = 0; i < n; ++i) {
    const double* l = logits.row(i);
    double mx = *std::max_element(l, l + n);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(l[j] - mx);
    row_loss += std::log(z) - (l[i] - mx);
    double* g = out.grad.row(i);
    for (int j = 0; j < n; ++j) {
      g[j] += (std::exp(l[j] - mx) / z - (j == i ? 1.0 : 0.0)) * scale;
    }
  }
  // text -> image: cross-entropy along each column
  for (int j = 0; j < n; ++j) {
    double mx = logits.at(0, j);
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(logits.at(i, j) - mx);
    col_loss += std::log(z) - (logits.at(j, j) - mx);
    for (int i = 0; i < n; ++i) {
      out.grad.at(i, j) += (std::exp(logits.at(i, j) - mx) / z - (i == j ? 1.0 : 0.0)) * scale;
    }
  }
  out.loss = (row_loss + col_loss) * scale;
  return out;
}

// -------------------- schedule --------------------

double cosine_lr(int epoch, int total_epochs, double peak_lr, double floor_lr) {
  if (total_epochs <= 0) throw std::invalid_argument("cosine_lr: total_epochs must be positive");
  if (epoch < 0 || epoch > total_epochs) {
    throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(total_epochs) + "]");
  }
  if (floor_lr < 0.0 || peak_lr < floor_lr) {
    throw std::invalid_argument("cosine_lr: need peak_lr >= floor_lr >= 0");
  }
  double phase = std::numbers::pi * epoch / total_epochs;
  return floor_lr + 0.5 * (peak_lr - floor_lr) * (1.0 + std::cos(phase));
}

// -------------------- augmentation --------------------

Image augment_with(const Image& img, int ox, int oy, bool flip) {
  constexpr int kMaxOffset = kAugResize - kModelImageSize;  // 32
  if (ox < 0 || ox > kMaxOffset || oy < 0 || oy > kMaxOffset) {
    throw std::invalid_argument("augment_with: crop offset outside [0, 32]");
  }
  Image resized = resize_bilinear(img, kAugResize, kAugResize);
  Image view = crop(resized, ox, oy, kModelImageSize, kModelImageSize);
  if (flip) view = hflip(view);
  return view;
}

Image augment_train(const Image& img, Rng& rng) {
  int ox = static_cast<int>(rng.below(33));
  int oy = static_cast<int>(rng.below(33));
  bool flip = rng.coin();
  return augment_with(img, ox, oy, flip);
}

Image eval_view(const Image& img) {
  constexpr int kCenter = (kAugResize - kModelImageSize) / 2;  // 16
  return augment_with(img, kCenter, kCenter, false);
}

// -------------------- freeze configurations --------------------

FreezeConfig FreezeConfig::from_name(const std::string& name) {
  if (name == "heads_only") return {false, false};
  if (name == "image_enc") return {true, false};
  if (name == "text_enc") return {false, true};
  if (name == "full") return {true, true};
  throw ConfigError("unknown freeze configuration '" + name +
                    "' (expected heads_only, image_enc, text_enc or full)");
}

std::string FreezeConfig::name() const {
  if (train_image_encoder && train_text_encoder) return "full";
  if (train_image_encoder) return "image_enc";
  if (train_text_encoder) return "text_enc";
  return "heads_only";
}

void configure_trainable(DualEncoderModel& model, const FreezeConfig& freeze) {
  for (auto* g : model.image_encoder->param_groups()) g->trainable = freeze.train_image_encoder;
  for (auto* g : model.text_encoder->param_groups()) g->trainable = freeze.train_text_encoder;
  for (auto* g : model.image_head->param_groups()) g->trainable = true;
  for (auto* g : model.text_head->param_groups()) g->trainable = true;
  model.temperature.group().trainable = true;
}

size_t trainable_param_count(DualEncoderModel& model) {
  size_t n = 0;
  for (auto* g : model.param_groups()) {
    if (g->trainable) n += g->count();
  }
  return n;
}

// -------------------- optimizer --------------------

void AdamW::init(const std::vector<ParamGroup*>& groups) {
  t_ = 0;
  m_.clear();
  v_.clear();
  for (auto* g : groups) {
    m_.emplace_back(g->count(), 0.0);
    v_.emplace_back(g->count(), 0.0);
  }
}

void AdamW::step(const std::vector<ParamGroup*>& groups, double lr) {
  if (m_.size() != groups.size()) {
    throw std::logic_error("AdamW::step called before init for this group set");
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, t_);
  double bc2 = 1.0 - std::pow(beta2, t_);
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    ParamGroup& g = *groups[gi];
    if (m_[gi].size() != g.count()) {
      throw std::logic_error("AdamW state size mismatch for group " + g.name);
    }
    if (!g.trainable) continue;
    auto& m = m_[gi];
    auto& v = v_[gi];
    for (size_t i = 0; i < g.count(); ++i) {
      double grad = g.grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      g.value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      if (g.apply_weight_decay) {
        g.value[i] -= lr * weight_decay * g.value[i];
      }
    }
  }
}

void AdamW::restore(int t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  if (t < 0) throw std::invalid_argument("AdamW::restore: negative step count");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// -------------------- train log --------------------

void save_train_log(const std::vector<EpochLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write train log: " + path.string());
  for (const auto& e : log) {
    ordered_json row = {{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"lr", e.lr},
                        {"tau", e.tau},
                        {"val_paired_alignment", e.val_paired_alignment}};
    f << row.dump() << "\n";
  }
}

std::vector<EpochLogEntry> load_train_log(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read train log: " + path.string());
  std::vector<EpochLogEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    EpochLogEntry e;
    e.epoch = row.at("epoch").get<int>();
    e.train_loss = row.at("train_loss").get<double>();
    e.lr = row.at("lr").get<double>();
    e.tau = row.at("tau").get<double>();
    e.val_paired_alignment = row.at("val_paired_alignment").get<double>();
    out.push_back(e);
  }
  return out;
}

// -------------------- checkpoints --------------------

namespace {

std::string sanitize_group_name(const std::string& name) {
  std::string out = name;
  std::replace(out.begin(), out.end(), '/', '.');
  return out;
}

void write_blob(const std::filesystem::path& path, const std::vector<double>& v) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write blob: " + path.string());
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short write: " + path.string());
}

std::vector<double> read_blob(const std::filesystem::path& path, size_t expected_count) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot read blob: " + path.string());
  auto bytes = static_cast<size_t>(f.tellg());
  if (bytes != expected_count * sizeof(double)) {
    throw std::runtime_error("blob size mismatch for " + path.string() + ": expected " +
                             std::to_string(expected_count * sizeof(double)) + " bytes, found " +
                             std::to_string(bytes));
  }
  f.seekg(0);
  std::vector<double> v(expected_count);
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("short read: " + path.string());
  return v;
}

ordered_json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_floor", c.lr_floor},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"tau_init", c.tau_init},
          {"seed", c.seed},
          {"freeze", c.freeze.name()}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.lr_floor = j.at("lr_floor").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.tau_init = j.at("tau_init").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.freeze = FreezeConfig::from_name(j.at("freeze").get<std::string>());
  return c;
}

int shape_count(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace

Checkpoint capture_checkpoint(DualEncoderModel& model, const AdamW& optimizer,
                              const TrainConfig& config, int epoch, double best_val_alignment,
                              const std::string& config_hash) {
  Checkpoint c;
  c.config_hash = config_hash;
  c.seed = config.seed;
  c.epoch = epoch;
  c.adam_step = optimizer.step_count();
  c.best_val_alignment = best_val_alignment;
  c.image_backend = model.image_backend;
  c.text_backend = model.text_backend;
  c.text_kind = model.text_kind;
  c.config = config;
  c.vocab = model.vocab;
  auto groups = model.param_groups();
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    ParamGroup* g = groups[gi];
    c.groups.push_back({g->name, g->shape, g->trainable, g->apply_weight_decay});
    c.weights[g->name] = g->value;
    c.adam_m[g->name] = optimizer.m_state(gi);
    c.adam_v[g->name] = optimizer.v_state(gi);
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "weights");
  fs::create_directories(dir / "optim");

  ordered_json groups = ordered_json::array();
  for (const auto& g : ckpt.groups) {
    groups.push_back({{"name", g.name},
                      {"shape", g.shape},
                      {"trainable", g.trainable},
                      {"weight_decay", g.apply_weight_decay}});
  }
  double rho = 0.0;
  if (auto it = ckpt.weights.find("temperature/rho"); it != ckpt.weights.end() && !it->second.empty()) {
    rho = it->second[0];
  }
  auto dim_of = [&](const std::string& name, int idx) -> int {
    for (const auto& g : ckpt.groups) {
      if (g.name == name && idx < static_cast<int>(g.shape.size())) return g.shape[idx];
    }
    return 0;
  };
  ordered_json meta = {
      {"format", ckpt.format},
      {"config_hash", ckpt.config_hash},
      {"seed", ckpt.seed},
      {"epoch", ckpt.epoch},
      {"adam_step", ckpt.adam_step},
      {"best_val_alignment", ckpt.best_val_alignment},
      {"rho", rho},
      {"encoders",
       {{"image_backend", ckpt.image_backend},
        {"text_backend", ckpt.text_backend},
        {"text_kind", text_encoder_kind_name(ckpt.text_kind)}}},
      {"dims",
       {{"joint", dim_of("image_head/w2", 0)},
        {"image_feature", dim_of("image_head/w1", 1)},
        {"text_feature", dim_of("text_head/w1", 1)}}},
      {"groups", groups},
  };
  std::ofstream mf(dir / "metadata.json");
  if (!mf) throw std::runtime_error("cannot write checkpoint metadata in " + dir.string());
  mf << meta.dump(2) << "\n";

  for (const auto& g : ckpt.groups) {
    std::string base = sanitize_group_name(g.name);
    write_blob(dir / "weights" / (base + ".bin"), ckpt.weights.at(g.name));
    write_blob(dir / "optim" / (base + ".m.bin"), ckpt.adam_m.at(g.name));
    write_blob(dir / "optim" / (base + ".v.bin"), ckpt.adam_v.at(g.name));
  }
  ckpt.vocab.save(dir / "vocab.json");
  std::ofstream cf(dir / "train_config.json");
  if (!cf) throw std::runtime_error("cannot write train config in " + dir.string());
  cf << train_config_to_json(ckpt.config).dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::path meta_path = dir / "metadata.json";
  std::ifstream mf(meta_path);
  if (!mf) throw std::runtime_error("missing checkpoint metadata: " + meta_path.string());
  json meta = json::parse(mf);

  Checkpoint c;
  c.format = meta.at("format").get<std::string>();
  if (c.format != "uscliplab-checkpoint-v1") {
    throw std::runtime_error("unsupported checkpoint format: " + c.format);
  }
  c.config_hash = meta.at("config_hash").get<std::string>();
  c.seed = meta.at("seed").get<uint64_t>();
  c.epoch = meta.at("epoch").get<int>();
  c.adam_step = meta.at("adam_step").get<int>();
  c.best_val_alignment = meta.at("best_val_alignment").get<double>();
  c.image_backend = meta.at("encoders").at("image_backend").get<std::string>();
  c.text_backend = meta.at("encoders").at("text_backend").get<std::string>();
  c.text_kind = parse_text_encoder_kind(meta.at("encoders").at("text_kind").get<std::string>());
  for (const auto& g : meta.at("groups")) {
    CheckpointGroup cg;
    cg.name = g.at("name").get<std::string>();
    cg.shape = g.at("shape").get<std::vector<int>>();
    cg.trainable = g.at("trainable").get<bool>();
    cg.apply_weight_decay = g.at("weight_decay").get<bool>();
    c.groups.push_back(cg);
  }
  for (const auto& g : c.groups) {
    std::string base = sanitize_group_name(g.name);
    size_t count = static_cast<size_t>(shape_count(g.shape));
    c.weights[g.name] = read_blob(dir / "weights" / (base + ".bin"), count);
    c.adam_m[g.name] = read_blob(dir / "optim" / (base + ".m.bin"), count);
    c.adam_v[g.name] = read_blob(dir / "optim" / (base + ".v.bin"), count);
  }
  c.vocab = Vocabulary::load(dir / "vocab.json");
  std::ifstream cf(dir / "train_config.json");
  if (!cf) throw std::runtime_error("missing train config in checkpoint: " + dir.string());
  c.config = train_config_from_json(json::parse(cf));
  return c;
}

DualEncoderModel rebuild_model(const Checkpoint& ckpt) {
  DualEncoderModel model = DualEncoderModel::build(ckpt.image_backend, ckpt.text_backend,
                                                   ckpt.text_kind, ckpt.vocab, ckpt.seed);
  auto groups = model.param_groups();
  if (groups.size() != ckpt.groups.size()) {
    throw std::runtime_error("checkpoint group count does not match the rebuilt model");
  }
  for (auto* g : groups) {
    auto it = ckpt.weights.find(g->name);
    if (it == ckpt.weights.end()) {
      throw std::runtime_error("checkpoint is missing weights for group " + g->name);
    }
    if (it->second.size() != g->count()) {
      throw std::runtime_error("checkpoint weight size mismatch for group " + g->name);
    }
    g->value = it->second;
  }
  for (const auto& cg : ckpt.groups) {
    if (ParamGroup* g = model.find_group(cg.name)) {
      g->trainable = cg.trainable;
      g->apply_weight_decay = cg.apply_weight_decay;
    }
  }
  return model;
}

// -------------------- fit --------------------

namespace {

struct EvalBatch {
  Mat z_img;
  Mat z_txt;
};

EvalBatch eval_embed(DualEncoderModel& model, const std::vector<Image>& views,
                     const std::vector<TokenSequence>& tokens) {
  Mat fi = model.image_encoder->forward(views, false);
  Mat pi = model.image_head->forward(fi, false);
  Mat ft = model.text_encoder->forward(tokens, false);
  Mat pt = model.text_head->forward(ft, false);
  return {normalize_rows(pi).unit, normalize_rows(pt).unit};
}

double diag_cosine_mean(const Mat& z_img, const Mat& z_txt) {
  double acc = 0.0;
  for (int i = 0; i < z_img.rows; ++i) {
    const double* a = z_img.row(i);
    const double* b = z_txt.row(i);
    double dot = 0.0;
    for (int j = 0; j < z_img.cols; ++j) dot += a[j] * b[j];
    acc += dot;
  }
  return acc / z_img.rows;
}

}  // namespace

FitResult fit(DualEncoderModel& model, const std::vector<TrainPair>& train_pairs,
              const std::vector<TrainPair>& val_pairs, const TrainConfig& config,
              const NormStats& stats, const std::string& config_hash, const Checkpoint* resume) {
  if (train_pairs.size() < 2) throw std::invalid_argument("fit: need at least two training pairs");
  if (val_pairs.empty()) throw std::invalid_argument("fit: validation set is empty");
  if (config.epochs <= 0) throw std::invalid_argument("fit: epochs must be positive");
  if (config.batch_size < 2) throw std::invalid_argument("fit: batch size must be at least 2");
  if (config.tau_init <= 0.0) throw std::invalid_argument("fit: tau_init must be positive");

  configure_trainable(model, config.freeze);

  AdamW opt;
  opt.weight_decay = config.weight_decay;
  opt.beta1 = config.beta1;
  opt.beta2 = config.beta2;
  opt.eps = config.eps;
  auto groups = model.param_groups();
  opt.init(groups);

  int cap = model.text_encoder->token_cap();
  std::vector<TokenSequence> train_tokens;
  train_tokens.reserve(train_pairs.size());
  for (const auto& p : train_pairs) train_tokens.push_back(tokenize(p.caption, cap, model.vocab));
  std::vector<TokenSequence> val_tokens;
  val_tokens.reserve(val_pairs.size());
  for (const auto& p : val_pairs) val_tokens.push_back(tokenize(p.caption, cap, model.vocab));
  std::vector<Image> val_views;
  val_views.reserve(val_pairs.size());
  for (const auto& p : val_pairs) val_views.push_back(preprocess_image(eval_view(p.image), stats));

  FitResult result;
  int start_epoch = 0;
  double best = -2.0;
  int best_epoch = 0;

  if (resume) {
    if (resume->epoch > config.epochs) {
      throw std::invalid_argument("fit: resume checkpoint is past the end of the schedule");
    }
    for (auto* g : groups) {
      auto it = resume->weights.find(g->name);
      if (it == resume->weights.end() || it->second.size() != g->count()) {
        throw std::runtime_error("fit: resume checkpoint does not match the model (group " +
                                 g->name + ")");
      }
      g->value = it->second;
    }
    std::vector<std::vector<double>> m, v;
    for (auto* g : groups) {
      m.push_back(resume->adam_m.at(g->name));
      v.push_back(resume->adam_v.at(g->name));
    }
    opt.restore(resume->adam_step, std::move(m), std::move(v));
    start_epoch = resume->epoch;
    best = resume->best_val_alignment;
    best_epoch = resume->epoch;
    result.best = *resume;
  } else {
    model.temperature.set_rho(std::log(config.tau_init));
  }

  auto val_alignment = [&]() {
    EvalBatch eb = eval_embed(model, val_views, val_tokens);
    return diag_cosine_mean(eb.z_img, eb.z_txt);
  };

  if (!resume) {
    // pre-training snapshot: evaluation-mode loss over the train set, natural order
    double loss_sum = 0.0;
    size_t loss_n = 0;
    size_t pos = 0;
    while (pos < train_pairs.size()) {
      size_t take = std::min(static_cast<size_t>(config.batch_size), train_pairs.size() - pos);
      if (take < 2) break;
      std::vector<Image> views;
      std::vector<TokenSequence> toks;
      views.reserve(take);
      toks.reserve(take);
      for (size_t k = 0; k < take; ++k) {
        views.push_back(preprocess_image(eval_view(train_pairs[pos + k].image), stats));
        toks.push_back(train_tokens[pos + k]);
      }
      EvalBatch eb = eval_embed(model, views, toks);
      Mat logits = similarity_logits(eb.z_img, eb.z_txt, model.temperature);
      loss_sum += info_nce_loss(logits).loss * take;
      loss_n += take;
      pos += take;
    }
    EpochLogEntry e0;
    e0.epoch = 0;
    e0.train_loss = loss_n ? loss_sum / loss_n : 0.0;
    e0.lr = cosine_lr(0, config.epochs, config.lr, config.lr_floor);
    e0.tau = model.temperature.tau();
    e0.val_paired_alignment = val_alignment();
    result.log.push_back(e0);
    best = e0.val_paired_alignment;
    best_epoch = 0;
    result.best = capture_checkpoint(model, opt, config, 0, best, config_hash);
  }

  for (int epoch = start_epoch + 1; epoch <= config.epochs; ++epoch) {
    double lr_now = cosine_lr(epoch - 1, config.epochs, config.lr, config.lr_floor);
    std::vector<size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t loss_n = 0;
    size_t pos = 0;
    uint64_t step = 0;
    while (pos < order.size()) {
      size_t take = std::min(static_cast<size_t>(config.batch_size), order.size() - pos);
      if (take < 2) break;  // a singleton batch has no negatives

      Rng aug_rng(derive_seed(config.seed, "aug", static_cast<uint64_t>(epoch), step));
      std::vector<Image> views;
      std::vector<TokenSequence> toks;
      views.reserve(take);
      toks.reserve(take);
      for (size_t k = 0; k < take; ++k) {
        size_t idx = order[pos + k];
        views.push_back(preprocess_image(augment_train(train_pairs[idx].image, aug_rng), stats));
        toks.push_back(train_tokens[idx]);
      }

      for (auto* g : groups) g->zero_grad();
      bool train_img = config.freeze.train_image_encoder;
      bool train_txt = config.freeze.train_text_encoder;

      Mat fi = model.image_encoder->forward(views, train_img);
      Mat ft = model.text_encoder->forward(toks, train_txt);
      Mat pi = model.image_head->forward(fi, true);
      Mat pt = model.text_head->forward(ft, true);
      RowNorms ri = normalize_rows(pi);
      RowNorms rt = normalize_rows(pt);
      Mat logits = similarity_logits(ri.unit, rt.unit, model.temperature);
      InfoNce nce = info_nce_loss(logits);
      loss_sum += nce.loss * take;
      loss_n += take;

      // d logits / d rho = -logits, so the rho gradient is -sum(G . logits)
      double g_rho = 0.0;
      for (size_t i = 0; i < logits.a.size(); ++i) g_rho += nce.grad.a[i] * logits.a[i];
      model.temperature.group().grad[0] += -g_rho;

      double inv_tau = 1.0 / model.temperature.tau();
      Mat dzi = matmul(nce.grad, rt.unit);
      for (double& x : dzi.a) x *= inv_tau;
      Mat dzt = matmul_tn(nce.grad, ri.unit);
      for (double& x : dzt.a) x *= inv_tau;

      Mat dpi = normalize_rows_backward(dzi, ri);
      Mat dpt = normalize_rows_backward(dzt, rt);
      Mat dfi = model.image_head->backward(dpi);
      Mat dft = model.text_head->backward(dpt);
      if (train_img) model.image_encoder->backward(dfi);
      if (train_txt) model.text_encoder->backward(dft);

      opt.step(groups, lr_now);
      model.temperature.clamp();

      pos += take;
      ++step;
    }

    EpochLogEntry e;
    e.epoch = epoch;
    e.train_loss = loss_n ? loss_sum / loss_n : 0.0;
    e.lr = lr_now;
    e.tau = model.temperature.tau();
    e.val_paired_alignment = val_alignment();
    result.log.push_back(e);

    if (e.val_paired_alignment > best) {
      best = e.val_paired_alignment;
      best_epoch = epoch;
      result.best = capture_checkpoint(model, opt, config, epoch, best, config_hash);
    }
  }

  result.last = capture_checkpoint(model, opt, config, config.epochs, best, config_hash);
  result.best_epoch = best_epoch;
  if (result.best.groups.empty()) result.best = result.last;
  return result;
}

}  // namespace usclip
