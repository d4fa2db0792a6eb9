#include "uscliplab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "uscliplab/tokenizer.hpp"

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

// -------------------- alignment --------------------

namespace {

double row_cosine(const Mat& a, int i, const Mat& b, int j) {
  const double* x = a.row(i);
  const double* y = b.row(j);
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (int k = 0; k < a.cols; ++k) {
    dot += x[k] * y[k];
    xx += x[k] * x[k];
    yy += y[k] * y[k];
  }
  double denom = std::sqrt(xx * yy);
  if (denom < 1e-24) throw std::invalid_argument("cosine of a zero vector");
  return dot / denom;
}

void check_matched_shapes(const Mat& z_img, const Mat& z_txt) {
  if (z_img.rows == 0) throw std::invalid_argument("alignment: empty input");
  if (z_img.rows != z_txt.rows || z_img.cols != z_txt.cols) {
    throw std::invalid_argument("alignment: embedding shapes differ");
  }
}

}  // namespace

double paired_alignment(const Mat& z_img, const Mat& z_txt) {
  check_matched_shapes(z_img, z_txt);
  double acc = 0.0;
  for (int i = 0; i < z_img.rows; ++i) acc += row_cosine(z_img, i, z_txt, i);
  return acc / z_img.rows;
}

double cross_alignment(const Mat& z_img, const Mat& z_txt) {
  check_matched_shapes(z_img, z_txt);
  int n = z_img.rows;
  if (n < 2) throw std::invalid_argument("cross_alignment: need at least two pairs");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      acc += row_cosine(z_img, i, z_txt, j);
    }
  }
  return acc / (static_cast<double>(n) * (n - 1));
}

// -------------------- retrieval --------------------

double recall_at_k(const Mat& similarity, int k, RetrievalDirection direction) {
  if (similarity.rows != similarity.cols) {
    throw std::invalid_argument("recall_at_k: paired evaluation needs a square matrix");
  }
  int n = similarity.rows;
  if (n == 0) throw std::invalid_argument("recall_at_k: empty matrix");
  if (k < 1 || k > n) {
    throw std::invalid_argument("recall_at_k: K=" + std::to_string(k) + " outside [1, " +
                                std::to_string(n) + "]");
  }
  int hits = 0;
  for (int q = 0; q < n; ++q) {
    double match = similarity.at(q, q);
    int rank = 1;
    for (int c = 0; c < n; ++c) {
      if (c == q) continue;
      double score = direction == RetrievalDirection::image_to_text ? similarity.at(q, c)
                                                                    : similarity.at(c, q);
      if (score > match || (score == match && c < q)) ++rank;
    }
    if (rank <= k) ++hits;
  }
  return static_cast<double>(hits) / n;
}

RetrievalTable retrieval_table(const Mat& similarity, const std::vector<int>& ks) {
  if (ks.empty()) throw std::invalid_argument("retrieval_table: no K values");
  RetrievalTable t;
  t.ks = ks;
  std::sort(t.ks.begin(), t.ks.end());
  for (int k : t.ks) {
    t.image_to_text[k] = recall_at_k(similarity, k, RetrievalDirection::image_to_text);
    t.text_to_image[k] = recall_at_k(similarity, k, RetrievalDirection::text_to_image);
  }
  return t;
}

// -------------------- auroc --------------------

double auroc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auroc: score/label count mismatch");
  }
  size_t n = scores.size();
  size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0/1");
    n_pos += l;
  }
  size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auroc: both classes must be present");
  }

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average 1-based ranks over tie runs, accumulate positive ranks
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) {
      if (labels[idx[t]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc_macro_ovr(const Mat& class_scores, const std::vector<int>& labels) {
  if (class_scores.rows != static_cast<int>(labels.size())) {
    throw std::invalid_argument("auroc_macro_ovr: score/label count mismatch");
  }
  int k = class_scores.cols;
  if (k < 2) throw std::invalid_argument("auroc_macro_ovr: need at least two classes");
  for (int l : labels) {
    if (l < 0 || l >= k) throw std::invalid_argument("auroc_macro_ovr: label out of range");
  }
  double acc = 0.0;
  int measured = 0;
  for (int c = 0; c < k; ++c) {
    int pos = 0;
    for (int l : labels) pos += (l == c);
    if (pos == 0 || pos == static_cast<int>(labels.size())) continue;  // unmeasurable class
    std::vector<double> s(labels.size());
    std::vector<int> y(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
      s[i] = class_scores.at(static_cast<int>(i), c);
      y[i] = labels[i] == c ? 1 : 0;
    }
    acc += auroc_binary(s, y);
    ++measured;
  }
  if (measured == 0) {
    throw std::invalid_argument("auroc_macro_ovr: no class has both positives and negatives");
  }
  return acc / measured;
}

// -------------------- zero-shot classification --------------------

const char* prompt_strategy_name(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::single: return "single";
    case PromptStrategy::ensemble_mean: return "ensemble_mean";
    case PromptStrategy::ensemble_max: return "ensemble_max";
  }
  throw std::logic_error("unreachable prompt strategy");
}

PromptStrategy parse_prompt_strategy(const std::string& name) {
  if (name == "single") return PromptStrategy::single;
  if (name == "ensemble_mean") return PromptStrategy::ensemble_mean;
  if (name == "ensemble_max") return PromptStrategy::ensemble_max;
  throw ConfigError("unknown prompt strategy '" + name +
                    "' (expected single, ensemble_mean or ensemble_max)");
}

namespace {

constexpr int kEnsembleTemplates = 10;

// Embeds one caption per row through the text tower in eval mode.
Mat embed_prompts(DualEncoderModel& model, const std::vector<std::string>& prompts) {
  int cap = model.text_encoder->token_cap();
  std::vector<TokenSequence> toks;
  toks.reserve(prompts.size());
  for (const auto& p : prompts) toks.push_back(tokenize(p, cap, model.vocab));
  Mat f = model.text_encoder->forward(toks, false);
  Mat proj = model.text_head->forward(f, false);
  return normalize_rows(proj).unit;
}

}  // namespace

ZeroShotResult zero_shot_classify(const Mat& z_img, const std::vector<ClassPrompt>& classes,
                                  const std::vector<int>& labels, DualEncoderModel& model,
                                  PromptStrategy strategy) {
  if (classes.empty()) throw std::invalid_argument("zero_shot_classify: empty class set");
  if (z_img.rows == 0) throw std::invalid_argument("zero_shot_classify: empty query set");
  if (!labels.empty() && labels.size() != static_cast<size_t>(z_img.rows)) {
    throw std::invalid_argument("zero_shot_classify: label count mismatch");
  }
  const TemplateLibrary& lib = TemplateLibrary::builtin();
  Rng unused_rng(0);  // all renders use explicit template indices
  int n = z_img.rows;
  int k = static_cast<int>(classes.size());

  ZeroShotResult result;
  result.strategy = strategy;
  result.scores = Mat(n, k);

  if (strategy == PromptStrategy::single || strategy == PromptStrategy::ensemble_mean) {
    // one embedding per class
    Mat class_emb(k, kJointDim);
    if (strategy == PromptStrategy::single) {
      std::vector<std::string> prompts;
      prompts.reserve(classes.size());
      for (const auto& c : classes) {
        prompts.push_back(render_caption(lib, 2, 1, c.fields, unused_rng).text);
      }
      class_emb = embed_prompts(model, prompts);
    } else {
      for (int c = 0; c < k; ++c) {
        std::vector<std::string> prompts;
        prompts.reserve(kEnsembleTemplates);
        for (int t = 1; t <= kEnsembleTemplates; ++t) {
          prompts.push_back(render_caption(lib, 2, t, classes[c].fields, unused_rng).text);
        }
        Mat emb = embed_prompts(model, prompts);
        Mat mean(1, emb.cols);
        for (int r = 0; r < emb.rows; ++r) {
          for (int d = 0; d < emb.cols; ++d) mean.at(0, d) += emb.at(r, d) / emb.rows;
        }
        Mat unit = normalize_rows(mean).unit;
        std::copy(unit.row(0), unit.row(0) + unit.cols, class_emb.row(c));
      }
    }
    result.scores = matmul_nt(z_img, class_emb);
  } else {
    // ensemble_max: per-image score is the best cosine across the ten prompts
    for (int c = 0; c < k; ++c) {
      std::vector<std::string> prompts;
      prompts.reserve(kEnsembleTemplates);
      for (int t = 1; t <= kEnsembleTemplates; ++t) {
        prompts.push_back(render_caption(lib, 2, t, classes[c].fields, unused_rng).text);
      }
      Mat emb = embed_prompts(model, prompts);
      Mat cos = matmul_nt(z_img, emb);  // n x 10
      for (int i = 0; i < n; ++i) {
        const double* row = cos.row(i);
        result.scores.at(i, c) = *std::max_element(row, row + cos.cols);
      }
    }
  }

  result.predictions.resize(n);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = result.scores.row(i);
    int argmax = 0;
    for (int c = 1; c < k; ++c) {
      if (row[c] > row[argmax]) argmax = c;  // ties keep the lowest index
    }
    result.predictions[i] = argmax;
    if (!labels.empty() && labels[i] == argmax) ++correct;
  }
  result.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / n;
  return result;
}

// -------------------- linear probe --------------------

namespace {

struct ProbeState {
  Mat w;
  std::vector<double> b;
};

// objective = sum-CE + 0.5 * l2 * ||W||^2 ; fills grads when requested
double probe_objective(const Mat& x, const std::vector<int>& labels, const ProbeState& s,
                       double l2, Mat* grad_w, std::vector<double>* grad_b) {
  int n = x.rows, d = x.cols, k = s.w.rows;
  if (grad_w) {
    *grad_w = Mat(k, d);
    grad_b->assign(k, 0.0);
  }
  double obj = 0.0;
  std::vector<double> logits(k);
  for (int i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    for (int c = 0; c < k; ++c) {
      const double* wc = s.w.row(c);
      double acc = s.b[c];
      for (int j = 0; j < d; ++j) acc += wc[j] * xi[j];
      logits[c] = acc;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits[c] - mx);
    obj += std::log(z) - (logits[labels[i]] - mx);
    if (grad_w) {
      for (int c = 0; c < k; ++c) {
        double p = std::exp(logits[c] - mx) / z - (labels[i] == c ? 1.0 : 0.0);
        (*grad_b)[c] += p;
        double* gw = grad_w->row(c);
        for (int j = 0; j < d; ++j) gw[j] += p * xi[j];
      }
    }
  }
  double w2 = 0.0;
  for (double v : s.w.a) w2 += v * v;
  obj += 0.5 * l2 * w2;
  if (grad_w) {
    for (size_t t = 0; t < s.w.a.size(); ++t) grad_w->a[t] += l2 * s.w.a[t];
  }
  return obj;
}

}  // namespace

ProbeModel train_linear_probe(const Mat& x, const std::vector<int>& labels, int num_classes,
                              const ProbeConfig& cfg) {
  if (x.rows == 0) throw std::invalid_argument("linear probe: empty training set");
  if (static_cast<size_t>(x.rows) != labels.size()) {
    throw std::invalid_argument("linear probe: label count mismatch");
  }
  if (num_classes < 2) throw std::invalid_argument("linear probe: need at least two classes");
  std::vector<int> present(num_classes, 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw std::invalid_argument("linear probe: label out of range");
    present[l] = 1;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (!present[c]) {
      throw std::invalid_argument("linear probe: class " + std::to_string(c) +
                                  " is absent from the training set");
    }
  }

  ProbeState s{Mat(num_classes, x.cols), std::vector<double>(num_classes, 0.0)};
  Mat grad_w;
  std::vector<double> grad_b;
  double obj = probe_objective(x, labels, s, cfg.l2, &grad_w, &grad_b);
  double step = cfg.init_step;
  int iters = 0;

  for (; iters < cfg.max_iters; ++iters) {
    ProbeState cand;
    double cand_obj = 0.0;
    bool accepted = false;
    while (step > 1e-14) {
      cand.w = s.w;
      cand.b = s.b;
      for (size_t t = 0; t < cand.w.a.size(); ++t) cand.w.a[t] -= step * grad_w.a[t];
      for (int c = 0; c < num_classes; ++c) cand.b[c] -= step * grad_b[c];
      cand_obj = probe_objective(x, labels, cand, cfg.l2, nullptr, nullptr);
      if (cand_obj <= obj) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    double improvement = obj - cand_obj;
    s = std::move(cand);
    obj = cand_obj;
    step *= 1.2;
    if (improvement < cfg.tol * (1.0 + std::abs(obj))) break;
    probe_objective(x, labels, s, cfg.l2, &grad_w, &grad_b);
  }

  ProbeModel m;
  m.w = s.w;
  m.b = s.b;
  m.num_classes = num_classes;
  m.final_objective = obj;
  m.iters = iters;
  return m;
}

Mat probe_scores(const ProbeModel& m, const Mat& x) {
  if (x.cols != m.w.cols) throw std::invalid_argument("probe_scores: dim mismatch");
  Mat scores = matmul_nt(x, m.w);
  for (int i = 0; i < scores.rows; ++i) {
    for (int c = 0; c < m.num_classes; ++c) scores.at(i, c) += m.b[c];
  }
  return scores;
}

std::vector<int> probe_predict(const ProbeModel& m, const Mat& x) {
  Mat scores = probe_scores(m, x);
  std::vector<int> preds(scores.rows);
  for (int i = 0; i < scores.rows; ++i) {
    const double* row = scores.row(i);
    int argmax = 0;
    for (int c = 1; c < scores.cols; ++c) {
      if (row[c] > row[argmax]) argmax = c;
    }
    preds[i] = argmax;
  }
  return preds;
}

namespace {

Mat gather_rows(const Mat& x, const std::vector<size_t>& idx) {
  Mat out(static_cast<int>(idx.size()), x.cols);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= static_cast<size_t>(x.rows)) {
      throw std::invalid_argument("row index out of range");
    }
    std::copy(x.row(static_cast<int>(idx[i])), x.row(static_cast<int>(idx[i])) + x.cols,
              out.row(static_cast<int>(i)));
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(labels.at(i));
  return out;
}

}  // namespace

ProbeResult linear_probe(const Mat& x, const std::vector<int>& labels,
                         const std::vector<size_t>& train_idx, const std::vector<size_t>& test_idx,
                         int num_classes, const ProbeConfig& cfg) {
  if (train_idx.empty() || test_idx.empty()) {
    throw std::invalid_argument("linear_probe: empty probe split");
  }
  ProbeModel m = train_linear_probe(gather_rows(x, train_idx), gather_labels(labels, train_idx),
                                    num_classes, cfg);
  Mat test_x = gather_rows(x, test_idx);
  std::vector<int> test_y = gather_labels(labels, test_idx);
  Mat scores = probe_scores(m, test_x);
  ProbeResult r;
  r.auroc = auroc_macro_ovr(scores, test_y);
  std::vector<int> preds = probe_predict(m, test_x);
  int correct = 0;
  for (size_t i = 0; i < test_y.size(); ++i) correct += (preds[i] == test_y[i]);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(test_y.size());
  return r;
}

// -------------------- few-shot adaptation --------------------

FewShotDraw few_shot_select(const std::vector<int>& labels, const std::vector<size_t>& pool,
                            int num_classes, double fraction, uint64_t seed) {
  if (pool.empty()) throw std::invalid_argument("few_shot_select: empty pool");
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("few_shot_select: fraction outside (0, 1]");
  }
  if (num_classes < 1) throw std::invalid_argument("few_shot_select: no classes");

  std::vector<std::vector<size_t>> by_class(num_classes);
  std::vector<size_t> sorted_pool = pool;
  std::sort(sorted_pool.begin(), sorted_pool.end());
  for (size_t idx : sorted_pool) {
    int l = labels.at(idx);
    if (l < 0 || l >= num_classes) throw std::invalid_argument("few_shot_select: label out of range");
    by_class[l].push_back(idx);
  }
  for (int c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) {
      throw std::invalid_argument("few_shot_select: class " + std::to_string(c) +
                                  " is absent from the pool");
    }
  }

  size_t n = sorted_pool.size();
  size_t requested = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n)));
  size_t m = std::max(requested, static_cast<size_t>(num_classes));
  m = std::min(m, n);
  FewShotDraw draw;
  draw.floor_applied = m > requested;
  draw.shots = m;

  // largest-remainder allocation proportional to class counts
  std::vector<size_t> seats(num_classes, 0);
  std::vector<std::pair<double, int>> remainders;
  size_t assigned = 0;
  for (int c = 0; c < num_classes; ++c) {
    double exact = static_cast<double>(m) * by_class[c].size() / static_cast<double>(n);
    seats[c] = static_cast<size_t>(std::floor(exact + 1e-12));
    seats[c] = std::min(seats[c], by_class[c].size());
    assigned += seats[c];
    remainders.emplace_back(exact - static_cast<double>(seats[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first > b.first + 1e-15;  // ties keep class order
  });
  while (assigned < m) {
    bool progressed = false;
    for (size_t r = 0; r < remainders.size() && assigned < m; ++r) {
      int c = remainders[r].second;
      if (seats[c] < by_class[c].size()) {
        ++seats[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;  // no spare capacity anywhere
  }
  // guarantee one shot per class, taking from the largest allocation
  for (int c = 0; c < num_classes; ++c) {
    while (seats[c] == 0) {
      int donor = -1;
      for (int d = 0; d < num_classes; ++d) {
        if (seats[d] > 1 && (donor < 0 || seats[d] > seats[donor])) donor = d;
      }
      if (donor < 0) break;
      --seats[donor];
      ++seats[c];
    }
    if (seats[c] == 0) {
      throw std::runtime_error("few_shot_select: cannot cover every class");
    }
  }

  for (int c = 0; c < num_classes; ++c) {
    std::vector<size_t> members = by_class[c];  // ascending
    Rng rng(derive_seed(seed, "few-shot", static_cast<uint64_t>(c)));
    rng.shuffle(members);
    for (size_t t = 0; t < seats[c]; ++t) draw.selected.push_back(members[t]);
  }
  std::sort(draw.selected.begin(), draw.selected.end());
  return draw;
}

FewShotResult few_shot_adapt(const Mat& x, const std::vector<int>& labels,
                             const std::vector<size_t>& train_pool,
                             const std::vector<size_t>& test_idx, int num_classes, double fraction,
                             const std::vector<uint64_t>& seeds, const ProbeConfig& cfg) {
  if (seeds.empty()) throw std::invalid_argument("few_shot_adapt: no seeds");
  FewShotResult r;
  r.fraction = fraction;
  r.seeds = seeds;
  for (uint64_t seed : seeds) {
    FewShotDraw draw = few_shot_select(labels, train_pool, num_classes, fraction, seed);
    r.floor_applied = r.floor_applied || draw.floor_applied;
    ProbeResult pr = linear_probe(x, labels, draw.selected, test_idx, num_classes, cfg);
    r.aurocs.push_back(pr.auroc);
    r.accuracies.push_back(pr.accuracy);
  }
  double sum = std::accumulate(r.aurocs.begin(), r.aurocs.end(), 0.0);
  r.auroc_mean = sum / static_cast<double>(r.aurocs.size());
  if (r.aurocs.size() >= 2) {
    double ss = 0.0;
    for (double a : r.aurocs) ss += (a - r.auroc_mean) * (a - r.auroc_mean);
    r.auroc_std = std::sqrt(ss / static_cast<double>(r.aurocs.size() - 1));
  }
  return r;
}

// -------------------- per-group breakdown --------------------

GroupReport per_group_report(const std::vector<int>& predictions, const std::vector<int>& labels,
                             const std::vector<std::string>& groups,
                             const std::vector<std::string>& expected_groups) {
  if (predictions.size() != labels.size() || predictions.size() != groups.size()) {
    throw std::invalid_argument("per_group_report: input length mismatch");
  }
  std::map<std::string, GroupAccuracy> by_group;
  int total_correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    GroupAccuracy& g = by_group[groups[i]];
    g.group = groups[i];
    ++g.count;
    if (predictions[i] == labels[i]) {
      ++g.correct;
      ++total_correct;
    }
  }
  GroupReport report;
  report.total = static_cast<int>(predictions.size());
  report.overall = report.total ? static_cast<double>(total_correct) / report.total : 0.0;
  for (auto& [name, g] : by_group) {
    g.accuracy = static_cast<double>(g.correct) / g.count;
    report.groups.push_back(g);
  }
  for (const auto& expected : expected_groups) {
    if (!by_group.count(expected)) report.omitted.push_back(expected);
  }
  return report;
}

// -------------------- report serialization --------------------

namespace {

ordered_json retrieval_to_json(const RetrievalTable& t) {
  ordered_json i2t = ordered_json::object();
  ordered_json t2i = ordered_json::object();
  for (int k : t.ks) {
    std::string key = "R@" + std::to_string(k);
    i2t[key] = t.image_to_text.at(k);
    t2i[key] = t.text_to_image.at(k);
  }
  return {{"image_to_text", i2t}, {"text_to_image", t2i}};
}

}  // namespace

void save_eval_report(const EvalReport& r, const std::filesystem::path& path) {
  ordered_json by_organ = ordered_json::object();
  for (const auto& g : r.zero_shot_by_organ.groups) {
    by_organ[g.group] = {{"count", g.count}, {"correct", g.correct}, {"accuracy", g.accuracy}};
  }
  ordered_json few_shot = ordered_json::array();
  for (const auto& f : r.few_shot) {
    few_shot.push_back({{"fraction", f.fraction},
                        {"seeds", f.seeds},
                        {"aurocs", f.aurocs},
                        {"accuracies", f.accuracies},
                        {"auroc_mean", f.auroc_mean},
                        {"auroc_std", f.auroc_std},
                        {"floor_applied", f.floor_applied}});
  }
  ordered_json doc = {
      {"model", r.model_tag},
      {"count", r.eval_count},
      {"alignment",
       {{"paired", r.paired_alignment},
        {"cross", r.cross_alignment},
        {"cross_definition", kCrossAlignmentNote}}},
      {"zero_shot",
       {{"strategy", r.strategy},
        {"accuracy", r.zero_shot_accuracy},
        {"by_organ", by_organ},
        {"omitted_organs", r.zero_shot_by_organ.omitted}}},
      {"retrieval", retrieval_to_json(r.retrieval)},
      {"probe", {{"auroc", r.probe_auroc}, {"accuracy", r.probe_accuracy}}},
      {"few_shot", few_shot},
  };
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write eval report: " + path.string());
  f << doc.dump(2) << "\n";
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read eval report: " + path.string());
  json doc = json::parse(f);
  EvalReport r;
  r.model_tag = doc.at("model").get<std::string>();
  r.eval_count = doc.at("count").get<int>();
  r.paired_alignment = doc.at("alignment").at("paired").get<double>();
  r.cross_alignment = doc.at("alignment").at("cross").get<double>();
  r.strategy = doc.at("zero_shot").at("strategy").get<std::string>();
  r.zero_shot_accuracy = doc.at("zero_shot").at("accuracy").get<double>();
  r.zero_shot_by_organ.overall = r.zero_shot_accuracy;
  for (auto& [name, g] : doc.at("zero_shot").at("by_organ").items()) {
    GroupAccuracy ga;
    ga.group = name;
    ga.count = g.at("count").get<int>();
    ga.correct = g.at("correct").get<int>();
    ga.accuracy = g.at("accuracy").get<double>();
    r.zero_shot_by_organ.groups.push_back(ga);
    r.zero_shot_by_organ.total += ga.count;
  }
  r.zero_shot_by_organ.omitted =
      doc.at("zero_shot").at("omitted_organs").get<std::vector<std::string>>();
  for (auto& [key, value] : doc.at("retrieval").at("image_to_text").items()) {
    int k = std::stoi(key.substr(2));
    r.retrieval.ks.push_back(k);
    r.retrieval.image_to_text[k] = value.get<double>();
  }
  std::sort(r.retrieval.ks.begin(), r.retrieval.ks.end());
  for (auto& [key, value] : doc.at("retrieval").at("text_to_image").items()) {
    r.retrieval.text_to_image[std::stoi(key.substr(2))] = value.get<double>();
  }
  r.probe_auroc = doc.at("probe").at("auroc").get<double>();
  r.probe_accuracy = doc.at("probe").at("accuracy").get<double>();
  for (const auto& f_json : doc.at("few_shot")) {
    FewShotResult fs;
    fs.fraction = f_json.at("fraction").get<double>();
    fs.seeds = f_json.at("seeds").get<std::vector<uint64_t>>();
    fs.aurocs = f_json.at("aurocs").get<std::vector<double>>();
    fs.accuracies = f_json.at("accuracies").get<std::vector<double>>();
    fs.auroc_mean = f_json.at("auroc_mean").get<double>();
    fs.auroc_std = f_json.at("auroc_std").get<double>();
    fs.floor_applied = f_json.at("floor_applied").get<bool>();
    r.few_shot.push_back(fs);
  }
  return r;
}

}  // namespace usclip
