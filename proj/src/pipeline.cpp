#include "uscliplab/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "uscliplab/captions.hpp"
#include "uscliplab/synthetic.hpp"

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::filesystem::path out_path(const RunConfig& config, const char* rel) {
  return std::filesystem::path(config.paths.out_dir) / rel;
}

void require_artifact(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("missing artifact " + path.string() + " (run `" + producer + "` first)");
  }
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  ordered_json j{{"mean", stats.mean}, {"std", stats.std}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write norm stats: " + path.string());
  f << j.dump(2) << "\n";
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open norm stats: " + path.string());
  json j = json::parse(f);
  NormStats stats;
  stats.mean = j.at("mean").get<double>();
  stats.std = j.at("std").get<double>();
  return stats;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? std::string(v) : fallback;
}

Mat slice_rows(const Mat& m, int lo, int hi) {
  Mat out(hi - lo, m.cols);
  std::copy(m.row(lo), m.row(lo) + out.size(), out.a.begin());
  return out;
}

}  // namespace

// -------------------- synth --------------------

void run_synth(const RunConfig& config, int n, uint64_t seed) {
  if (n < 12) throw ConfigError("synth needs --n >= 12 (one record per organ/condition cell)");
  auto records = generate_synthetic_corpus(n, seed);

  // images live next to the manifest so the manifest can use relative paths
  std::filesystem::path manifest = manifest_path(config);
  std::filesystem::path dir = manifest.parent_path();
  std::filesystem::create_directories(dir / "images");

  std::vector<ManifestDataset> datasets;
  std::map<std::string, size_t> dataset_index;
  for (const auto& rec : records) {
    auto [it, inserted] = dataset_index.try_emplace(rec.source_dataset, datasets.size());
    if (inserted) datasets.push_back({rec.source_dataset, rec.organ, false, {}});

    std::string rel = "images/" + rec.sample_id + ".png";
    write_png(dir / rel, *rec.embedded_image);

    ManifestRecord mr;
    mr.sample_id = rec.sample_id;
    mr.image_path = rel;
    mr.raw_label = rec.condition;
    mr.metadata = rec.metadata;
    datasets[it->second].records.push_back(std::move(mr));
  }
  save_manifest(manifest, datasets);
  write_provenance(config, "synth");
}

// -------------------- ingest --------------------

void run_ingest(const RunConfig& config) {
  std::filesystem::path manifest = manifest_path(config);
  if (!std::filesystem::exists(manifest)) {
    throw ConfigError("missing manifest " + manifest.string() +
                      " (run `synth` or point paths.manifest at one)");
  }
  DatasetRegistry registry = DatasetRegistry::from_manifest(manifest);
  registry.sort_by_sample_id();

  std::vector<SampleRecord> records = registry.records();
  if (config.corpus.dedup) records = deduplicate(records);
  records = drop_blank_frames(records, config.corpus.blank_threshold);

  std::vector<SampleRecord> internal;
  for (const auto& r : records) {
    if (!(r.split && *r.split == Split::external)) internal.push_back(r);
  }
  SplitAssignment split = stratified_split(internal, config.corpus.ratios, config.seed);
  apply_split(records, split);

  std::vector<SampleRecord> train;
  for (const auto& r : records) {
    if (r.split && *r.split == Split::train) train.push_back(r);
  }
  NormStats stats = compute_norm_stats(train);

  std::filesystem::path corpus_dir = out_path(config, "corpus");
  std::filesystem::create_directories(corpus_dir);
  save_registry(corpus_dir / "registry.json", records);
  split.save(corpus_dir / "split.json");
  save_norm_stats(corpus_dir / "norm_stats.json", stats);
  write_provenance(config, "ingest");
}

// -------------------- caption --------------------

void run_caption(const RunConfig& config, LlmClient* client) {
  std::filesystem::path registry_path = out_path(config, "corpus/registry.json");
  require_artifact(registry_path, "ingest");
  std::vector<SampleRecord> records = load_registry(registry_path);

  const bool llm_mode = config.captions.mode == "llm";
  std::unique_ptr<HttpLlmClient> owned;
  if (llm_mode && client == nullptr) {
    std::string endpoint = config.captions.llm_endpoint;
    if (endpoint.empty()) endpoint = env_or("USCLIPLAB_LLM_ENDPOINT", "");
    if (endpoint.empty()) {
      throw ConfigError(
          "llm caption mode needs an endpoint (captions.llm_endpoint or USCLIPLAB_LLM_ENDPOINT)");
    }
    owned = std::make_unique<HttpLlmClient>(endpoint, env_or("USCLIPLAB_LLM_API_KEY", ""));
    client = owned.get();
  }
  RewriteOptions options;
  options.model = config.captions.llm_model;
  if (options.model == "default") options.model = env_or("USCLIPLAB_LLM_MODEL", options.model);
  options.retries = config.captions.retries;
  options.grounding_filter = config.captions.grounding_filter;

  const TemplateLibrary& lib = TemplateLibrary::builtin();
  std::vector<CaptionRow> rows;
  rows.reserve(records.size());
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (auto& rec : records) {
    Caption cap;
    if (rec.caption_source == CaptionSource::expert && rec.caption) {
      cap.text = *rec.caption;
      cap.tier = 0;
      cap.source = CaptionSource::expert;
    } else {
      MetadataFields fields = build_metadata_fields(rec);
      int tier = config.captions.tier_policy == "auto" ? select_tier(fields)
                                                       : std::stoi(config.captions.tier_policy);
      Rng rng(derive_seed(config.seed, "caption", fnv1a64(rec.sample_id)));
      cap = render_caption(lib, tier, std::nullopt, fields, rng);
      if (llm_mode) cap = rewrite_with_llm(fields, cap, *client, rng, options);
      rec.caption = cap.text;
      rec.caption_source = cap.source;
    }
    texts.push_back(cap.text);
    rows.push_back({rec.sample_id, std::move(cap)});
  }

  std::filesystem::path caption_dir = out_path(config, "captions");
  std::filesystem::create_directories(caption_dir);
  save_captions_jsonl(caption_dir / "captions.jsonl", rows);

  DiversityReport div = diversity_report(texts);
  ordered_json j{{"caption_count", div.caption_count},
                 {"total_tokens", div.total_tokens},
                 {"unique_unigrams", div.unique_unigrams},
                 {"unique_bigrams", div.unique_bigrams},
                 {"distinct1", div.ratios.distinct1},
                 {"distinct2", div.ratios.distinct2},
                 {"mean_len", div.ratios.mean_len},
                 {"median_len", div.median_len},
                 {"p90_len", div.p90_len}};
  std::ofstream f(caption_dir / "diversity.json");
  if (!f) throw std::runtime_error("cannot write diversity report");
  f << j.dump(2) << "\n";

  save_registry(registry_path, records);  // captions folded back in for train/eval
  write_provenance(config, "caption");
}

// -------------------- train --------------------

FitResult run_train(const RunConfig& config) {
  std::filesystem::path registry_path = out_path(config, "corpus/registry.json");
  std::filesystem::path stats_path = out_path(config, "corpus/norm_stats.json");
  require_artifact(registry_path, "ingest");
  require_artifact(stats_path, "ingest");
  std::vector<SampleRecord> records = load_registry(registry_path);
  NormStats stats = load_norm_stats(stats_path);

  std::vector<TrainPair> train, val;
  std::vector<std::string> train_captions;
  for (const auto& rec : records) {
    if (!rec.split || (*rec.split != Split::train && *rec.split != Split::val)) continue;
    if (!rec.caption) {
      throw ConfigError("record '" + rec.sample_id + "' has no caption (run `caption` first)");
    }
    TrainPair pair{rec.sample_id, load_image(rec), *rec.caption};
    if (*rec.split == Split::train) {
      train_captions.push_back(*rec.caption);
      train.push_back(std::move(pair));
    } else {
      val.push_back(std::move(pair));
    }
  }
  // vocabulary from the train split only, so val/test words never leak in
  Vocabulary vocab = Vocabulary::build(train_captions);

  DualEncoderModel model = DualEncoderModel::build(
      config.encoders.image_backend, config.encoders.text_backend,
      parse_text_encoder_kind(config.encoders.text_kind), std::move(vocab), config.seed);
  FitResult result = fit(model, train, val, config.training, stats, config.config_hash);

  std::filesystem::path ckpt_dir = out_path(config, "checkpoints") / model_tag(config);
  save_checkpoint(result.best, ckpt_dir / "best");
  save_checkpoint(result.last, ckpt_dir / "last");
  save_train_log(result.log, ckpt_dir / "train_log.jsonl");
  write_provenance(config, "train");
  return result;
}

// -------------------- eval --------------------

namespace {

int organ_index(Organ o) { return static_cast<int>(o); }

// 12-way (organ, condition) cell labels for the probe tasks
int cell_label(const SampleRecord& rec) {
  if (!rec.condition) {
    throw ConfigError("record '" + rec.sample_id + "' has no condition label; the probe needs one");
  }
  auto conditions = canonical_conditions(rec.organ);
  auto it = std::find(conditions.begin(), conditions.end(), *rec.condition);
  if (it == conditions.end()) {
    throw std::runtime_error("condition '" + *rec.condition + "' is not canonical for " +
                             std::string(organ_name(rec.organ)));
  }
  return organ_index(rec.organ) * 3 + static_cast<int>(it - conditions.begin());
}

}  // namespace

EvalReport run_eval(const RunConfig& config, const std::string& strategy_override) {
  std::string tag = model_tag(config);
  std::filesystem::path ckpt_dir = out_path(config, "checkpoints") / tag / "best";
  require_artifact(ckpt_dir / "metadata.json", "train");
  Checkpoint ckpt = load_checkpoint(ckpt_dir);
  DualEncoderModel model = rebuild_model(ckpt);

  std::filesystem::path registry_path = out_path(config, "corpus/registry.json");
  std::filesystem::path stats_path = out_path(config, "corpus/norm_stats.json");
  require_artifact(registry_path, "ingest");
  require_artifact(stats_path, "ingest");
  std::vector<SampleRecord> records = load_registry(registry_path);
  NormStats stats = load_norm_stats(stats_path);

  std::vector<const SampleRecord*> probe_train, test;
  for (const auto& rec : records) {
    if (!rec.split) continue;
    if (*rec.split == Split::test) test.push_back(&rec);
    else if (*rec.split == Split::train) probe_train.push_back(&rec);
  }
  if (test.size() < 2) throw ConfigError("test split has fewer than two records; nothing to evaluate");

  // one image pass over probe-train + test; the tail rows are the test split
  std::vector<const SampleRecord*> all_recs = probe_train;
  all_recs.insert(all_recs.end(), test.begin(), test.end());
  std::vector<Image> views;
  views.reserve(all_recs.size());
  for (const auto* rec : all_recs) {
    views.push_back(preprocess_image(eval_view(load_image(*rec)), stats));
  }
  Mat features_all = encode_image(model, views);
  Mat z_all = project_and_normalize(features_all, *model.image_head);
  const int n_train = static_cast<int>(probe_train.size());
  const int n_test = static_cast<int>(test.size());
  Mat z_img = slice_rows(z_all, n_train, n_train + n_test);

  const int cap = model.text_encoder->token_cap();
  std::vector<TokenSequence> sequences;
  sequences.reserve(test.size());
  for (const auto* rec : test) {
    if (!rec->caption) {
      throw ConfigError("record '" + rec->sample_id + "' has no caption (run `caption` first)");
    }
    sequences.push_back(tokenize(*rec->caption, cap, model.vocab));
  }
  Mat text_features = encode_text(model, sequences);
  Mat z_txt = project_and_normalize(text_features, *model.text_head);

  EvalReport report;
  report.model_tag = tag;
  report.eval_count = n_test;
  report.paired_alignment = paired_alignment(z_img, z_txt);
  report.cross_alignment = cross_alignment(z_img, z_txt);

  Mat similarity = matmul_nt(z_img, z_txt);
  std::vector<int> ks;
  for (int k : config.evaluation.recall_ks) {
    if (k >= 1 && k <= n_test) ks.push_back(k);
  }
  report.retrieval = retrieval_table(similarity, ks);

  // zero-shot organ classification; prompts follow the organ order, so the
  // class index of a prediction is the organ index
  PromptStrategy strategy = parse_prompt_strategy(
      strategy_override.empty() ? config.evaluation.strategy : strategy_override);
  std::vector<ClassPrompt> prompts;
  std::vector<std::string> expected_groups;
  for (Organ o : all_organs()) {
    ClassPrompt prompt;
    prompt.label = organ_name(o);
    prompt.fields.tissue = organ_name(o);
    prompt.fields.condition = "unspecified condition";  // organ prompts carry no diagnosis
    prompts.push_back(std::move(prompt));
    expected_groups.push_back(organ_name(o));
  }
  std::vector<int> organ_labels;
  std::vector<std::string> organ_groups;
  for (const auto* rec : test) {
    organ_labels.push_back(organ_index(rec->organ));
    organ_groups.push_back(organ_name(rec->organ));
  }
  ZeroShotResult zs = zero_shot_classify(z_img, prompts, organ_labels, model, strategy);
  report.strategy = prompt_strategy_name(strategy);
  report.zero_shot_accuracy = zs.accuracy;
  report.zero_shot_by_organ = per_group_report(zs.predictions, organ_labels, organ_groups,
                                               expected_groups);

  // probe + few-shot over the (organ, condition) cells present in the train
  // split, on either the joint embeddings or the raw encoder features
  Mat probe_x = config.evaluation.probe_input == "features" ? features_all : z_all;
  std::vector<int> raw_cells(all_recs.size());
  for (size_t i = 0; i < all_recs.size(); ++i) raw_cells[i] = cell_label(*all_recs[i]);
  std::map<int, int> dense;  // cell id -> contiguous class index
  for (int i = 0; i < n_train; ++i) dense.emplace(raw_cells[i], 0);
  int next_class = 0;
  for (auto& [cell, idx] : dense) idx = next_class++;
  std::vector<int> cells(all_recs.size());
  for (size_t i = 0; i < all_recs.size(); ++i) {
    auto it = dense.find(raw_cells[i]);
    if (it == dense.end()) {
      throw std::runtime_error("probe: test record '" + all_recs[i]->sample_id +
                               "' has a condition cell absent from the train split");
    }
    cells[i] = it->second;
  }
  std::vector<size_t> train_idx(n_train), test_idx(n_test);
  std::iota(train_idx.begin(), train_idx.end(), size_t{0});
  std::iota(test_idx.begin(), test_idx.end(), static_cast<size_t>(n_train));

  ProbeConfig probe_cfg;
  probe_cfg.l2 = config.evaluation.probe_l2;
  ProbeResult probe = linear_probe(probe_x, cells, train_idx, test_idx, next_class, probe_cfg);
  report.probe_auroc = probe.auroc;
  report.probe_accuracy = probe.accuracy;

  for (double fraction : config.evaluation.fractions) {
    report.few_shot.push_back(few_shot_adapt(probe_x, cells, train_idx, test_idx, next_class,
                                             fraction, config.evaluation.few_shot_seeds,
                                             probe_cfg));
  }

  std::filesystem::path eval_dir = out_path(config, "eval");
  std::filesystem::create_directories(eval_dir);
  save_eval_report(report, eval_dir / ("report_" + tag + ".json"));
  write_provenance(config, "eval");
  return report;
}

// -------------------- report --------------------

ReportFiles run_report(const RunConfig& config, bool render_svg) {
  std::filesystem::path eval_dir = out_path(config, "eval");
  std::vector<std::filesystem::path> files;
  if (std::filesystem::exists(eval_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(eval_dir)) {
      if (!entry.is_regular_file()) continue;
      std::string name = entry.path().filename().string();
      if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ConfigError("no evaluation reports under " + eval_dir.string() + " (run `eval` first)");
  }
  std::vector<EvalReport> reports;
  reports.reserve(files.size());
  for (const auto& file : files) reports.push_back(load_eval_report(file));

  ReportFiles out = emit_report(reports, out_path(config, "report"), render_svg);
  write_provenance(config, "report");
  return out;
}

// -------------------- provenance --------------------

void write_provenance(const RunConfig& config, const std::string& stage) {
  std::filesystem::path dir = out_path(config, "provenance");
  std::filesystem::create_directories(dir);
  ordered_json j{{"config_hash", config.config_hash},
                 {"seed", config.seed},
                 {"version", kVersion}};
  std::ofstream f(dir / (stage + ".json"));
  if (!f) throw std::runtime_error("cannot write provenance for stage " + stage);
  f << j.dump(2) << "\n";
}

// -------------------- cli --------------------

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"contrastive image-text pipeline for ultrasound corpora", "uscliplab"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--override", overrides, "dotted key=value config override (repeatable)");
  };

  int synth_n = 120;
  uint64_t synth_seed = 0;
  std::string eval_strategy;
  bool report_render = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus and manifest");
  add_common(synth);
  synth->add_option("--n", synth_n, "number of records");
  CLI::Option* seed_opt =
      synth->add_option("--seed", synth_seed, "generation seed (default: the config seed)");

  CLI::App* ingest = app.add_subcommand("ingest", "manifest -> split registry and norm stats");
  add_common(ingest);
  CLI::App* caption = app.add_subcommand("caption", "caption every registry record");
  add_common(caption);
  CLI::App* train = app.add_subcommand("train", "train the dual encoder on the train split");
  add_common(train);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate the best checkpoint on the test split");
  add_common(eval_cmd);
  eval_cmd->add_option("--strategy", eval_strategy,
                       "zero-shot prompt strategy (single | ensemble_mean | ensemble_max)");
  CLI::App* report_cmd = app.add_subcommand("report", "aggregate eval reports into tables");
  add_common(report_cmd);
  report_cmd->add_flag("--render", report_render, "also render a static SVG chart");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig config = load_config(config_path, overrides);
    if (synth->parsed()) {
      run_synth(config, synth_n, seed_opt->count() ? synth_seed : config.seed);
    } else if (ingest->parsed()) {
      run_ingest(config);
    } else if (caption->parsed()) {
      run_caption(config);
    } else if (train->parsed()) {
      run_train(config);
    } else if (eval_cmd->parsed()) {
      run_eval(config, eval_strategy);
    } else if (report_cmd->parsed()) {
      run_report(config, report_render);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace usclip
