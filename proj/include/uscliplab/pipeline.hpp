#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uscliplab/config.hpp"
#include "uscliplab/evaluation.hpp"
#include "uscliplab/llm.hpp"
#include "uscliplab/report.hpp"
#include "uscliplab/training.hpp"

namespace usclip {

// Pipeline stages. Every stage reads its inputs from fixed relative names
// under paths.out_dir, writes its outputs there, and stamps
// provenance/<stage>.json with the config hash, seed and version. A missing
// prior-stage artifact raises a ConfigError naming the file.
//
//   corpus/manifest.json, corpus/images/      <- synth
//   corpus/registry.json, corpus/split.json,
//   corpus/norm_stats.json                    <- ingest
//   captions/captions.jsonl, captions/diversity.json
//     (and captions folded back into the registry)  <- caption
//   checkpoints/<tag>/{best,last,train_log.jsonl}   <- train
//   eval/report_<tag>.json                    <- eval
//   report/metrics.csv, plot_data.json        <- report

// Generates the synthetic corpus, writes one PNG per record next to the
// manifest and the manifest itself.
void run_synth(const RunConfig& config, int n, uint64_t seed);

// Manifest -> deduplicated, blank-filtered, split registry plus train-set
// normalization statistics.
void run_ingest(const RunConfig& config);

// Captions every registry record: expert captions pass through, everything
// else is rendered from the template grammar (optionally rewritten through an
// LLM endpoint). `client` overrides the HTTP client; tests inject stubs here.
void run_caption(const RunConfig& config, LlmClient* client = nullptr);

// Trains the dual encoder on the train split and returns the fit result
// after saving best/last checkpoints and the epoch log.
FitResult run_train(const RunConfig& config);

// Evaluates the best checkpoint on the test split: alignment, retrieval,
// zero-shot by organ, linear probe and few-shot curves. A non-empty
// `strategy_override` replaces the configured prompt strategy.
EvalReport run_eval(const RunConfig& config, const std::string& strategy_override = "");

// Collects every eval/report_*.json into the comparison tables.
ReportFiles run_report(const RunConfig& config, bool render_svg);

void write_provenance(const RunConfig& config, const std::string& stage);

// CLI front end: `uscliplab <subcommand> --config <path> [--override k=v ...]`.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.
int run_command(const std::vector<std::string>& args);

}  // namespace usclip
