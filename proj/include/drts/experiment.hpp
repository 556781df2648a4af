#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drts/data.hpp"
#include "drts/metrics.hpp"
#include "drts/model.hpp"

namespace drts {

/// 64-bit FNV-1a digest, hex encoded.
std::string digest(const std::string& bytes);
std::string file_digest(const std::string& path);
/// Digest over the serialized text, dependency and tree files of `docs`.
std::string corpus_digest(const std::vector<Document>& docs);

/// Parses every document and scores the output against its gold tree.
EvalReport evaluate_model(const Parser& model, const std::vector<Document>& docs,
                          const EvalOptions& options = {});

struct RunSummary {
  Mode mode = Mode::Baseline;
  int epochs = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
  std::vector<EpochLog> log;
  EvalReport eval;
};

/// Trains one model. When `out_dir` is non-empty it receives `model.ckpt`
/// (rewritten every epoch) and `manifest.jsonl` (config, seed, corpus
/// digests, one line per epoch, final scores). `eval_docs` defaults to the
/// training documents.
RunSummary train_run(const std::vector<Document>& train_docs, const ModelConfig& config,
                     const TrainSchedule& schedule, const std::string& out_dir,
                     const std::vector<Document>* eval_docs = nullptr,
                     const EvalOptions& eval_options = {});

/// Runs every mode with otherwise identical settings, each into
/// `out_dir/<mode>`.
std::vector<RunSummary> run_ablation(const std::vector<Document>& train_docs,
                                     const ModelConfig& config, const TrainSchedule& schedule,
                                     const std::string& out_dir,
                                     const std::vector<Document>* eval_docs = nullptr,
                                     const EvalOptions& eval_options = {});

/// One row per mode: epochs, losses, BLEU and the F1 scores.
std::string format_ablation(const std::vector<RunSummary>& runs);

inline constexpr Mode kAllModes[] = {Mode::Baseline, Mode::GatEncoder, Mode::GatDecoder,
                                     Mode::GatBoth};

}  // namespace drts
