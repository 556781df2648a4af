#include "drts/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace drts {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError(CorpusError::Code::Io, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return digest(buf.str());
}

std::string corpus_digest(const std::vector<Document>& docs) {
  std::string trees;
  for (const auto& d : docs)
    if (d.gold) trees += format_tree(*d.gold) + "\n";
  return digest(format_text(docs) + "\x1f" + format_conll(docs) + "\x1f" + trees);
}

EvalReport evaluate_model(const Parser& model, const std::vector<Document>& docs,
                          const EvalOptions& options) {
  std::vector<DrtsTree> pred, gold;
  for (const auto& d : docs) {
    if (!d.gold) throw CorpusError(CorpusError::Code::Alignment, d.id + " has no gold tree");
    pred.push_back(model.parse(d).tree);
    gold.push_back(*d.gold);
  }
  return evaluate(pred, gold, options);
}

namespace {

json match_json(const MatchResult& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

json epoch_json(const EpochLog& e) {
  json j = {{"type", "epoch"}, {"epoch", e.epoch}, {"loss", e.loss}};
  if (e.tuple_f1) j["tuple_f1"] = *e.tuple_f1;
  if (e.skeleton_f1) j["skeleton_f1"] = *e.skeleton_f1;
  return j;
}

}  // namespace

RunSummary train_run(const std::vector<Document>& train_docs, const ModelConfig& config,
                     const TrainSchedule& schedule, const std::string& out_dir,
                     const std::vector<Document>* eval_docs, const EvalOptions& eval_options) {
  std::ofstream manifest;
  TrainSchedule sched = schedule;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    manifest.open(fs::path(out_dir) / "manifest.jsonl");
    if (!manifest) throw CorpusError(CorpusError::Code::Io, "cannot write manifest in " + out_dir);
    json head = {{"type", "run"},
                 {"mode", mode_name(config.mode)},
                 {"seed", config.seed},
                 {"config", config.serialize()},
                 {"train_corpus", corpus_digest(train_docs)},
                 {"train_documents", train_docs.size()}};
    if (eval_docs) head["eval_corpus"] = corpus_digest(*eval_docs);
    manifest << head.dump() << "\n" << std::flush;
    sched.checkpoint_dir = out_dir;
    sched.on_epoch = [&](const EpochLog& e) {
      manifest << epoch_json(e).dump() << "\n" << std::flush;
      if (schedule.on_epoch) schedule.on_epoch(e);
    };
  }

  const auto start = std::chrono::steady_clock::now();
  auto result = train(train_docs, config, sched);
  RunSummary summary;
  summary.mode = config.mode;
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  summary.log = result.log;
  summary.epochs = static_cast<int>(result.log.size());
  summary.initial_loss = result.initial_loss;
  summary.final_loss = result.log.empty() ? result.initial_loss : result.log.back().loss;
  summary.eval = evaluate_model(*result.model, eval_docs ? *eval_docs : train_docs, eval_options);

  if (manifest.is_open()) {
    json tail = {{"type", "summary"},
                 {"epochs", summary.epochs},
                 {"initial_loss", summary.initial_loss},
                 {"final_loss", summary.final_loss},
                 {"seconds", summary.seconds},
                 {"bleu", summary.eval.bleu},
                 {"skeleton", match_json(summary.eval.skeleton.overall)},
                 {"tuple", match_json(summary.eval.tuple)},
                 {"clause", match_json(summary.eval.clause)}};
    manifest << tail.dump() << "\n";
  }
  return summary;
}

std::vector<RunSummary> run_ablation(const std::vector<Document>& train_docs,
                                     const ModelConfig& config, const TrainSchedule& schedule,
                                     const std::string& out_dir,
                                     const std::vector<Document>* eval_docs,
                                     const EvalOptions& eval_options) {
  std::vector<RunSummary> runs;
  for (Mode m : kAllModes) {
    ModelConfig c = config;
    c.mode = m;
    const std::string dir = out_dir.empty() ? "" : (fs::path(out_dir) / mode_name(m)).string();
    runs.push_back(train_run(train_docs, c, schedule, dir, eval_docs, eval_options));
  }
  return runs;
}

std::string format_ablation(const std::vector<RunSummary>& runs) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %6s %10s %10s %8s %8s %8s %8s %8s\n", "mode", "epochs",
                "loss0", "loss", "bleu", "skel_f1", "tuple_f1", "rel_f1", "clause_f1");
  out << line;
  for (const auto& r : runs) {
    std::snprintf(line, sizeof line, "%-12s %6d %10.6f %10.6f %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  mode_name(r.mode).c_str(), r.epochs, r.initial_loss, r.final_loss, r.eval.bleu,
                  r.eval.skeleton.overall.f1, r.eval.tuple.f1, r.eval.relations.relation_only.f1,
                  r.eval.clause.f1);
    out << line;
  }
  return out.str();
}

}  // namespace drts
