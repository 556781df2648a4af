// Command-line front end: corpus generation, training, parsing, scoring and
// gradient checks.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "drts/experiment.hpp"

namespace fs = std::filesystem;
using namespace drts;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int env_threads() {
  const char* s = std::getenv("DRTS_THREADS");
  if (!s || !*s) return 1;
  try {
    return std::max(1, std::stoi(s));
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("DRTS_THREADS is not a number: ") + s);
  }
}

ModelConfig load_config(const std::string& path) {
  ModelConfig c = path.empty() ? ModelConfig{} : ModelConfig::load(path);
  c.apply_environment();
  c.check();
  return c;
}

// Clause files hold one clause set per document, separated by blank lines.
std::vector<ClauseSet> parse_clause_file(const std::string& text) {
  std::vector<ClauseSet> out;
  std::istringstream in(text);
  std::string line, block;
  auto flush = [&] {
    auto set = parse_clauses(block);
    if (!set.clauses.empty()) out.push_back(std::move(set));
    block.clear();
  };
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    block += line + "\n";
  }
  flush();
  return out;
}

bool looks_like_trees(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    return line.compare(b, 4, "SDRS") == 0 || line.compare(b, 3, "DRS") == 0;
  }
  return true;
}

int cmd_gen(std::uint64_t seed, const SyntheticSpec& spec, const std::string& out) {
  auto docs = gen_synthetic(seed, spec);
  save_corpus(out, docs);
  auto stats = corpus_stats(docs);
  std::cerr << "wrote " << stats.documents << " documents (" << stats.sentences
            << " sentences) to " << out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, corpus, dev, mode = "gat-enc-dec", out;
  int epochs = -1, eval_every = 0;
  double stop_at = -1.0;
};

int cmd_train(const TrainArgs& a) {
  ModelConfig config = load_config(a.config);
  auto train_docs = load_corpus(a.corpus).documents;
  std::vector<Document> dev;
  if (!a.dev.empty()) dev = load_corpus(a.dev).documents;
  const auto* eval_docs = a.dev.empty() ? nullptr : &dev;

  TrainSchedule schedule;
  schedule.epochs = a.epochs > 0 ? a.epochs : config.epochs;
  schedule.eval_every = a.eval_every;
  if (a.stop_at > 0.0) schedule.stop_at_f1 = a.stop_at;
  schedule.on_epoch = [](const EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " loss " << e.loss;
    if (e.tuple_f1) std::cerr << " tuple_f1 " << *e.tuple_f1 << " skeleton_f1 " << *e.skeleton_f1;
    std::cerr << "\n";
  };
  EvalOptions eval;
  eval.threads = env_threads();

  std::vector<RunSummary> runs;
  if (a.mode == "all") {
    runs = run_ablation(train_docs, config, schedule, a.out, eval_docs, eval);
  } else {
    config.mode = mode_from_name(a.mode);
    runs.push_back(train_run(train_docs, config, schedule, a.out, eval_docs, eval));
  }
  const std::string report = format_ablation(runs);
  write_output((fs::path(a.out) / "report.txt").string(), report);
  std::cout << report;
  return 0;
}

int cmd_parse(const std::string& model_path, const std::string& input, const std::string& deps,
              const std::string& out) {
  auto model = Parser::load(model_path);
  auto docs = parse_documents(read_file(input), deps.empty() ? std::string() : read_file(deps),
                              input, deps);
  std::ostringstream trees;
  std::size_t flagged = 0;
  for (const auto& d : docs) {
    auto result = model->parse(d);
    flagged += result.hit_length_limit;
    trees << format_tree(result.tree) << "\n";
  }
  write_output(out, trees.str());
  if (flagged) std::cerr << flagged << " document(s) hit the decode length limit\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gold_path, const std::string& metrics,
             const std::string& report_path, bool per_document, const std::string& format) {
  EvalOptions options;
  options.bleu = options.skeleton = options.tuple = options.clause = false;
  options.per_document = per_document;
  options.threads = env_threads();
  std::istringstream list(metrics);
  for (std::string m; std::getline(list, m, ',');) {
    if (m == "bleu") options.bleu = true;
    else if (m == "skeleton") options.skeleton = true;
    else if (m == "tuple") options.tuple = true;
    else if (m == "clause") options.clause = true;
    else throw std::runtime_error("unknown metric: " + m);
  }
  const std::string pred = read_file(pred_path);
  const std::string gold = read_file(gold_path);
  const bool trees = format == "tree" || (format == "auto" && looks_like_trees(gold));
  EvalReport report;
  if (trees) {
    report = evaluate(parse_trees(pred, pred_path), parse_trees(gold, gold_path), options);
  } else {
    if (options.bleu || options.skeleton || options.tuple)
      throw std::runtime_error("clause files support only the clause metric");
    report = evaluate_clauses(parse_clause_file(pred), parse_clause_file(gold), options);
  }
  write_output(report_path, format_report(report));
  return 0;
}

int cmd_grad_check(const std::string& config_path, std::size_t max_coords, double tolerance) {
  ModelConfig config = load_config(config_path);
  SyntheticSpec spec;
  spec.documents = 1;
  spec.max_depth = 3;
  spec.max_tuples = 2;
  auto docs = gen_synthetic(config.seed, spec);
  Parser model(config, Vocabularies::build(docs, config));
  auto result = nn::grad_check(
      model.parameters(), [&](nn::Tape& tape) { return model.loss(tape, docs[0]); }, 1e-5,
      max_coords, config.seed);
  std::cout << "coordinates " << result.coordinates << "\n";
  std::cout << "max_relative_error " << result.max_relative_error << "\n";
  std::cout << "worst " << result.worst << "\n";
  const bool ok = result.max_relative_error <= tolerance;
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discourse tree parser: data, training, parsing and evaluation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-synthetic", "Write a seeded synthetic corpus");
  std::uint64_t gen_seed = 1;
  SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--docs", spec.documents, "Number of documents")->check(CLI::PositiveNumber);
  gen->add_option("--max-depth", spec.max_depth, "Maximum skeleton depth")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output corpus directory")->required();

  auto* tr = app.add_subcommand("train", "Train a parser");
  TrainArgs targs;
  tr->add_option("--config", targs.config, "Configuration file (key = value)");
  tr->add_option("--corpus", targs.corpus, "Training corpus directory")->required();
  tr->add_option("--dev", targs.dev, "Corpus scored after training (default: the training corpus)");
  tr->add_option("--mode", targs.mode, "Model variant")
      ->check(CLI::IsMember({"baseline", "gat-enc", "gat-dec", "gat-enc-dec", "all"}));
  tr->add_option("--out", targs.out, "Output directory")->required();
  tr->add_option("--epochs", targs.epochs, "Override the configured epoch count");
  tr->add_option("--eval-every", targs.eval_every, "Score the training set every N epochs");
  tr->add_option("--stop-at-f1", targs.stop_at, "Stop once tuple and skeleton F1 reach this");

  auto* ps = app.add_subcommand("parse", "Parse documents with a trained model");
  std::string model_path, input, deps, parse_out;
  ps->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  ps->add_option("--input", input, "Text file")->required()->check(CLI::ExistingFile);
  ps->add_option("--deps", deps, "CoNLL dependency file")->check(CLI::ExistingFile);
  ps->add_option("--out", parse_out, "Output tree file (default: stdout)");

  auto* ev = app.add_subcommand("eval", "Score predicted trees or clause sets against gold");
  std::string pred, gold, metrics = "bleu,skeleton,tuple,clause", report, format = "auto";
  bool per_document = false;
  ev->add_option("--pred", pred, "Predicted trees or clauses")->required()->check(CLI::ExistingFile);
  ev->add_option("--gold", gold, "Gold trees or clauses")->required()->check(CLI::ExistingFile);
  ev->add_option("--metrics", metrics, "Comma-separated subset of bleu,skeleton,tuple,clause");
  ev->add_option("--report", report, "Report file (default: stdout)");
  ev->add_option("--format", format, "Input format")->check(CLI::IsMember({"auto", "tree", "clause"}));
  ev->add_flag("--per-document", per_document, "Add one line per document");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full loss");
  std::string gc_config;
  std::size_t max_coords = 2000;
  double tolerance = 1e-4;
  gc->add_option("--config", gc_config, "Configuration file")->check(CLI::ExistingFile);
  gc->add_option("--max-coords", max_coords, "Coordinates sampled");
  gc->add_option("--tolerance", tolerance, "Largest accepted relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(gen_seed, spec, gen_out);
    if (*tr) return cmd_train(targs);
    if (*ps) return cmd_parse(model_path, input, deps, parse_out);
    if (*ev) return cmd_eval(pred, gold, metrics, report, per_document, format);
    if (*gc) return cmd_grad_check(gc_config, max_coords, tolerance);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
