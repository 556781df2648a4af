// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "drts/experiment.hpp"
#include "oracles.hpp"

using namespace drts;
using nn::Index;
using nn::Matrix;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr int kRoundTripTrees = 1000;
constexpr int kRoundTripDepth = 6;
constexpr double kRoundTripSeconds = 10.0;

constexpr int kGatGraphs = 100;
constexpr double kGatTolerance = 1e-10;

constexpr double kGradEpsilon = 1e-5;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 300.0;

constexpr double kAttentionTolerance = 1e-6;

constexpr int kOverfitDocs = 32;
constexpr int kOverfitDepth = 4;
constexpr int kOverfitEpochs = 300;
constexpr double kOverfitF1 = 0.95;
constexpr double kOverfitSeconds = 1800.0;
constexpr std::size_t kOverfitVocab = 200;

constexpr int kMatchInstances = 200;
constexpr int kMatchMaxVariables = 6;
constexpr double kMatchAgreement = 0.95;
constexpr double kMatchSeconds = 60.0;

constexpr double kBleuTolerance = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

Matrix random_matrix(nn::Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

Graph random_graph(nn::Rng& rng, std::size_t n, double p) {
  Graph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) g.connect(i, j);
  return g;
}

nn::Expr weighted_sum(nn::Tape& tape, const nn::Expr& e) {
  nn::Rng rng(99);
  nn::Expr prod = nn::matmul(tape.constant(random_matrix(rng, 1, e.rows())), e);
  return nn::matmul(prod, tape.constant(Matrix::Ones(e.cols(), 1)));
}

ModelConfig small_model(Mode mode) {
  auto c = desk_config(mode);
  c.word_dim = 8;
  c.pretrained_dim = 4;
  c.lemma_dim = 4;
  c.mlp_dim = 8;
  c.encoder_hidden = 6;
  c.decoder_hidden = 12;
  c.encoder_gat_hidden = 8;
  c.decoder_gat_hidden = 12;
  c.gat_heads = 2;
  c.syntax_label_dim = 4;
  c.skeleton_label_dim = 4;
  c.symbol_dim = 6;
  c.attention_dim = 6;
  c.max_var_index = 16;
  return c;
}

// 1. Linearize and rebuild random trees.
Outcome round_trip() {
  SyntheticSpec spec;
  spec.max_depth = kRoundTripDepth;
  spec.max_tuples = 8;
  const auto t0 = std::chrono::steady_clock::now();
  int failures = 0;
  for (int i = 0; i < kRoundTripTrees; ++i) {
    auto tree = random_tree(static_cast<std::uint64_t>(i + 1), spec);
    if (tree_depth(tree) > kRoundTripDepth || !validate_tree(tree).ok()) ++failures;
    auto back = delinearize(linearize_skeleton(tree), linearize_drus(tree));
    if (!(back == tree) || format_tree(back) != format_tree(tree)) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < kRoundTripSeconds,
          std::to_string(kRoundTripTrees) + " trees, " + std::to_string(failures) + " failures, " +
              fmt(secs) + "s"};
}

// 2. Graph attention against the element-wise reference.
Outcome gat_oracle() {
  nn::Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < kGatGraphs; ++i) {
    const int heads = i % 2 ? 4 : 1;
    const int layers = 1 + (i / 2) % 2;
    const std::size_t n = 1 + rng.index(10);
    nn::ParameterStore store;
    nn::GatStack stack(store, "gat", 6, layers, heads, 2 * heads, rng);
    Graph g = random_graph(rng, n, 0.35);
    Matrix h = random_matrix(rng, 6, static_cast<Index>(n));
    nn::Tape tape;
    auto out = stack(tape, tape.constant(h), g);
    worst = std::max(worst, (out.value() - oracle::gat_stack(h, g, stack)).cwiseAbs().maxCoeff());
  }
  return {worst <= kGatTolerance, std::to_string(kGatGraphs) + " graphs, max abs diff " + fmt(worst)};
}

// 3. Finite differences for every component and the full model.
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  nn::Rng rng(3);
  nn::Rng data(4);
  std::vector<std::pair<std::string, double>> errors;
  auto check = [&](const std::string& name, nn::ParameterStore& store,
                   const std::function<nn::Expr(nn::Tape&)>& f, std::size_t coords = 0) {
    errors.push_back({name, nn::grad_check(store, f, kGradEpsilon, coords, 1).max_relative_error});
  };
  {
    nn::ParameterStore store;
    nn::Mlp mlp(store, "mlp", 5, 7, rng);
    Matrix x = random_matrix(data, 5, 3);
    check("mlp", store, [&](nn::Tape& t) { return weighted_sum(t, mlp(t, t.constant(x))); });
  }
  {
    nn::ParameterStore store;
    nn::BiLstm bi(store, "bilstm", 4, 3, 2, rng);
    std::vector<Matrix> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(random_matrix(data, 4, 1));
    check("bilstm", store, [&](nn::Tape& t) {
      std::vector<nn::Expr> in;
      for (auto& x : xs) in.push_back(t.constant(x));
      return weighted_sum(t, nn::concat_cols(bi(t, in)));
    });
  }
  {
    nn::ParameterStore store;
    nn::LstmCell cell(store, "decoder", 4, 5, rng);
    std::vector<Matrix> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(random_matrix(data, 4, 1));
    check("decoder lstm", store, [&](nn::Tape& t) {
      auto s = cell.zero_state(t);
      std::vector<nn::Expr> hs;
      for (auto& x : xs) {
        s = cell.step(t, s, t.constant(x));
        hs.push_back(s.h);
      }
      return weighted_sum(t, nn::concat_cols(hs));
    });
  }
  {
    nn::ParameterStore store;
    nn::AdditiveAttention attn(store, "attention", 4, 5, 6, rng);
    Matrix keys = random_matrix(data, 5, 7), q = random_matrix(data, 4, 1);
    check("attention", store, [&](nn::Tape& t) {
      return weighted_sum(t, attn.attend(t, attn.prepare(t, t.constant(keys)), t.constant(q)).context);
    });
  }
  {
    nn::ParameterStore store;
    nn::GatStack stack(store, "gat", 5, 2, 4, 8, rng);
    Graph g = random_graph(data, 7, 0.4);
    Matrix h = random_matrix(data, 5, 7);
    check("gat", store, [&](nn::Tape& t) { return weighted_sum(t, stack(t, t.constant(h), g)); });
  }
  {
    SyntheticSpec spec;
    spec.documents = 1;
    spec.max_depth = 3;
    spec.max_tuples = 2;
    auto docs = gen_synthetic(5, spec);
    auto config = small_model(Mode::GatBoth);
    Parser model(config, Vocabularies::build(docs, config));
    check("full model", model.parameters(), [&](nn::Tape& t) { return model.loss(t, docs[0]); }, 3000);
  }
  const double secs = seconds_since(t0);
  bool ok = secs < kGradSeconds;
  std::string detail;
  for (const auto& [name, err] : errors) {
    ok = ok && err <= kGradTolerance;
    detail += name + " " + fmt(err) + ", ";
  }
  return {ok, detail + fmt(secs) + "s"};
}

// 4. Every attention distribution in a forward pass is normalized.
Outcome attention_normalized() {
  SyntheticSpec spec;
  spec.documents = 4;
  spec.max_depth = 4;
  auto docs = gen_synthetic(8, spec);
  auto config = small_model(Mode::GatBoth);
  Parser model(config, Vocabularies::build(docs, config));
  double worst = 0.0;
  std::size_t distributions = 0;
  auto inspect = [&](const ForwardTrace& trace) {
    for (const auto& a : trace.decoder_attention) {
      worst = std::max(worst, std::abs(a.sum() - 1.0));
      ++distributions;
    }
    for (const auto* gat : {&trace.encoder_gat, &trace.skeleton_gat})
      for (const auto& alpha : gat->alphas)
        for (Index i = 0; i < alpha.rows(); ++i) {
          worst = std::max(worst, std::abs(alpha.row(i).sum() - 1.0));
          ++distributions;
        }
  };
  for (const auto& d : docs) {
    ForwardTrace parsed, forced;
    model.parse(d, &parsed);
    nn::Tape tape;
    model.loss(tape, d, &forced);
    inspect(parsed);
    inspect(forced);
  }
  return {distributions > 0 && worst <= kAttentionTolerance,
          std::to_string(distributions) + " distributions, max |sum - 1| " + fmt(worst)};
}

// 5. Both the baseline and the full model memorize a small corpus.
Outcome overfit() {
  SyntheticSpec spec;
  spec.documents = kOverfitDocs;
  spec.max_depth = kOverfitDepth;
  auto docs = gen_synthetic(7, spec);
  std::set<std::string> words;
  for (const auto& d : docs)
    for (const auto& s : d.sentences) words.insert(s.begin(), s.end());

  const auto t0 = std::chrono::steady_clock::now();
  bool ok = words.size() <= kOverfitVocab;
  std::string detail = std::to_string(words.size()) + " word types; ";
  for (Mode mode : {Mode::Baseline, Mode::GatBoth}) {
    auto config = desk_config(mode);
    TrainSchedule schedule;
    schedule.epochs = kOverfitEpochs;
    schedule.eval_every = 1;
    schedule.stop_at_f1 = kOverfitF1;
    auto result = train(docs, config, schedule);
    const auto& last = result.log.back();
    const double tuple = last.tuple_f1.value_or(0.0), skel = last.skeleton_f1.value_or(0.0);
    ok = ok && tuple >= kOverfitF1 && skel >= kOverfitF1;
    detail += mode_name(mode) + " epoch " + std::to_string(last.epoch) + " tuple " + fmt(tuple) +
              " skeleton " + fmt(skel) + "; ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < kOverfitSeconds, detail + fmt(secs) + "s"};
}

// Random clause sets over a handful of referents and boxes.
ClauseSet random_clauses(nn::Rng& rng, int variables) {
  static const char* kLabels[] = {"man", "dog", "see", "Agent", "Theme", "NOT", "IMP1", "Time"};
  std::vector<std::string> boxes, refs;
  const int nb = 1 + static_cast<int>(rng.index(2));
  for (int i = 0; i < nb; ++i) boxes.push_back("b" + std::to_string(i));
  for (int i = 0; i < variables - nb; ++i)
    refs.push_back(std::string(1, "xe"[rng.index(2)]) + std::to_string(i + 1));
  ClauseSet s;
  const int n = 2 + static_cast<int>(rng.index(7));
  for (int i = 0; i < n; ++i) {
    std::string label = kLabels[rng.index(std::size(kLabels))];
    Clause c{{boxes[rng.index(boxes.size())], label}};
    if (label == "NOT" || label == "IMP1") {
      c.fields.push_back(boxes[rng.index(boxes.size())]);
    } else if (!refs.empty()) {
      c.fields.push_back(refs[rng.index(refs.size())]);
      if (std::isupper(static_cast<unsigned char>(label[0])))
        c.fields.push_back(refs[rng.index(refs.size())]);
    }
    s.clauses.push_back(std::move(c));
  }
  s.normalize();
  return s;
}

// A prediction derived from the gold set: renamed variables, some clauses
// dropped or relabelled, occasionally an unrelated extra clause.
ClauseSet perturb(nn::Rng& rng, const ClauseSet& gold) {
  std::map<std::string, std::string> rename;
  std::vector<std::string> vars;
  for (const auto& c : gold.clauses)
    for (std::size_t f = 0; f < c.fields.size(); ++f)
      if (f != 1 && !rename.count(c.fields[f])) {
        rename[c.fields[f]] = "";
        vars.push_back(c.fields[f]);
      }
  // Permute names within each sort.
  std::map<char, std::vector<std::string>> by_sort;
  for (const auto& v : vars) by_sort[v[0]].push_back(v);
  for (auto& [sort, names] : by_sort) {
    auto targets = names;
    for (std::size_t i = targets.size(); i > 1; --i) std::swap(targets[i - 1], targets[rng.index(i)]);
    for (std::size_t i = 0; i < names.size(); ++i) rename[names[i]] = targets[i];
  }
  ClauseSet pred;
  for (auto c : gold.clauses) {
    if (rng.uniform() < 0.15) continue;
    for (std::size_t f = 0; f < c.fields.size(); ++f)
      if (f != 1) c.fields[f] = rename[c.fields[f]];
    if (rng.uniform() < 0.1) c.fields[1] = "cat";
    pred.clauses.push_back(std::move(c));
  }
  pred.normalize();
  return pred;
}

std::size_t variable_count(const ClauseSet& s) {
  std::set<std::string> vars;
  for (const auto& c : s.clauses)
    for (std::size_t f = 0; f < c.fields.size(); ++f)
      if (f != 1) vars.insert(c.fields[f]);
  return vars.size();
}

// 6. Hill climbing reaches the exhaustive optimum on small instances.
Outcome clause_matcher() {
  nn::Rng rng(66);
  const auto t0 = std::chrono::steady_clock::now();
  int equal = 0, exceeded = 0;
  for (int i = 0; i < kMatchInstances; ++i) {
    auto gold = random_clauses(rng, 2 + static_cast<int>(rng.index(kMatchMaxVariables - 1)));
    auto pred = i % 4 == 3 ? random_clauses(rng, 2 + static_cast<int>(rng.index(kMatchMaxVariables - 1)))
                           : perturb(rng, gold);
    if (variable_count(gold) > static_cast<std::size_t>(kMatchMaxVariables) ||
        variable_count(pred) > static_cast<std::size_t>(kMatchMaxVariables))
      return {false, "instance generator exceeded the variable bound"};
    const auto hill = clause_match_f1(pred, gold).matched;
    const auto best = clause_match_bruteforce(pred, gold).matched;
    equal += hill == best;
    exceeded += hill > best;
  }
  const double secs = seconds_since(t0);
  const double rate = static_cast<double>(equal) / kMatchInstances;
  return {rate >= kMatchAgreement && exceeded == 0 && secs < kMatchSeconds,
          std::to_string(equal) + "/" + std::to_string(kMatchInstances) + " optimal, " +
              std::to_string(exceeded) + " above optimum, " + fmt(secs) + "s"};
}

// 7. Identical inputs score 1 everywhere; BLEU matches a hand computation.
Outcome metric_sanity() {
  SyntheticSpec spec;
  spec.max_depth = 5;
  std::vector<DrtsTree> trees;
  for (std::uint64_t s = 1; s <= 20; ++s) trees.push_back(random_tree(s, spec));
  auto report = evaluate(trees, trees);
  bool ok = report.bleu == 1.0 && report.skeleton.overall.f1 == 1.0 && report.tuple.f1 == 1.0 &&
            report.clause.f1 == 1.0;
  const std::vector<std::string> cand = {"a", "b", "c", "d", "e"};
  const std::vector<std::string> ref = {"a", "b", "c", "d", "f"};
  const double want = std::pow(4.0 / 5 * 3.0 / 4 * 2.0 / 3 * 1.0 / 2, 0.25);
  const double diff = std::abs(bleu({cand}, {ref}) - want);
  ok = ok && diff <= kBleuTolerance;
  return {ok, "bleu " + fmt(report.bleu) + " skeleton " + fmt(report.skeleton.overall.f1) + " tuple " +
                  fmt(report.tuple.f1) + " clause " + fmt(report.clause.f1) + ", hand case diff " +
                  fmt(diff)};
}

// 8. Two runs with the same seed produce the same loss trajectory.
Outcome determinism() {
  SyntheticSpec spec;
  spec.documents = 8;
  spec.max_depth = 3;
  auto docs = gen_synthetic(12, spec);
  auto config = small_model(Mode::GatBoth);
  TrainSchedule schedule;
  schedule.epochs = 5;
  auto a = train(docs, config, schedule);
  auto b = train(docs, config, schedule);
  bool same = a.log.size() == b.log.size() && a.initial_loss == b.initial_loss;
  for (std::size_t i = 0; same && i < a.log.size(); ++i) same = a.log[i].loss == b.log[i].loss;
  for (const auto& p : a.model->parameters().all())
    same = same && p->value == b.model->parameters().find(p->name())->value;
  return {same, std::to_string(a.log.size()) + " epochs, final loss " + fmt(a.log.back().loss)};
}

// 9. All four model variants train and report.
Outcome ablation() {
  SyntheticSpec spec;
  spec.documents = 6;
  spec.max_depth = 3;
  auto docs = gen_synthetic(13, spec);
  TrainSchedule schedule;
  schedule.epochs = 3;
  auto dir = fs::temp_directory_path() / "drts_acceptance_ablation";
  fs::remove_all(dir);
  auto runs = run_ablation(docs, small_model(Mode::GatBoth), schedule, dir.string());
  auto table = format_ablation(runs);
  bool ok = runs.size() == std::size(kAllModes);
  for (Mode m : kAllModes) {
    ok = ok && table.find(mode_name(m)) != std::string::npos &&
         fs::exists(dir / mode_name(m) / "manifest.jsonl");
  }
  for (const auto& r : runs) ok = ok && r.eval.documents == docs.size() && std::isfinite(r.final_loss);
  fs::remove_all(dir);
  return {ok, std::to_string(runs.size()) + " modes reported"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"tree round trip", round_trip},
      {"graph attention oracle", gat_oracle},
      {"gradient checks", gradients},
      {"attention normalization", attention_normalized},
      {"overfit small corpus", overfit},
      {"clause matcher vs exhaustive", clause_matcher},
      {"metric sanity", metric_sanity},
      {"determinism", determinism},
      {"ablation report", ablation},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL")
              << " (" << o.detail << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
