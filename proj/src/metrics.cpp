#include "drts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <array>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace drts {

MatchResult MatchResult::from_counts(std::size_t matched, std::size_t predicted, std::size_t gold) {
  MatchResult r;
  r.matched = matched;
  r.predicted = predicted;
  r.gold = gold;
  if (predicted == 0 && gold == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  r.precision = predicted ? static_cast<double>(matched) / static_cast<double>(predicted) : 0.0;
  r.recall = gold ? static_cast<double>(matched) / static_cast<double>(gold) : 0.0;
  const double sum = r.precision + r.recall;
  r.f1 = sum > 0.0 ? 2.0 * r.precision * r.recall / sum : 0.0;
  return r;
}

MatchResult& MatchResult::operator+=(const MatchResult& other) {
  auto mapping = std::move(this->mapping);
  *this = from_counts(matched + other.matched, predicted + other.predicted, gold + other.gold);
  this->mapping = std::move(mapping);
  return *this;
}

namespace {

template <typename T>
std::size_t multiset_overlap(std::vector<T> a, std::vector<T> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n, ++i, ++j;
    }
  }
  return n;
}

template <typename T>
MatchResult multiset_f1(const std::vector<T>& pred, const std::vector<T>& gold) {
  return MatchResult::from_counts(multiset_overlap(pred, gold), pred.size(), gold.size());
}

void require_valid(const DrtsTree& tree, const char* which) {
  auto report = validate_tree(tree);
  if (!report.ok())
    throw TreeError(TreeError::Code::InvalidTree,
                    std::string(which) + " tree is invalid: " + report.violations.front().str());
}

}  // namespace

// ---------------------------------------------------------------------------
// BLEU

std::vector<std::string> output_tokens(const DrtsTree& tree) {
  auto tokens = to_keys(linearize_skeleton(tree));
  auto drus = to_keys(linearize_drus(tree));
  tokens.insert(tokens.end(), drus.begin(), drus.end());
  return tokens;
}

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references) {
  if (candidates.empty()) throw MetricError("BLEU over an empty corpus");
  if (candidates.size() != references.size())
    throw MetricError("BLEU corpus sizes differ");

  std::size_t cand_len = 0, ref_len = 0;
  std::array<std::size_t, kBleuOrder> clipped{}, total{};
  for (std::size_t d = 0; d < candidates.size(); ++d) {
    const auto& c = candidates[d];
    const auto& r = references[d];
    cand_len += c.size();
    ref_len += r.size();
    for (int n = 1; n <= kBleuOrder; ++n) {
      std::map<std::vector<std::string>, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i)
        ++ref_counts[std::vector<std::string>(r.begin() + i, r.begin() + i + n)];
      std::map<std::vector<std::string>, std::size_t> cand_counts;
      for (std::size_t i = 0; i + n <= c.size(); ++i)
        ++cand_counts[std::vector<std::string>(c.begin() + i, c.begin() + i + n)];
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        clipped[n - 1] += std::min(count, it == ref_counts.end() ? 0 : it->second);
        total[n - 1] += count;
      }
    }
  }
  if (cand_len == 0) return ref_len == 0 ? 1.0 : 0.0;
  if (clipped[0] == 0) return 0.0;

  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < kBleuOrder; ++n) {
    if (total[n] == 0) continue;
    const double num = clipped[n] ? static_cast<double>(clipped[n]) : kBleuEpsilon;
    log_sum += std::log(num / static_cast<double>(total[n]));
    ++orders;
  }
  const double precision = std::exp(log_sum / orders);
  const double bp =
      cand_len >= ref_len ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * precision;
}

// ---------------------------------------------------------------------------
// Skeleton spans

SkeletonScore& SkeletonScore::operator+=(const SkeletonScore& other) {
  overall += other.overall;
  box += other.box;
  relation += other.relation;
  variable += other.variable;
  return *this;
}

namespace {

void collect_spans(const SkeletonNode& node, int& next_leaf, std::vector<LabeledSpan>& out) {
  const int begin = next_leaf;
  if (node.is_box()) ++next_leaf;
  const std::size_t slot = out.size();
  out.push_back({node.label(), node.kind, begin, begin});
  for (const auto& child : node.children) collect_spans(child, next_leaf, out);
  out[slot].end = next_leaf;
}

}  // namespace

std::vector<LabeledSpan> skeleton_spans(const DrtsTree& tree) {
  std::vector<LabeledSpan> out;
  int leaf = 0;
  collect_spans(tree.root, leaf, out);
  return out;
}

SkeletonScore skeleton_f1(const DrtsTree& pred, const DrtsTree& gold) {
  require_valid(pred, "predicted");
  require_valid(gold, "gold");
  const auto p = skeleton_spans(pred);
  const auto g = skeleton_spans(gold);
  auto bucket = [](const std::vector<LabeledSpan>& spans, auto keep) {
    std::vector<LabeledSpan> out;
    std::copy_if(spans.begin(), spans.end(), std::back_inserter(out), keep);
    return out;
  };
  auto of_kind = [&](std::initializer_list<NodeKind> kinds) {
    auto keep = [kinds](const LabeledSpan& s) {
      return std::find(kinds.begin(), kinds.end(), s.kind) != kinds.end();
    };
    return multiset_f1(bucket(p, keep), bucket(g, keep));
  };
  SkeletonScore score;
  score.box = of_kind({NodeKind::Sdrs, NodeKind::Drs});
  score.relation = of_kind({NodeKind::Relation});
  score.variable = of_kind({NodeKind::Variable});
  score.overall = score.box;
  score.overall += score.relation;
  score.overall += score.variable;
  return score;
}

// ---------------------------------------------------------------------------
// Tuples

namespace {

void collect_tuples(const SkeletonNode& node, std::vector<RelationTuple>& out) {
  if (node.dru)
    for (const auto& t : node.dru->tuples()) out.push_back(t);
  for (const auto& child : node.children) collect_tuples(child, out);
}

std::vector<std::string> tuple_keys(const DrtsTree& tree, int arity = -1) {
  std::vector<RelationTuple> tuples;
  collect_tuples(tree.root, tuples);
  std::vector<std::string> keys;
  for (const auto& t : tuples)
    if (arity < 0 || static_cast<int>(t.args.size()) == arity) keys.push_back(t.str());
  return keys;
}

std::vector<std::string> relation_labels(const DrtsTree& tree) {
  std::vector<RelationTuple> tuples;
  collect_tuples(tree.root, tuples);
  std::vector<std::string> labels;
  for (const auto& t : tuples) labels.push_back(t.relation);
  return labels;
}

}  // namespace

MatchResult tuple_f1(const DrtsTree& pred, const DrtsTree& gold) {
  return multiset_f1(tuple_keys(pred), tuple_keys(gold));
}

RelationBreakdown& RelationBreakdown::operator+=(const RelationBreakdown& other) {
  relation_only += other.relation_only;
  exact += other.exact;
  unary += other.unary;
  binary += other.binary;
  return *this;
}

RelationBreakdown relation_breakdown(const DrtsTree& pred, const DrtsTree& gold) {
  RelationBreakdown r;
  r.relation_only = multiset_f1(relation_labels(pred), relation_labels(gold));
  r.exact = tuple_f1(pred, gold);
  r.unary = multiset_f1(tuple_keys(pred, 1), tuple_keys(gold, 1));
  r.binary = multiset_f1(tuple_keys(pred, 2), tuple_keys(gold, 2));
  return r;
}

// ---------------------------------------------------------------------------
// Clause matching

namespace {

/// Sort key of a variable field: 'b' for box ids, the referent sort letter
/// otherwise; 0 for literals.
char variable_sort(const std::string& field) {
  if (field.size() >= 2 && field[0] == 'b' &&
      std::all_of(field.begin() + 1, field.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
      (field.size() == 2 || field[1] != '0'))
    return 'b';
  auto v = VariableId::parse(field);
  if (v && v->sort != Sort::Constant) return static_cast<char>(v->sort);
  return 0;
}

struct Side {
  std::vector<std::string> names;
  std::vector<char> sorts;
  std::vector<std::size_t> degree;
  std::map<std::string, int> index;

  int intern(const std::string& name, char sort) {
    auto [it, fresh] = index.emplace(name, static_cast<int>(names.size()));
    if (fresh) {
      names.push_back(name);
      sorts.push_back(sort);
      degree.push_back(0);
    }
    return it->second;
  }
};

/// A (pred clause, gold clause) pair that matches exactly when every listed
/// pred variable is mapped to the listed gold variable.
struct Candidate {
  std::vector<std::pair<int, int>> needs;
};

class MatchProblem {
 public:
  MatchProblem(const ClauseSet& pred, const ClauseSet& gold) {
    auto encode = [](const Clause& c, Side& side) {
      std::vector<int> vars(c.fields.size(), -1);
      for (std::size_t i = 0; i < c.fields.size(); ++i)
        if (char s = variable_sort(c.fields[i])) vars[i] = side.intern(c.fields[i], s);
      return vars;
    };
    std::vector<std::vector<int>> pv, gv;
    for (const auto& c : pred.clauses) {
      pv.push_back(encode(c, pred_));
      std::set<int> seen(pv.back().begin(), pv.back().end());
      for (int v : seen)
        if (v >= 0) ++pred_.degree[static_cast<std::size_t>(v)];
    }
    for (const auto& c : gold.clauses) {
      gv.push_back(encode(c, gold_));
      std::set<int> seen(gv.back().begin(), gv.back().end());
      for (int v : seen)
        if (v >= 0) ++gold_.degree[static_cast<std::size_t>(v)];
    }
    by_var_.resize(pred_.names.size());
    for (std::size_t i = 0; i < pred.clauses.size(); ++i) {
      for (std::size_t j = 0; j < gold.clauses.size(); ++j) {
        auto cand = compatible(pred.clauses[i], pv[i], gold.clauses[j], gv[j]);
        if (!cand) continue;
        if (cand->needs.empty()) {
          ++always_;
          continue;
        }
        const int id = static_cast<int>(candidates_.size());
        std::set<int> vars;
        for (auto [p, g] : cand->needs) vars.insert(p);
        for (int v : vars) by_var_[static_cast<std::size_t>(v)].push_back(id);
        candidates_.push_back(std::move(*cand));
      }
    }
  }

  std::size_t pred_vars() const { return pred_.names.size(); }
  std::size_t gold_vars() const { return gold_.names.size(); }
  const Side& pred_side() const { return pred_; }
  const Side& gold_side() const { return gold_; }

  bool satisfied(const Candidate& c, const std::vector<int>& map) const {
    for (auto [p, g] : c.needs)
      if (map[static_cast<std::size_t>(p)] != g) return false;
    return true;
  }

  std::size_t score(const std::vector<int>& map) const {
    std::size_t n = always_;
    for (const auto& c : candidates_) n += satisfied(c, map);
    return n;
  }

  /// Satisfied candidates touching any of `vars`.
  std::size_t local_score(const std::vector<int>& map, std::initializer_list<int> vars) const {
    std::set<int> ids;
    for (int v : vars)
      if (v >= 0)
        for (int id : by_var_[static_cast<std::size_t>(v)]) ids.insert(id);
    std::size_t n = 0;
    for (int id : ids) n += satisfied(candidates_[static_cast<std::size_t>(id)], map);
    return n;
  }

 private:
  static std::optional<Candidate> compatible(const Clause& a, const std::vector<int>& av,
                                             const Clause& b, const std::vector<int>& bv) {
    if (a.fields.size() != b.fields.size()) return std::nullopt;
    Candidate c;
    std::map<int, int> forward, backward;
    for (std::size_t i = 0; i < a.fields.size(); ++i) {
      const bool va = av[i] >= 0, vb = bv[i] >= 0;
      if (va != vb) return std::nullopt;
      if (!va) {
        if (a.fields[i] != b.fields[i]) return std::nullopt;
        continue;
      }
      if (variable_sort(a.fields[i]) != variable_sort(b.fields[i])) return std::nullopt;
      auto [f, ff] = forward.emplace(av[i], bv[i]);
      auto [g, gf] = backward.emplace(bv[i], av[i]);
      if (f->second != bv[i] || g->second != av[i]) return std::nullopt;
      if (ff) c.needs.emplace_back(av[i], bv[i]);
    }
    return c;
  }

  Side pred_, gold_;
  std::vector<Candidate> candidates_;
  std::vector<std::vector<int>> by_var_;
  std::size_t always_ = 0;
};

MatchResult finish(const MatchProblem& problem, const std::vector<int>& map, std::size_t matched,
                   std::size_t predicted, std::size_t gold) {
  auto r = MatchResult::from_counts(matched, predicted, gold);
  for (std::size_t v = 0; v < map.size(); ++v)
    if (map[v] >= 0)
      r.mapping[problem.pred_side().names[v]] =
          problem.gold_side().names[static_cast<std::size_t>(map[v])];
  return r;
}

std::optional<MatchResult> degenerate(const ClauseSet& pred, const ClauseSet& gold) {
  if (pred.clauses.empty() || gold.clauses.empty())
    return MatchResult::from_counts(0, pred.clauses.size(), gold.clauses.size());
  return std::nullopt;
}

ClauseSet normalized(ClauseSet s) {
  s.normalize();
  return s;
}

/// Steepest-ascent hill climbing from `map`; moves reassign one pred variable
/// to a free gold variable of its sort, swap targets with another pred
/// variable, or unassign it.
std::size_t climb(const MatchProblem& problem, std::vector<int>& map, int max_iterations) {
  const auto& ps = problem.pred_side();
  const auto& gs = problem.gold_side();
  std::vector<int> owner(gs.names.size(), -1);
  for (std::size_t v = 0; v < map.size(); ++v)
    if (map[v] >= 0) owner[static_cast<std::size_t>(map[v])] = static_cast<int>(v);
  std::size_t current = problem.score(map);

  for (int it = 0; it < max_iterations; ++it) {
    long best_delta = 0;
    int best_v = -1, best_g = -2;
    for (std::size_t v = 0; v < map.size(); ++v) {
      const int old_g = map[v];
      for (int g = -1; g < static_cast<int>(gs.names.size()); ++g) {
        if (g == old_g) continue;
        if (g >= 0 && gs.sorts[static_cast<std::size_t>(g)] != ps.sorts[v]) continue;
        const int other = g >= 0 ? owner[static_cast<std::size_t>(g)] : -1;
        const auto vi = static_cast<int>(v);
        const long before = static_cast<long>(problem.local_score(map, {vi, other}));
        map[v] = g;
        if (other >= 0) map[static_cast<std::size_t>(other)] = old_g;
        const long after = static_cast<long>(problem.local_score(map, {vi, other}));
        map[v] = old_g;
        if (other >= 0) map[static_cast<std::size_t>(other)] = g;
        if (after - before > best_delta) {
          best_delta = after - before;
          best_v = vi;
          best_g = g;
        }
      }
    }
    if (best_v < 0) break;
    const int old_g = map[static_cast<std::size_t>(best_v)];
    const int other = best_g >= 0 ? owner[static_cast<std::size_t>(best_g)] : -1;
    map[static_cast<std::size_t>(best_v)] = best_g;
    if (best_g >= 0) owner[static_cast<std::size_t>(best_g)] = best_v;
    if (old_g >= 0) owner[static_cast<std::size_t>(old_g)] = other;
    if (other >= 0) map[static_cast<std::size_t>(other)] = old_g;
    current += static_cast<std::size_t>(best_delta);
  }
  return current;
}

std::vector<int> identity_seed(const MatchProblem& problem) {
  const auto& ps = problem.pred_side();
  const auto& gs = problem.gold_side();
  std::vector<int> map(ps.names.size(), -1);
  for (std::size_t v = 0; v < map.size(); ++v) {
    auto it = gs.index.find(ps.names[v]);
    if (it != gs.index.end() && gs.sorts[static_cast<std::size_t>(it->second)] == ps.sorts[v])
      map[v] = it->second;
  }
  return map;
}

/// Pairs variables of each sort in order of decreasing degree.
std::vector<int> smart_seed(const MatchProblem& problem) {
  const auto& ps = problem.pred_side();
  const auto& gs = problem.gold_side();
  std::map<char, std::vector<int>> pred_by_sort, gold_by_sort;
  for (std::size_t v = 0; v < ps.names.size(); ++v)
    pred_by_sort[ps.sorts[v]].push_back(static_cast<int>(v));
  for (std::size_t g = 0; g < gs.names.size(); ++g)
    gold_by_sort[gs.sorts[g]].push_back(static_cast<int>(g));
  auto by_degree = [](const Side& side) {
    return [&side](int a, int b) {
      const auto da = side.degree[static_cast<std::size_t>(a)];
      const auto db = side.degree[static_cast<std::size_t>(b)];
      return da != db ? da > db : a < b;
    };
  };
  std::vector<int> map(ps.names.size(), -1);
  for (auto& [sort, pv] : pred_by_sort) {
    auto& gv = gold_by_sort[sort];
    std::stable_sort(pv.begin(), pv.end(), by_degree(ps));
    std::stable_sort(gv.begin(), gv.end(), by_degree(gs));
    for (std::size_t i = 0; i < std::min(pv.size(), gv.size()); ++i)
      map[static_cast<std::size_t>(pv[i])] = gv[i];
  }
  return map;
}

std::vector<int> random_seed(const MatchProblem& problem, nn::Rng& rng) {
  const auto& ps = problem.pred_side();
  const auto& gs = problem.gold_side();
  std::map<char, std::vector<int>> free;
  for (std::size_t g = 0; g < gs.names.size(); ++g) free[gs.sorts[g]].push_back(static_cast<int>(g));
  std::vector<int> map(ps.names.size(), -1);
  for (std::size_t v = 0; v < map.size(); ++v) {
    auto& pool = free[ps.sorts[v]];
    if (pool.empty()) continue;
    const std::size_t k = rng.index(pool.size());
    map[v] = pool[k];
    pool.erase(pool.begin() + static_cast<long>(k));
  }
  return map;
}

}  // namespace

MatchResult clause_match_identity(const ClauseSet& pred_in, const ClauseSet& gold_in) {
  const auto pred = normalized(pred_in), gold = normalized(gold_in);
  if (auto d = degenerate(pred, gold)) return *d;
  MatchProblem problem(pred, gold);
  auto map = identity_seed(problem);
  return finish(problem, map, problem.score(map), pred.clauses.size(), gold.clauses.size());
}

MatchResult clause_match_f1(const ClauseSet& pred_in, const ClauseSet& gold_in,
                            const ClauseMatchOptions& options) {
  const auto pred = normalized(pred_in), gold = normalized(gold_in);
  if (auto d = degenerate(pred, gold)) return *d;
  MatchProblem problem(pred, gold);
  nn::Rng rng(options.seed);

  std::vector<int> best_map;
  std::size_t best = 0;
  bool first = true;
  auto run = [&](std::vector<int> map) {
    const std::size_t s = climb(problem, map, options.max_iterations);
    if (first || s > best) {
      best = s;
      best_map = std::move(map);
      first = false;
    }
  };
  run(smart_seed(problem));
  run(identity_seed(problem));
  for (int r = 0; r < options.restarts; ++r) {
    if (best == std::min(pred.clauses.size(), gold.clauses.size())) break;
    run(random_seed(problem, rng));
  }
  return finish(problem, best_map, best, pred.clauses.size(), gold.clauses.size());
}

MatchResult clause_match_bruteforce(const ClauseSet& pred_in, const ClauseSet& gold_in) {
  const auto pred = normalized(pred_in), gold = normalized(gold_in);
  if (auto d = degenerate(pred, gold)) return *d;
  MatchProblem problem(pred, gold);
  if (problem.pred_vars() > kBruteForceMaxVariables || problem.gold_vars() > kBruteForceMaxVariables)
    throw MetricError("brute-force clause matching is limited to " +
                      std::to_string(kBruteForceMaxVariables) + " variables per side");
  const auto& ps = problem.pred_side();
  const auto& gs = problem.gold_side();

  // Unmapped variables never help, so only maximal injections are visited:
  // a pred variable may stay unmapped only when its sort has more pred than
  // gold variables left.
  std::map<char, int> pred_left, gold_free;
  for (char s : ps.sorts) ++pred_left[s];
  for (char s : gs.sorts) ++gold_free[s];
  std::vector<int> map(ps.names.size(), -1), best_map = map;
  std::vector<bool> used(gs.names.size(), false);
  std::size_t best = 0;
  bool first = true;

  auto search = [&](auto&& self, std::size_t v) -> void {
    if (v == map.size()) {
      const std::size_t s = problem.score(map);
      if (first || s > best) {
        best = s;
        best_map = map;
        first = false;
      }
      return;
    }
    const char sort = ps.sorts[v];
    --pred_left[sort];
    for (std::size_t g = 0; g < gs.names.size(); ++g) {
      if (used[g] || gs.sorts[g] != sort) continue;
      used[g] = true;
      --gold_free[sort];
      map[v] = static_cast<int>(g);
      self(self, v + 1);
      map[v] = -1;
      ++gold_free[sort];
      used[g] = false;
    }
    if (pred_left[sort] + 1 > gold_free[sort]) self(self, v + 1);
    ++pred_left[sort];
  };
  search(search, 0);
  return finish(problem, best_map, best, pred.clauses.size(), gold.clauses.size());
}

// ---------------------------------------------------------------------------
// Reports

namespace {

struct DocScores {
  double bleu_unused = 0.0;
  SkeletonScore skeleton;
  MatchResult tuple;
  RelationBreakdown relations;
  MatchResult clause;
};

template <typename Fn>
std::vector<DocScores> score_all(std::size_t n, int threads, Fn&& fn) {
  std::vector<DocScores> out(n);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void emit(std::ostringstream& out, const std::string& name, const MatchResult& r) {
  out << name << ".precision " << fmt(r.precision) << "\n";
  out << name << ".recall " << fmt(r.recall) << "\n";
  out << name << ".f1 " << fmt(r.f1) << "\n";
  out << name << ".counts " << r.matched << " " << r.predicted << " " << r.gold << "\n";
}

}  // namespace

EvalReport evaluate(const std::vector<DrtsTree>& pred, const std::vector<DrtsTree>& gold,
                    const EvalOptions& options) {
  if (pred.size() != gold.size())
    throw MetricError("prediction and gold files hold different numbers of trees (" +
                      std::to_string(pred.size()) + " vs " + std::to_string(gold.size()) + ")");
  if (pred.empty()) throw MetricError("nothing to evaluate");
  EvalReport report;
  report.options = options;
  report.documents = pred.size();

  auto scores = score_all(pred.size(), options.threads, [&](std::size_t i) {
    DocScores s;
    if (options.skeleton) s.skeleton = skeleton_f1(pred[i], gold[i]);
    if (options.tuple) {
      s.tuple = tuple_f1(pred[i], gold[i]);
      s.relations = relation_breakdown(pred[i], gold[i]);
    }
    if (options.clause)
      s.clause = clause_match_f1(to_clause_format(pred[i]), to_clause_format(gold[i]),
                                 options.clause_options);
    return s;
  });

  bool first = true;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& s = scores[i];
    s.clause.mapping.clear();
    if (first) {
      report.skeleton = s.skeleton;
      report.tuple = s.tuple;
      report.relations = s.relations;
      report.clause = s.clause;
      first = false;
    } else {
      report.skeleton += s.skeleton;
      report.tuple += s.tuple;
      report.relations += s.relations;
      report.clause += s.clause;
    }
    if (options.per_document) {
      std::ostringstream line;
      line << "doc " << i;
      if (options.skeleton) line << " skeleton.f1 " << fmt(s.skeleton.overall.f1);
      if (options.tuple) line << " tuple.f1 " << fmt(s.tuple.f1);
      if (options.clause) line << " clause.f1 " << fmt(s.clause.f1);
      report.per_document.push_back(line.str());
    }
  }
  if (options.bleu) {
    std::vector<std::vector<std::string>> c, r;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      c.push_back(output_tokens(pred[i]));
      r.push_back(output_tokens(gold[i]));
    }
    report.bleu = bleu(c, r);
  }
  return report;
}

EvalReport evaluate_clauses(const std::vector<ClauseSet>& pred, const std::vector<ClauseSet>& gold,
                            const EvalOptions& options) {
  if (pred.size() != gold.size())
    throw MetricError("prediction and gold files hold different numbers of clause sets");
  if (pred.empty()) throw MetricError("nothing to evaluate");
  EvalReport report;
  report.options = options;
  report.options.bleu = report.options.skeleton = report.options.tuple = false;
  report.options.clause = true;
  report.documents = pred.size();
  auto scores = score_all(pred.size(), options.threads, [&](std::size_t i) {
    DocScores s;
    s.clause = clause_match_f1(pred[i], gold[i], options.clause_options);
    return s;
  });
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i].clause.mapping.clear();
    if (i == 0)
      report.clause = scores[i].clause;
    else
      report.clause += scores[i].clause;
    if (options.per_document)
      report.per_document.push_back("doc " + std::to_string(i) + " clause.f1 " +
                                    fmt(scores[i].clause.f1));
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "documents " << report.documents << "\n";
  const auto& o = report.options;
  if (o.bleu) out << "bleu " << fmt(report.bleu) << "\n";
  if (o.skeleton) {
    emit(out, "skeleton", report.skeleton.overall);
    emit(out, "skeleton.box", report.skeleton.box);
    emit(out, "skeleton.relation", report.skeleton.relation);
    emit(out, "skeleton.variable", report.skeleton.variable);
  }
  if (o.tuple) {
    emit(out, "tuple", report.tuple);
    emit(out, "relation.label_only", report.relations.relation_only);
    emit(out, "relation.exact", report.relations.exact);
    emit(out, "relation.unary", report.relations.unary);
    emit(out, "relation.binary", report.relations.binary);
  }
  if (o.clause) emit(out, "clause", report.clause);
  for (const auto& line : report.per_document) out << line << "\n";
  return out.str();
}

}  // namespace drts
