#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "drts/autodiff.hpp"
#include "drts/core.hpp"

namespace drts {

/// Precision, recall and F1 together with the counts behind them, so that
/// corpus-level scores can be micro-averaged by adding results.
struct MatchResult {
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, std::string> mapping;  // clause matching only

  static MatchResult from_counts(std::size_t matched, std::size_t predicted, std::size_t gold);
  MatchResult& operator+=(const MatchResult& other);
};

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// BLEU

inline constexpr int kBleuOrder = 4;
/// Numerator used in place of a zero clipped n-gram count (orders >= 2).
inline constexpr double kBleuEpsilon = 0.1;

/// Corpus BLEU with uniform weights over orders 1-4 and the brevity penalty.
/// Orders for which the candidate corpus has no n-grams at all are left out
/// of the geometric mean. No unigram match gives 0. When every candidate is
/// empty the score is 1 if every reference is empty too, else 0. Throws
/// MetricError for a corpus with no documents or mismatched sizes.
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references);

/// Full output sequence (skeleton followed by DRU symbols) used for BLEU.
std::vector<std::string> output_tokens(const DrtsTree& tree);

// ---------------------------------------------------------------------------
// Skeleton brackets

struct SkeletonScore {
  MatchResult overall;
  MatchResult box;       // SDRS and DRS nodes
  MatchResult relation;  // IMP, OR, DUP, POS, NEC, NOT
  MatchResult variable;  // p and k nodes

  SkeletonScore& operator+=(const SkeletonScore& other);
};

/// One labelled span per skeleton node, its leaves being the DRUs (one per
/// box, in traversal order).
struct LabeledSpan {
  std::string label;
  NodeKind kind;
  int begin;
  int end;
  friend auto operator<=>(const LabeledSpan&, const LabeledSpan&) = default;
};
std::vector<LabeledSpan> skeleton_spans(const DrtsTree& tree);

SkeletonScore skeleton_f1(const DrtsTree& pred, const DrtsTree& gold);

// ---------------------------------------------------------------------------
// Tuples

/// Exact (relation, ordered arguments) matches pooled over all DRUs.
MatchResult tuple_f1(const DrtsTree& pred, const DrtsTree& gold);

struct RelationBreakdown {
  MatchResult relation_only;  // labels, variables ignored
  MatchResult exact;
  MatchResult unary;
  MatchResult binary;

  RelationBreakdown& operator+=(const RelationBreakdown& other);
};

RelationBreakdown relation_breakdown(const DrtsTree& pred, const DrtsTree& gold);

// ---------------------------------------------------------------------------
// Clause matching

struct ClauseMatchOptions {
  int restarts = 10;
  int max_iterations = 1000;
  std::uint64_t seed = 1;
};

/// Variables are the clause fields that parse as box ids (`b3`) or indexed
/// referents (`x4`, `p2`, ...); they may only be mapped within their sort.
/// Everything else must match literally.
MatchResult clause_match_f1(const ClauseSet& pred, const ClauseSet& gold,
                            const ClauseMatchOptions& options = {});

/// Score of the mapping that sends each variable to the gold variable with
/// the same name.
MatchResult clause_match_identity(const ClauseSet& pred, const ClauseSet& gold);

/// Exhaustive search over all sort-preserving partial injections.
inline constexpr std::size_t kBruteForceMaxVariables = 8;
MatchResult clause_match_bruteforce(const ClauseSet& pred, const ClauseSet& gold);

// ---------------------------------------------------------------------------
// Corpus reports

struct EvalOptions {
  bool bleu = true;
  bool skeleton = true;
  bool tuple = true;
  bool clause = true;
  bool per_document = false;
  ClauseMatchOptions clause_options;
  int threads = 1;
};

/// Fixed `name value` lines; see `format_report`.
struct EvalReport {
  std::size_t documents = 0;
  double bleu = 0.0;
  SkeletonScore skeleton;
  MatchResult tuple;
  RelationBreakdown relations;
  MatchResult clause;
  std::vector<std::string> per_document;
  EvalOptions options;
};

EvalReport evaluate(const std::vector<DrtsTree>& pred, const std::vector<DrtsTree>& gold,
                    const EvalOptions& options = {});
/// Clause-only evaluation over clause files.
EvalReport evaluate_clauses(const std::vector<ClauseSet>& pred, const std::vector<ClauseSet>& gold,
                            const EvalOptions& options = {});
std::string format_report(const EvalReport& report);

}  // namespace drts
