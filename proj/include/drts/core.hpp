#pragma once

// Discourse representation tree structures: data model, validation,
// invertible linearization and clause rendering.

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace drts {

enum class Sort : char {
  Entity = 'x',
  Event = 'e',
  State = 's',
  Time = 't',
  Proposition = 'p',
  Segment = 'k',
  Constant = 'c',
};

std::optional<Sort> sort_from_char(char c);

/// A discourse referent such as `x16` or `p4`. Constants (`c`) carry a
/// string payload instead of an index and render as `c:payload`.
struct VariableId {
  Sort sort = Sort::Entity;
  int index = 0;
  std::string constant;

  static VariableId make(Sort sort, int index) { return {sort, index, {}}; }
  static VariableId make_constant(std::string payload) {
    return {Sort::Constant, 0, std::move(payload)};
  }

  /// Parses the rendered form; returns nullopt for anything that is not a
  /// variable.
  static std::optional<VariableId> parse(std::string_view text);

  std::string str() const;

  friend bool operator==(const VariableId&, const VariableId&) = default;
  friend auto operator<=>(const VariableId&, const VariableId&) = default;
};

struct RelationTuple {
  std::string relation;
  std::vector<VariableId> args;

  std::string str() const;  // relation(a,b)
  std::vector<std::string> rendered_args() const;

  friend bool operator==(const RelationTuple&, const RelationTuple&) = default;
};

/// Canonical order inside a DRU: relation label, then rendered arguments.
bool canonical_less(const RelationTuple& a, const RelationTuple& b);

/// Terminal node: an unordered set of relation tuples, kept in canonical
/// order with duplicates removed.
class Dru {
 public:
  Dru() = default;
  explicit Dru(std::vector<RelationTuple> tuples);

  const std::vector<RelationTuple>& tuples() const { return tuples_; }
  bool empty() const { return tuples_.empty(); }
  std::size_t size() const { return tuples_.size(); }
  void insert(RelationTuple tuple);

  friend bool operator==(const Dru&, const Dru&) = default;

 private:
  void canonicalize();
  std::vector<RelationTuple> tuples_;
};

enum class NodeKind { Sdrs, Drs, Relation, Variable };

enum class DiscourseRelation { Imp, Or, Dup, Pos, Nec, Not };

inline constexpr DiscourseRelation kAllDiscourseRelations[] = {
    DiscourseRelation::Imp, DiscourseRelation::Or,  DiscourseRelation::Dup,
    DiscourseRelation::Pos, DiscourseRelation::Nec, DiscourseRelation::Not};

std::string_view relation_name(DiscourseRelation r);
std::optional<DiscourseRelation> relation_from_name(std::string_view name);
/// Number of (S)DRS children a discourse relation takes: NOT, POS and NEC
/// scope over one box; IMP, OR and DUP over two.
int relation_arity(DiscourseRelation r);

struct SkeletonNode {
  NodeKind kind = NodeKind::Drs;
  DiscourseRelation relation = DiscourseRelation::Not;  // Relation nodes
  VariableId variable;                                   // Variable nodes
  std::vector<SkeletonNode> children;
  std::optional<Dru> dru;  // only meaningful on (S)DRS nodes

  static SkeletonNode box(NodeKind kind, std::optional<Dru> dru = Dru{},
                          std::vector<SkeletonNode> children = {});
  static SkeletonNode drs(Dru dru = {}, std::vector<SkeletonNode> children = {});
  static SkeletonNode sdrs(std::vector<SkeletonNode> children, Dru dru = {});
  static SkeletonNode rel(DiscourseRelation r, std::vector<SkeletonNode> children);
  static SkeletonNode var(VariableId v, SkeletonNode child);

  bool is_box() const { return kind == NodeKind::Sdrs || kind == NodeKind::Drs; }
  std::string label() const;
};

/// Structural equality; DRU sets compare unordered and a missing DRU on a
/// box equals an empty one.
bool operator==(const SkeletonNode& a, const SkeletonNode& b);

struct DrtsTree {
  SkeletonNode root;

  std::size_t node_count() const;
  std::size_t box_count() const;
  std::size_t tuple_count() const;
  std::size_t edge_count() const;

  friend bool operator==(const DrtsTree& a, const DrtsTree& b) { return a.root == b.root; }
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string rule;
  std::vector<int> path;  // child indices from the root
  std::string detail;

  std::string str() const;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Violation> warnings;  // dangling p/k references

  bool ok() const { return violations.empty(); }
  bool has(std::string_view rule) const;
};

ValidationReport validate_tree(const DrtsTree& tree);

// ---------------------------------------------------------------------------
// Linearization

enum class SymbolKind { Open, Close, Relation, Variable, DruSep };

/// One output token. Relation symbols carry the arity of the tuple they
/// open so that a DRU group can be split back into tuples.
struct Symbol {
  SymbolKind kind = SymbolKind::Close;
  std::string label;  // Open label or relation label
  int arity = 0;      // Relation only
  VariableId variable;

  static Symbol open(std::string label) { return {SymbolKind::Open, std::move(label), 0, {}}; }
  static Symbol close() { return {SymbolKind::Close, {}, 0, {}}; }
  static Symbol relation(std::string label, int arity) {
    return {SymbolKind::Relation, std::move(label), arity, {}};
  }
  static Symbol var(VariableId v) { return {SymbolKind::Variable, {}, 0, std::move(v)}; }
  static Symbol sep() { return {SymbolKind::DruSep, {}, 0, {}}; }

  /// Vocabulary key: `DRS(`, `)`, `warn/2`, `x4`, `|`.
  std::string str() const;
  static Symbol parse(std::string_view key);

  friend bool operator==(const Symbol&, const Symbol&) = default;
};

using SymbolSequence = std::vector<Symbol>;

std::string to_string(const SymbolSequence& seq);
std::vector<std::string> to_keys(const SymbolSequence& seq);

class TreeError : public std::runtime_error {
 public:
  enum class Code { InvalidTree, Unbalanced, GroupCountMismatch, AritySyntax, BadLabel, Syntax };
  TreeError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

SymbolSequence linearize_skeleton(const DrtsTree& tree);
SymbolSequence linearize_drus(const DrtsTree& tree);
DrtsTree delinearize(const SymbolSequence& skeleton, const SymbolSequence& drus);

/// Parses a skeleton-only symbol sequence into nodes with empty DRUs.
SkeletonNode parse_skeleton(const SymbolSequence& skeleton);
/// Interprets an Open label. Throws TreeError(BadLabel) on unknown labels.
SkeletonNode node_from_label(std::string_view label);

// ---------------------------------------------------------------------------
// Clause format

struct Clause {
  std::vector<std::string> fields;  // box, label, args...

  std::string str() const;
  friend bool operator==(const Clause&, const Clause&) = default;
  friend auto operator<=>(const Clause&, const Clause&) = default;
};

struct ClauseSet {
  std::vector<Clause> clauses;  // sorted, unique

  void normalize();
  std::string str() const;
};

ClauseSet to_clause_format(const DrtsTree& tree);
ClauseSet parse_clauses(std::string_view text);

// ---------------------------------------------------------------------------
// Text serialization: `SDRS{}( k1( DRS{letter(x4) warn(e3,x4)}( ) ) )`

std::string format_tree(const DrtsTree& tree);
DrtsTree parse_tree(std::string_view text);

}  // namespace drts
