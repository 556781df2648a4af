#include "drts/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace drts {

std::optional<Sort> sort_from_char(char c) {
  switch (c) {
    case 'x': return Sort::Entity;
    case 'e': return Sort::Event;
    case 's': return Sort::State;
    case 't': return Sort::Time;
    case 'p': return Sort::Proposition;
    case 'k': return Sort::Segment;
    case 'c': return Sort::Constant;
    default: return std::nullopt;
  }
}

std::optional<VariableId> VariableId::parse(std::string_view text) {
  if (text.size() < 2) return std::nullopt;
  auto sort = sort_from_char(text[0]);
  if (!sort) return std::nullopt;
  if (*sort == Sort::Constant) {
    if (text[1] != ':' || text.size() < 3) return std::nullopt;
    return make_constant(std::string(text.substr(2)));
  }
  int index = 0;
  auto digits = text.substr(1);
  if (digits.size() > 1 && digits[0] == '0') return std::nullopt;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || index < 0) return std::nullopt;
  return make(*sort, index);
}

std::string VariableId::str() const {
  if (sort == Sort::Constant) return "c:" + constant;
  return static_cast<char>(sort) + std::to_string(index);
}

std::vector<std::string> RelationTuple::rendered_args() const {
  std::vector<std::string> out;
  out.reserve(args.size());
  for (const auto& a : args) out.push_back(a.str());
  return out;
}

std::string RelationTuple::str() const {
  std::string out = relation + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ',';
    out += args[i].str();
  }
  return out + ")";
}

bool canonical_less(const RelationTuple& a, const RelationTuple& b) {
  if (a.relation != b.relation) return a.relation < b.relation;
  return a.rendered_args() < b.rendered_args();
}

Dru::Dru(std::vector<RelationTuple> tuples) : tuples_(std::move(tuples)) { canonicalize(); }

void Dru::insert(RelationTuple tuple) {
  tuples_.push_back(std::move(tuple));
  canonicalize();
}

void Dru::canonicalize() {
  std::sort(tuples_.begin(), tuples_.end(), canonical_less);
  tuples_.erase(std::unique(tuples_.begin(), tuples_.end()), tuples_.end());
}

std::string_view relation_name(DiscourseRelation r) {
  switch (r) {
    case DiscourseRelation::Imp: return "IMP";
    case DiscourseRelation::Or: return "OR";
    case DiscourseRelation::Dup: return "DUP";
    case DiscourseRelation::Pos: return "POS";
    case DiscourseRelation::Nec: return "NEC";
    case DiscourseRelation::Not: return "NOT";
  }
  return "?";
}

std::optional<DiscourseRelation> relation_from_name(std::string_view name) {
  for (auto r : kAllDiscourseRelations)
    if (relation_name(r) == name) return r;
  return std::nullopt;
}

int relation_arity(DiscourseRelation r) {
  switch (r) {
    case DiscourseRelation::Imp:
    case DiscourseRelation::Or:
    case DiscourseRelation::Dup: return 2;
    default: return 1;
  }
}

SkeletonNode SkeletonNode::box(NodeKind kind, std::optional<Dru> dru,
                               std::vector<SkeletonNode> children) {
  SkeletonNode n;
  n.kind = kind;
  n.dru = std::move(dru);
  n.children = std::move(children);
  return n;
}

SkeletonNode SkeletonNode::drs(Dru dru, std::vector<SkeletonNode> children) {
  return box(NodeKind::Drs, std::move(dru), std::move(children));
}

SkeletonNode SkeletonNode::sdrs(std::vector<SkeletonNode> children, Dru dru) {
  return box(NodeKind::Sdrs, std::move(dru), std::move(children));
}

SkeletonNode SkeletonNode::rel(DiscourseRelation r, std::vector<SkeletonNode> children) {
  SkeletonNode n;
  n.kind = NodeKind::Relation;
  n.relation = r;
  n.children = std::move(children);
  return n;
}

SkeletonNode SkeletonNode::var(VariableId v, SkeletonNode child) {
  SkeletonNode n;
  n.kind = NodeKind::Variable;
  n.variable = std::move(v);
  n.children.push_back(std::move(child));
  return n;
}

std::string SkeletonNode::label() const {
  switch (kind) {
    case NodeKind::Sdrs: return "SDRS";
    case NodeKind::Drs: return "DRS";
    case NodeKind::Relation: return std::string(relation_name(relation));
    case NodeKind::Variable: return variable.str();
  }
  return "?";
}

bool operator==(const SkeletonNode& a, const SkeletonNode& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == NodeKind::Relation && a.relation != b.relation) return false;
  if (a.kind == NodeKind::Variable && a.variable != b.variable) return false;
  if (a.is_box()) {
    static const Dru kEmpty;
    const Dru& da = a.dru ? *a.dru : kEmpty;
    const Dru& db = b.dru ? *b.dru : kEmpty;
    if (!(da == db)) return false;
  } else if (a.dru.has_value() != b.dru.has_value() || (a.dru && !(*a.dru == *b.dru))) {
    return false;
  }
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!(a.children[i] == b.children[i])) return false;
  return true;
}

namespace {

template <typename Fn>
void walk(const SkeletonNode& node, Fn&& fn) {
  fn(node);
  for (const auto& c : node.children) walk(c, fn);
}

}  // namespace

std::size_t DrtsTree::node_count() const {
  std::size_t n = 0;
  walk(root, [&](const SkeletonNode&) { ++n; });
  return n;
}

std::size_t DrtsTree::box_count() const {
  std::size_t n = 0;
  walk(root, [&](const SkeletonNode& s) { n += s.is_box(); });
  return n;
}

std::size_t DrtsTree::tuple_count() const {
  std::size_t n = 0;
  walk(root, [&](const SkeletonNode& s) {
    if (s.is_box() && s.dru) n += s.dru->size();
  });
  return n;
}

std::size_t DrtsTree::edge_count() const {
  // Edges from relation and variable nodes down to the boxes they govern.
  std::size_t n = 0;
  walk(root, [&](const SkeletonNode& s) {
    if (!s.is_box())
      for (const auto& c : s.children) n += c.is_box();
  });
  return n;
}

// ---------------------------------------------------------------------------
// Validation

std::string Violation::str() const {
  std::string out = rule + " at /";
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += '/';
    out += std::to_string(path[i]);
  }
  if (!detail.empty()) out += ": " + detail;
  return out;
}

bool ValidationReport::has(std::string_view rule) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.rule == rule; });
}

namespace {

class Validator {
 public:
  ValidationReport run(const DrtsTree& tree) {
    if (!tree.root.is_box()) fail("root-kind", "root must be SDRS or DRS");
    visit(tree.root);
    path_.clear();
    check_references(tree.root);
    return std::move(report_);
  }

 private:
  void fail(std::string rule, std::string detail) {
    report_.violations.push_back({std::move(rule), path_, std::move(detail)});
  }

  void visit(const SkeletonNode& node) {
    switch (node.kind) {
      case NodeKind::Sdrs:
      case NodeKind::Drs:
        if (node.kind == NodeKind::Sdrs && node.children.empty())
          fail("sdrs-empty", "SDRS without segments");
        for (const auto& c : node.children)
          if (c.is_box()) {
            fail("box-child-kind", "box directly contains " + c.label());
            break;
          }
        break;
      case NodeKind::Relation: {
        if (node.dru) fail("dru-on-relation", node.label());
        int want = relation_arity(node.relation);
        if (static_cast<int>(node.children.size()) != want)
          fail("relation-arity", node.label() + " expects " + std::to_string(want) + " children");
        for (const auto& c : node.children)
          if (!c.is_box()) {
            fail("relation-child-kind", node.label() + " governs " + c.label());
            break;
          }
        break;
      }
      case NodeKind::Variable:
        if (node.dru) fail("dru-on-variable", node.label());
        if (node.variable.sort != Sort::Proposition && node.variable.sort != Sort::Segment)
          fail("variable-sort", node.label());
        if (node.children.size() != 1)
          fail("variable-arity", node.label() + " has " + std::to_string(node.children.size()) +
                                     " children");
        else if (!node.children[0].is_box())
          fail("variable-child-kind", node.label() + " names " + node.children[0].label());
        break;
    }
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      path_.push_back(static_cast<int>(i));
      visit(node.children[i]);
      path_.pop_back();
    }
  }

  void check_references(const SkeletonNode& root) {
    std::set<VariableId> defined;
    walk(root, [&](const SkeletonNode& n) {
      if (n.kind == NodeKind::Variable) defined.insert(n.variable);
    });
    std::set<VariableId> reported;
    walk(root, [&](const SkeletonNode& n) {
      if (!n.dru) return;
      for (const auto& t : n.dru->tuples())
        for (const auto& a : t.args)
          if ((a.sort == Sort::Proposition || a.sort == Sort::Segment) && !defined.count(a) &&
              reported.insert(a).second)
            report_.warnings.push_back({"dangling-ref", {}, a.str() + " in " + t.str()});
    });
  }

  ValidationReport report_;
  std::vector<int> path_;
};

void require_valid(const DrtsTree& tree) {
  auto report = validate_tree(tree);
  if (!report.ok())
    throw TreeError(TreeError::Code::InvalidTree, "invalid tree: " + report.violations[0].str());
}

}  // namespace

ValidationReport validate_tree(const DrtsTree& tree) { return Validator().run(tree); }

// ---------------------------------------------------------------------------
// Linearization

std::string Symbol::str() const {
  switch (kind) {
    case SymbolKind::Open: return label + "(";
    case SymbolKind::Close: return ")";
    case SymbolKind::Relation: return label + "/" + std::to_string(arity);
    case SymbolKind::Variable: return variable.str();
    case SymbolKind::DruSep: return "|";
  }
  return "?";
}

Symbol Symbol::parse(std::string_view key) {
  if (key == ")") return close();
  if (key == "|") return sep();
  if (key.size() > 1 && key.back() == '(') return open(std::string(key.substr(0, key.size() - 1)));
  if (auto slash = key.rfind('/'); slash != std::string_view::npos && slash > 0) {
    int arity = 0;
    auto digits = key.substr(slash + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), arity);
    if (ec == std::errc() && ptr == digits.data() + digits.size())
      return relation(std::string(key.substr(0, slash)), arity);
  }
  if (auto v = VariableId::parse(key)) return var(*v);
  throw TreeError(TreeError::Code::BadLabel, "not a symbol: " + std::string(key));
}

std::vector<std::string> to_keys(const SymbolSequence& seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (const auto& s : seq) out.push_back(s.str());
  return out;
}

std::string to_string(const SymbolSequence& seq) {
  std::string out;
  for (const auto& s : seq) {
    if (!out.empty()) out += ' ';
    out += s.str();
  }
  return out;
}

namespace {

void emit_skeleton(const SkeletonNode& node, SymbolSequence& out) {
  out.push_back(Symbol::open(node.label()));
  for (const auto& c : node.children) emit_skeleton(c, out);
  out.push_back(Symbol::close());
}

void emit_drus(const SkeletonNode& node, SymbolSequence& out) {
  if (node.is_box()) {
    if (node.dru) {
      for (const auto& t : node.dru->tuples())
        out.push_back(Symbol::relation(t.relation, static_cast<int>(t.args.size())));
      for (const auto& t : node.dru->tuples())
        for (const auto& a : t.args) out.push_back(Symbol::var(a));
    }
    out.push_back(Symbol::sep());
  }
  for (const auto& c : node.children) emit_drus(c, out);
}

}  // namespace

SymbolSequence linearize_skeleton(const DrtsTree& tree) {
  require_valid(tree);
  SymbolSequence out;
  emit_skeleton(tree.root, out);
  return out;
}

SymbolSequence linearize_drus(const DrtsTree& tree) {
  require_valid(tree);
  SymbolSequence out;
  emit_drus(tree.root, out);
  return out;
}

SkeletonNode node_from_label(std::string_view label) {
  if (label == "SDRS") return SkeletonNode::box(NodeKind::Sdrs);
  if (label == "DRS") return SkeletonNode::box(NodeKind::Drs);
  if (auto r = relation_from_name(label)) return SkeletonNode::rel(*r, {});
  if (auto v = VariableId::parse(label); v && v->sort != Sort::Constant) {
    SkeletonNode n;
    n.kind = NodeKind::Variable;
    n.variable = *v;
    return n;
  }
  throw TreeError(TreeError::Code::BadLabel, "unknown skeleton label: " + std::string(label));
}

SkeletonNode parse_skeleton(const SymbolSequence& skeleton) {
  using Code = TreeError::Code;
  if (skeleton.empty() || skeleton.front().kind != SymbolKind::Open)
    throw TreeError(Code::Unbalanced, "skeleton must start with an open node");
  std::vector<SkeletonNode> stack;
  std::optional<SkeletonNode> root;
  for (std::size_t i = 0; i < skeleton.size(); ++i) {
    const auto& sym = skeleton[i];
    if (root) throw TreeError(Code::Unbalanced, "symbols after the root closed");
    if (sym.kind == SymbolKind::Open) {
      stack.push_back(node_from_label(sym.label));
    } else if (sym.kind == SymbolKind::Close) {
      if (stack.empty()) throw TreeError(Code::Unbalanced, "unmatched close");
      SkeletonNode done = std::move(stack.back());
      stack.pop_back();
      if (stack.empty())
        root = std::move(done);
      else
        stack.back().children.push_back(std::move(done));
    } else {
      throw TreeError(Code::Unbalanced, "non-bracket symbol in skeleton: " + sym.str());
    }
  }
  if (!root) throw TreeError(Code::Unbalanced, "unclosed skeleton node");
  return std::move(*root);
}

DrtsTree delinearize(const SymbolSequence& skeleton, const SymbolSequence& drus) {
  using Code = TreeError::Code;
  DrtsTree tree{parse_skeleton(skeleton)};

  // Split the DRU stream into groups.
  std::vector<std::vector<Symbol>> groups(1);
  for (const auto& sym : drus) {
    if (sym.kind == SymbolKind::DruSep)
      groups.emplace_back();
    else
      groups.back().push_back(sym);
  }
  if (!groups.back().empty())
    throw TreeError(Code::GroupCountMismatch, "DRU stream does not end with a separator");
  groups.pop_back();
  if (groups.size() != tree.box_count())
    throw TreeError(Code::GroupCountMismatch, std::to_string(groups.size()) + " DRU groups for " +
                                                  std::to_string(tree.box_count()) + " boxes");

  std::size_t next = 0;
  std::function<void(SkeletonNode&)> fill = [&](SkeletonNode& node) {
    if (node.is_box()) {
      const auto& group = groups[next++];
      std::vector<RelationTuple> tuples;
      std::vector<std::size_t> arity;
      std::size_t i = 0;
      for (; i < group.size() && group[i].kind == SymbolKind::Relation; ++i) {
        if (group[i].arity < 1)
          throw TreeError(Code::AritySyntax, "relation without arguments: " + group[i].str());
        tuples.push_back({group[i].label, {}});
        arity.push_back(static_cast<std::size_t>(group[i].arity));
      }
      std::size_t t = 0;
      for (; i < group.size(); ++i) {
        if (group[i].kind != SymbolKind::Variable)
          throw TreeError(Code::AritySyntax, "relation after variables: " + group[i].str());
        while (t < tuples.size() && tuples[t].args.size() == arity[t]) ++t;
        if (t == tuples.size()) throw TreeError(Code::AritySyntax, "too many variables in DRU");
        tuples[t].args.push_back(group[i].variable);
      }
      for (std::size_t r = 0; r < tuples.size(); ++r)
        if (tuples[r].args.size() != arity[r])
          throw TreeError(Code::AritySyntax, "too few variables for " + group[r].str());
      node.dru = Dru(std::move(tuples));
    }
    for (auto& c : node.children) fill(c);
  };
  fill(tree.root);
  return tree;
}

// ---------------------------------------------------------------------------
// Clauses

std::string Clause::str() const {
  std::string out;
  for (const auto& f : fields) {
    if (!out.empty()) out += ' ';
    out += f;
  }
  return out;
}

void ClauseSet::normalize() {
  std::sort(clauses.begin(), clauses.end());
  clauses.erase(std::unique(clauses.begin(), clauses.end()), clauses.end());
}

std::string ClauseSet::str() const {
  std::string out;
  for (const auto& c : clauses) out += c.str() + "\n";
  return out;
}

ClauseSet to_clause_format(const DrtsTree& tree) {
  require_valid(tree);
  ClauseSet out;
  int next_box = 0;
  std::function<void(const SkeletonNode&, int)> visit = [&](const SkeletonNode& node, int box) {
    // `box` is this node's own id for boxes and the governing box otherwise.
    if (node.is_box() && node.dru) {
      for (const auto& t : node.dru->tuples()) {
        Clause c{{"b" + std::to_string(box), t.relation}};
        for (const auto& a : t.args) c.fields.push_back(a.str());
        out.clauses.push_back(std::move(c));
      }
    }
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      const auto& child = node.children[i];
      if (child.is_box()) {
        int id = next_box++;
        std::string label = node.label();
        if (node.kind == NodeKind::Relation && node.children.size() > 1)
          label += std::to_string(i + 1);
        out.clauses.push_back({{"b" + std::to_string(box), label, "b" + std::to_string(id)}});
        visit(child, id);
      } else {
        visit(child, box);
      }
    }
  };
  visit(tree.root, next_box++);
  out.normalize();
  return out;
}

ClauseSet parse_clauses(std::string_view text) {
  ClauseSet out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto pct = line.find('%'); pct != std::string::npos) line.resize(pct);
    std::istringstream ls(line);
    Clause c;
    for (std::string f; ls >> f;) c.fields.push_back(f);
    if (!c.fields.empty()) out.clauses.push_back(std::move(c));
  }
  out.normalize();
  return out;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

void format_node(const SkeletonNode& node, std::string& out) {
  out += node.label();
  if (node.dru) {
    out += '{';
    bool first = true;
    for (const auto& t : node.dru->tuples()) {
      if (!first) out += ' ';
      first = false;
      out += t.str();
    }
    out += '}';
  }
  out += '(';
  for (const auto& c : node.children) {
    out += ' ';
    format_node(c, out);
  }
  out += " )";
}

bool is_name_char(char c) {
  return !std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' && c != '{' &&
         c != '}' && c != ',';
}

class TreeReader {
 public:
  explicit TreeReader(std::string_view text) : text_(text) {}

  DrtsTree read() {
    DrtsTree tree{node()};
    skip();
    if (pos_ != text_.size()) error("trailing input");
    return tree;
  }

 private:
  [[noreturn]] void error(const std::string& what) {
    throw TreeError(TreeError::Code::Syntax,
                    "tree syntax error at column " + std::to_string(pos_ + 1) + ": " + what);
  }
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip();
    return pos_ < text_.size() && text_[pos_] == c;
  }
  void expect(char c) {
    if (!peek(c)) error(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string name() {
    skip();
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
    if (start == pos_) error("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  SkeletonNode node() {
    std::string label = name();
    SkeletonNode n;
    try {
      n = node_from_label(label);
    } catch (const TreeError&) {
      error("unknown label " + label);
    }
    if (n.is_box()) n.dru.reset();
    if (peek('{')) {
      ++pos_;
      Dru dru;
      std::vector<RelationTuple> tuples;
      while (!peek('}')) {
        RelationTuple t{name(), {}};
        expect('(');
        while (true) {
          std::string arg = name();
          auto v = VariableId::parse(arg);
          if (!v) error("not a variable: " + arg);
          t.args.push_back(*v);
          if (peek(',')) {
            ++pos_;
            continue;
          }
          expect(')');
          break;
        }
        tuples.push_back(std::move(t));
      }
      expect('}');
      n.dru = Dru(std::move(tuples));
    }
    expect('(');
    while (!peek(')')) {
      if (pos_ >= text_.size()) error("unexpected end of input");
      n.children.push_back(node());
    }
    expect(')');
    return n;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string format_tree(const DrtsTree& tree) {
  std::string out;
  format_node(tree.root, out);
  return out;
}

DrtsTree parse_tree(std::string_view text) { return TreeReader(text).read(); }

}  // namespace drts
