#include <doctest.h>

#include <algorithm>

#include "drts/core.hpp"
#include "drts/data.hpp"
#include "support.hpp"

using namespace drts;
using drts::test::tuple;

TEST_CASE("variable ids render and parse") {
  CHECK(VariableId::make(Sort::Entity, 16).str() == "x16");
  CHECK(VariableId::make_constant("john").str() == "c:john");
  CHECK(VariableId::parse("p4") == VariableId::make(Sort::Proposition, 4));
  CHECK(VariableId::parse("c:john") == VariableId::make_constant("john"));
  CHECK_FALSE(VariableId::parse("b3"));
  CHECK_FALSE(VariableId::parse("x"));
  CHECK_FALSE(VariableId::parse("x01"));
  CHECK_FALSE(VariableId::parse("letter"));
}

TEST_CASE("dru keeps tuples in canonical order without duplicates") {
  Dru d({tuple("warn", {"e3", "x4"}), tuple("letter", {"x4"}), tuple("letter", {"x4"})});
  REQUIRE(d.size() == 2);
  CHECK(d.tuples()[0].relation == "letter");
  CHECK(d.tuples()[1].relation == "warn");
  CHECK(Dru({tuple("b", {"x1"}), tuple("a", {"x2"})}) == Dru({tuple("a", {"x2"}), tuple("b", {"x1"})}));
}

TEST_CASE("validation") {
  SUBCASE("two segments with content pass") {
    auto t = DrtsTree{SkeletonNode::sdrs(
        {SkeletonNode::var(VariableId::make(Sort::Segment, 1), SkeletonNode::drs(Dru({tuple("man", {"x1"})}))),
         SkeletonNode::var(VariableId::make(Sort::Segment, 4), SkeletonNode::drs(Dru({tuple("sign", {"e2"})})))})};
    auto r = validate_tree(t);
    CHECK(r.ok());
    CHECK(r.warnings.empty());
  }
  SUBCASE("dru under a relation") {
    auto rel = SkeletonNode::rel(DiscourseRelation::Imp, {SkeletonNode::drs(), SkeletonNode::drs()});
    rel.dru = Dru{};
    auto r = validate_tree(DrtsTree{SkeletonNode::drs({}, {rel})});
    CHECK(r.has("dru-on-relation"));
  }
  SUBCASE("variable with two children") {
    auto v = SkeletonNode::var(VariableId::make(Sort::Proposition, 4), SkeletonNode::drs());
    v.children.push_back(SkeletonNode::drs());
    auto r = validate_tree(DrtsTree{SkeletonNode::drs({}, {v})});
    CHECK(r.has("variable-arity"));
  }
  SUBCASE("dangling proposition reference is only a warning") {
    auto t = DrtsTree{SkeletonNode::drs(Dru({tuple("That", {"x1", "p9"})}))};
    auto r = validate_tree(t);
    CHECK(r.ok());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("relation root") {
    auto t = DrtsTree{SkeletonNode::rel(DiscourseRelation::Not, {SkeletonNode::drs()})};
    CHECK(validate_tree(t).has("root-kind"));
  }
}

TEST_CASE("skeleton linearization") {
  CHECK(to_string(linearize_skeleton(DrtsTree{SkeletonNode::drs()})) == "DRS( )");
  auto t = DrtsTree{SkeletonNode::sdrs(
      {SkeletonNode::var(VariableId::make(Sort::Segment, 1), SkeletonNode::drs()),
       SkeletonNode::rel(DiscourseRelation::Not, {SkeletonNode::drs()})})};
  CHECK(to_string(linearize_skeleton(t)) == "SDRS( k1( DRS( ) ) NOT( DRS( ) ) )");
}

TEST_CASE("dru linearization") {
  auto one = DrtsTree{SkeletonNode::drs(Dru({tuple("That", {"x16", "p4"})}))};
  CHECK(to_string(linearize_drus(one)) == "That/2 x16 p4 |");
  CHECK(to_string(linearize_drus(DrtsTree{SkeletonNode::drs()})) == "|");
  auto two = DrtsTree{SkeletonNode::drs(Dru({tuple("warn", {"e1", "x1"}), tuple("letter", {"x1"})}))};
  CHECK(to_string(linearize_drus(two)) == "letter/1 warn/2 x1 e1 x1 |");
}

TEST_CASE("delinearize errors") {
  SymbolSequence open_only{Symbol::open("DRS")};
  SymbolSequence sep{Symbol::sep()};
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const TreeError& e) {
      return e.code();
    }
    FAIL("no error");
    return TreeError::Code::Syntax;
  };
  CHECK(code_of([&] { delinearize(open_only, sep); }) == TreeError::Code::Unbalanced);
  SymbolSequence drs{Symbol::open("DRS"), Symbol::close()};
  CHECK(code_of([&] { delinearize(drs, {}); }) == TreeError::Code::GroupCountMismatch);
  CHECK(code_of([&] { delinearize(drs, {Symbol::sep(), Symbol::sep()}); }) ==
        TreeError::Code::GroupCountMismatch);
  SymbolSequence short_group{Symbol::relation("warn", 2), Symbol::var(VariableId::make(Sort::Event, 1)),
                             Symbol::sep()};
  CHECK(code_of([&] { delinearize(drs, short_group); }) == TreeError::Code::AritySyntax);
  CHECK(delinearize(drs, sep) == DrtsTree{SkeletonNode::drs()});
}

TEST_CASE("round trip over random trees") {
  SyntheticSpec spec;
  spec.max_depth = 6;
  spec.max_tuples = 8;
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    auto t = random_tree(seed, spec);
    REQUIRE(validate_tree(t).ok());
    auto skel = linearize_skeleton(t);
    auto drus = linearize_drus(t);
    CHECK(skel.size() == 2 * t.node_count());
    long depth = 0;
    for (const auto& s : skel) {
      depth += s.kind == SymbolKind::Open ? 1 : -1;
      REQUIRE(depth >= 0);
    }
    CHECK(depth == 0);
    CHECK(delinearize(skel, drus) == t);
    CHECK(parse_tree(format_tree(t)) == t);
    CHECK(to_clause_format(t).clauses.size() == t.tuple_count() + t.edge_count());
  }
}

TEST_CASE("validator rejects single-rule mutations of generated trees") {
  SyntheticSpec spec;
  spec.max_depth = 6;
  int mutated = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto t = random_tree(seed, spec);
    REQUIRE(validate_tree(t).ok());
    auto each_node = [&](auto&& mutate) {
      std::vector<SkeletonNode*> all;
      std::function<void(SkeletonNode&)> walk = [&](SkeletonNode& n) {
        all.push_back(&n);
        for (auto& c : n.children) walk(c);
      };
      walk(t.root);
      for (std::size_t i = 0; i < all.size(); ++i) {
        DrtsTree copy = t;
        std::vector<SkeletonNode*> nodes;
        std::function<void(SkeletonNode&)> w2 = [&](SkeletonNode& n) {
          nodes.push_back(&n);
          for (auto& c : n.children) w2(c);
        };
        w2(copy.root);
        if (mutate(*nodes[i])) {
          ++mutated;
          CHECK_FALSE(validate_tree(copy).ok());
        }
      }
    };
    each_node([](SkeletonNode& n) {
      if (n.kind != NodeKind::Relation) return false;
      n.dru = Dru{};
      return true;
    });
    each_node([](SkeletonNode& n) {
      if (n.kind != NodeKind::Variable) return false;
      n.children.push_back(SkeletonNode::drs());
      return true;
    });
    each_node([](SkeletonNode& n) {
      if (n.kind != NodeKind::Variable) return false;
      n.variable = VariableId::make(Sort::Entity, 1);
      return true;
    });
    each_node([](SkeletonNode& n) {
      if (n.kind != NodeKind::Relation) return false;
      n.children.pop_back();
      return true;
    });
    each_node([](SkeletonNode& n) {
      if (!n.is_box()) return false;
      n.children.push_back(SkeletonNode::drs());
      return true;
    });
  }
  CHECK(mutated > 100);
}

TEST_CASE("clause format") {
  auto single = DrtsTree{SkeletonNode::drs(Dru({tuple("letter", {"x4"})}))};
  CHECK(to_clause_format(single).str() == "b0 letter x4\n");

  auto segments = DrtsTree{SkeletonNode::sdrs(
      {SkeletonNode::var(VariableId::make(Sort::Segment, 1), SkeletonNode::drs()),
       SkeletonNode::var(VariableId::make(Sort::Segment, 4), SkeletonNode::drs())})};
  CHECK(to_clause_format(segments).str() == "b0 k1 b1\nb0 k4 b2\n");

  auto prop = DrtsTree{SkeletonNode::drs(
      Dru({tuple("That", {"x16", "p4"})}),
      {SkeletonNode::var(VariableId::make(Sort::Proposition, 4), SkeletonNode::drs())})};
  auto clauses = to_clause_format(prop).clauses;
  CHECK(std::find(clauses.begin(), clauses.end(), Clause{{"b0", "That", "x16", "p4"}}) != clauses.end());

  auto imp = DrtsTree{SkeletonNode::drs(
      {}, {SkeletonNode::rel(DiscourseRelation::Imp, {SkeletonNode::drs(), SkeletonNode::drs()})})};
  CHECK(to_clause_format(imp).str() == "b0 IMP1 b1\nb0 IMP2 b2\n");

  auto parsed = parse_clauses("% header\nb0 letter x4  % trailing\n\nb0 letter x4\n");
  CHECK(parsed.str() == "b0 letter x4\n");
}

TEST_CASE("tree text format") {
  const std::string text = "SDRS{continuation(k1,k2)}( k1( DRS{letter(x4) warn(e3,x4)}( ) ) "
                           "k2( DRS{Name(x4,c:john)}( ) ) )";
  auto t = parse_tree(text);
  CHECK(t.box_count() == 3);
  CHECK(t.tuple_count() == 4);
  CHECK(format_tree(t) == text);
  CHECK_THROWS_AS(parse_tree("DRS{letter(x4)}( "), TreeError);
  CHECK_THROWS_AS(parse_tree("BOX( )"), TreeError);
}
