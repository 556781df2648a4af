#include <doctest.h>

#include <set>

#include "drts/data.hpp"
#include "drts/graphs.hpp"

using namespace drts;

namespace {

using Edge = std::pair<std::size_t, std::size_t>;

std::set<Edge> edges(const Graph& g) {
  std::set<Edge> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j)
      if (g.adjacent(i, j)) out.insert({i, j});
  return out;
}

bool all_self_loops(const Graph& g) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!g.adjacent(i, i)) return false;
  return true;
}

}  // namespace

TEST_CASE("one-token sentence") {
  auto g = build_syntax_graph({1}, {DependencyTree{{0}, {"root"}}});
  REQUIRE(g.size() == 3);
  CHECK(edges(g) == std::set<Edge>{{0, 1}, {0, 2}});
  CHECK(all_self_loops(g));
  CHECK(g.label(0) == kMarkerLabel);
  CHECK(g.label(1) == "root");
  CHECK(g.label(2) == kMarkerLabel);
}

TEST_CASE("sentences are chained through their markers") {
  auto g = build_syntax_graph({1, 1}, {DependencyTree{{0}, {"root"}}, DependencyTree{{0}, {"root"}}});
  REQUIRE(g.size() == 6);
  CHECK(g.adjacent(2, 3));
  CHECK(g.adjacent(3, 2));
  CHECK_FALSE(g.adjacent(0, 3));
  CHECK(g.connected());
}

TEST_CASE("arcs from a head array") {
  // Tokens 1..4 sit at positions 1..4; <s> at 0 and <e> at 5.
  auto g = build_syntax_graph({4}, {DependencyTree{{2, 0, 2, 3}, {"a", "root", "b", "c"}}});
  std::set<Edge> want{{1, 2}, {0, 2}, {2, 3}, {3, 4}, {0, 5}};
  CHECK(edges(g) == want);
  CHECK(g.symmetric());
  CHECK(all_self_loops(g));
  CHECK(g.label(3) == "b");
}

TEST_CASE("malformed dependency trees") {
  auto code = [](const std::vector<std::size_t>& lengths, const DependencyTree& t) {
    try {
      build_syntax_graph(lengths, {t});
    } catch (const GraphError& e) {
      return e.code();
    }
    FAIL("no error");
    return GraphError::Code::Unbalanced;
  };
  CHECK(code({2}, DependencyTree{{0}, {"root"}}) == GraphError::Code::LengthMismatch);
  CHECK(code({2}, DependencyTree{{2, 1}, {"a", "b"}}) == GraphError::Code::RootCount);
  CHECK(code({3}, DependencyTree{{0, 3, 2}, {"r", "a", "b"}}) == GraphError::Code::CyclicTree);
  CHECK(code({2}, DependencyTree{{0, 5}, {"r", "a"}}) == GraphError::Code::HeadOutOfRange);
}

TEST_CASE("skeleton graphs") {
  SymbolSequence single{Symbol::open("DRS"), Symbol::close()};
  auto g1 = build_skeleton_graph(single);
  CHECK(g1.size() == 1);
  CHECK(g1.adjacent(0, 0));

  auto seq = linearize_skeleton(parse_tree("SDRS{}( k1( DRS{}( ) ) k4( DRS{}( ) ) )"));
  auto g = build_skeleton_graph(seq);
  REQUIRE(g.size() == 5);
  CHECK(edges(g) == std::set<Edge>{{0, 1}, {1, 2}, {0, 3}, {3, 4}});
  CHECK(g.labels() == std::vector<std::string>{"SDRS", "k1", "DRS", "k4", "DRS"});
  CHECK(skeleton_node_positions(seq) == std::vector<std::size_t>{0, 1, 2, 5, 6});

  SymbolSequence unbalanced{Symbol::open("DRS")};
  CHECK_THROWS_AS(build_skeleton_graph(unbalanced), GraphError);
}

TEST_CASE("graph properties over random trees and corpora") {
  SyntheticSpec spec;
  spec.max_depth = 6;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    auto seq = linearize_skeleton(random_tree(seed, spec));
    auto g = build_skeleton_graph(seq);
    REQUIRE(g.size() == seq.size() / 2);
    CHECK(g.symmetric());
    CHECK(g.connected());
    CHECK(g.edge_count() == g.size() - 1);
    CHECK(g == build_skeleton_graph(seq));
  }
  for (const auto& doc : gen_synthetic(3, SyntheticSpec{})) {
    auto g = build_syntax_graph(doc.sentence_lengths(), doc.deps);
    CHECK(g.size() == doc.encoder_words().size());
    CHECK(g.symmetric());
    CHECK(g.connected());
    CHECK(all_self_loops(g));
  }
}
