#include "drts/graphs.hpp"

#include <algorithm>

namespace drts {

Graph::Graph(std::size_t n) : adjacency_(n * n, 0), neighbors_(n), labels_(n) {
  for (std::size_t i = 0; i < n; ++i) connect(i, i);
}

void Graph::connect(std::size_t i, std::size_t j) {
  std::size_t n = size();
  if (adjacency_[i * n + j]) return;
  adjacency_[i * n + j] = adjacency_[j * n + i] = 1;
  auto add = [](std::vector<std::size_t>& list, std::size_t v) {
    list.insert(std::lower_bound(list.begin(), list.end(), v), v);
  };
  add(neighbors_[i], j);
  if (i != j) add(neighbors_[j], i);
}

void Graph::disconnect(std::size_t i, std::size_t j) {
  std::size_t n = size();
  adjacency_[i * n + j] = adjacency_[j * n + i] = 0;
  std::erase(neighbors_[i], j);
  std::erase(neighbors_[j], i);
}

std::size_t Graph::edge_count() const {
  std::size_t n = size(), count = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) count += adjacent(i, j);
  return count;
}

bool Graph::symmetric() const {
  std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (adjacent(i, j) != adjacent(j, i)) return false;
  return true;
}

bool Graph::connected() const {
  if (size() == 0) return true;
  std::vector<char> seen(size(), 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t u : neighbors_[v])
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        stack.push_back(u);
      }
  }
  return count == size();
}

void check_dependency_tree(const DependencyTree& tree) {
  using Code = GraphError::Code;
  const int n = static_cast<int>(tree.heads.size());
  if (tree.labels.size() != tree.heads.size())
    throw GraphError(Code::LengthMismatch, "dependency labels and heads differ in length");
  int roots = 0;
  for (int h : tree.heads) {
    if (h < 0 || h > n) throw GraphError(Code::HeadOutOfRange, "head " + std::to_string(h));
    roots += h == 0;
  }
  if (roots != 1)
    throw GraphError(Code::RootCount, "sentence has " + std::to_string(roots) + " roots");
  for (int i = 1; i <= n; ++i) {
    int steps = 0;
    for (int v = i; v != 0; v = tree.heads[v - 1])
      if (++steps > n) throw GraphError(Code::CyclicTree, "cycle through token " + std::to_string(i));
  }
}

Graph build_syntax_graph(const std::vector<std::size_t>& sentence_lengths,
                         const std::vector<DependencyTree>& deps) {
  if (sentence_lengths.size() != deps.size())
    throw GraphError(GraphError::Code::LengthMismatch, "sentence count differs from tree count");
  std::size_t total = 0;
  for (std::size_t i = 0; i < deps.size(); ++i) {
    if (deps[i].heads.size() != sentence_lengths[i])
      throw GraphError(GraphError::Code::LengthMismatch,
                       "sentence " + std::to_string(i) + " has " +
                           std::to_string(sentence_lengths[i]) + " tokens but " +
                           std::to_string(deps[i].heads.size()) + " heads");
    check_dependency_tree(deps[i]);
    total += sentence_lengths[i] + 2;
  }

  Graph g(total);
  std::size_t offset = 0;
  std::size_t previous_end = 0;
  for (std::size_t s = 0; s < deps.size(); ++s) {
    const auto& tree = deps[s];
    std::size_t start = offset, end = offset + tree.heads.size() + 1;
    g.set_label(start, kMarkerLabel);
    g.set_label(end, kMarkerLabel);
    g.connect(start, end);
    if (s > 0) g.connect(previous_end, start);
    for (std::size_t i = 0; i < tree.heads.size(); ++i) {
      std::size_t node = start + 1 + i;
      g.set_label(node, tree.labels[i]);
      int h = tree.heads[i];
      g.connect(node, h == 0 ? start : start + static_cast<std::size_t>(h));
    }
    previous_end = end;
    offset = end + 1;
  }
  return g;
}

std::vector<std::size_t> skeleton_node_positions(const SymbolSequence& skeleton) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < skeleton.size(); ++i)
    if (skeleton[i].kind == SymbolKind::Open) out.push_back(i);
  return out;
}

Graph build_skeleton_graph(const SymbolSequence& skeleton) {
  std::vector<std::size_t> parent_of;
  std::vector<std::string> labels;
  std::vector<std::size_t> stack;
  bool closed = false;
  for (const auto& sym : skeleton) {
    if (closed) throw GraphError(GraphError::Code::Unbalanced, "symbols after the root closed");
    if (sym.kind == SymbolKind::Open) {
      parent_of.push_back(stack.empty() ? labels.size() : stack.back());
      stack.push_back(labels.size());
      labels.push_back(sym.label);
    } else if (sym.kind == SymbolKind::Close) {
      if (stack.empty()) throw GraphError(GraphError::Code::Unbalanced, "unmatched close");
      stack.pop_back();
      closed = stack.empty();
    } else {
      throw GraphError(GraphError::Code::Unbalanced, "non-bracket symbol " + sym.str());
    }
  }
  if (!stack.empty() || labels.empty())
    throw GraphError(GraphError::Code::Unbalanced, "unbalanced skeleton");

  Graph g(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    g.set_label(i, labels[i]);
    g.connect(i, parent_of[i]);
  }
  return g;
}

}  // namespace drts
