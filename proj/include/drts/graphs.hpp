#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "drts/core.hpp"

namespace drts {

/// Undirected graph with self-loops on every node. Adjacency is kept both as
/// a dense symmetric matrix and as sorted neighbor lists.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t n);

  std::size_t size() const { return labels_.size(); }
  bool adjacent(std::size_t i, std::size_t j) const { return adjacency_[i * size() + j] != 0; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
  const std::string& label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::string>& labels() const { return labels_; }

  void connect(std::size_t i, std::size_t j);
  void disconnect(std::size_t i, std::size_t j);
  void set_label(std::size_t i, std::string label) { labels_[i] = std::move(label); }

  std::size_t edge_count() const;  // undirected, self-loops excluded
  bool symmetric() const;
  bool connected() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::vector<char> adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<std::string> labels_;
};

/// Heads are 1-based within the sentence, 0 marks the root.
struct DependencyTree {
  std::vector<int> heads;
  std::vector<std::string> labels;
};

class GraphError : public std::runtime_error {
 public:
  enum class Code { LengthMismatch, CyclicTree, RootCount, HeadOutOfRange, Unbalanced };
  GraphError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

inline constexpr const char* kSentenceStart = "<s>";
inline constexpr const char* kSentenceEnd = "<e>";
inline constexpr const char* kMarkerLabel = "<marker>";

/// Throws GraphError when the tree is not a single-rooted, acyclic tree.
void check_dependency_tree(const DependencyTree& tree);

/// One node per encoder position (`<s> w.. <e>` per sentence). `sentence_lengths`
/// gives the token count of every sentence.
Graph build_syntax_graph(const std::vector<std::size_t>& sentence_lengths,
                         const std::vector<DependencyTree>& deps);

/// One node per open symbol; Close symbols get no node.
Graph build_skeleton_graph(const SymbolSequence& skeleton);

/// Position in `skeleton` of the open symbol behind each skeleton-graph node.
std::vector<std::size_t> skeleton_node_positions(const SymbolSequence& skeleton);

}  // namespace drts
