#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "drts/core.hpp"
#include "drts/graphs.hpp"

namespace drts {

class CorpusError : public std::runtime_error {
 public:
  enum class Code { Parse, Alignment, Config, Io };
  CorpusError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// A tokenized paragraph with per-sentence dependency trees and, for
/// training data, its gold tree.
struct Document {
  std::string id;
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::vector<std::string>> lemmas;
  std::vector<DependencyTree> deps;  // empty when no syntax is available
  std::optional<DrtsTree> gold;

  /// Throws CorpusError(Alignment) when the parallel arrays disagree.
  void validate() const;
  std::size_t word_count() const;
  std::vector<std::size_t> sentence_lengths() const;

  /// `<s> w.. <e>` per sentence, and the parallel lemma sequence.
  std::vector<std::string> encoder_words() const;
  std::vector<std::string> encoder_lemmas() const;
};

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t sentences = 0;
  double avg_sentences = 0.0;  // per document
  double avg_words = 0.0;      // per document, markers excluded
};

CorpusStats corpus_stats(const std::vector<Document>& docs);

struct Corpus {
  std::vector<Document> documents;
  CorpusStats stats;
};

/// Corpus directory layout: `text.txt`, `deps.conll` and optionally
/// `gold.trees`.
inline constexpr const char* kTextFile = "text.txt";
inline constexpr const char* kDepsFile = "deps.conll";
inline constexpr const char* kTreesFile = "gold.trees";

Corpus load_corpus(const std::string& dir);
void save_corpus(const std::string& dir, const std::vector<Document>& docs);

/// Text: one sentence per line, blank line between documents, optional
/// `# doc <id>` header. Deps: CoNLL columns index, form, lemma, head, deprel.
std::vector<Document> load_documents(const std::string& text_path, const std::string& deps_path);
std::vector<Document> parse_documents(const std::string& text, const std::string& conll,
                                      const std::string& text_name = "text",
                                      const std::string& conll_name = "deps");
std::string format_text(const std::vector<Document>& docs);
std::string format_conll(const std::vector<Document>& docs);

std::vector<DrtsTree> load_trees(const std::string& path);
std::vector<DrtsTree> parse_trees(const std::string& text, const std::string& name = "trees");
void save_trees(const std::string& path, const std::vector<DrtsTree>& trees);

// ---------------------------------------------------------------------------

/// String <-> id map. With an UNK entry, unknown strings map to id 0.
class Vocab {
 public:
  static constexpr const char* kUnk = "<unk>";

  Vocab() = default;
  explicit Vocab(bool with_unk);

  int add(const std::string& token);
  std::optional<int> find(const std::string& token) const;
  /// Unknown tokens map to UNK, or throw std::out_of_range without one.
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  bool has_unk() const { return has_unk_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string serialize() const;
  static Vocab deserialize(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  bool has_unk_ = false;
};

/// Reads word2vec-style text vectors into rows aligned with `words`; words
/// without a vector get a zero row. Throws CorpusError(Config) when the file's
/// dimension differs from `dim`.
Eigen::MatrixXd load_embeddings(const std::string& path, const Vocab& words, Eigen::Index dim);

// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int documents = 32;
  int max_depth = 4;         // skeleton nodes on the longest root-to-leaf path
  int relations = 24;        // size of the DRU relation inventory drawn from
  int max_tuples = 4;        // per DRU
  int max_segments = 3;      // children of an SDRS
  double constant_rate = 0.1;
};

/// Random valid trees with pseudo-text that mentions every relation and
/// variable, plus a consistent dependency tree per sentence.
std::vector<Document> gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec);

/// Random valid tree only (no text), for property tests.
DrtsTree random_tree(std::uint64_t seed, const SyntheticSpec& spec);

/// Longest root-to-leaf path counted in skeleton nodes.
int tree_depth(const DrtsTree& tree);

}  // namespace drts
