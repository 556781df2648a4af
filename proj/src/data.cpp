#include "drts/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "drts/autodiff.hpp"

namespace drts {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError(CorpusError::Code::Io, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError(CorpusError::Code::Io, "cannot write " + path);
  out << text;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

[[noreturn]] void parse_error(const std::string& file, std::size_t line, const std::string& what) {
  throw CorpusError(CorpusError::Code::Parse, file + ":" + std::to_string(line) + ": " + what);
}

constexpr std::string_view kDocHeader = "# doc ";

}  // namespace

// ---------------------------------------------------------------------------

void Document::validate() const {
  auto fail = [&](const std::string& what) {
    throw CorpusError(CorpusError::Code::Alignment, "document " + id + ": " + what);
  };
  if (sentences.empty()) fail("no sentences");
  if (lemmas.size() != sentences.size()) fail("lemma sentences do not match token sentences");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) fail("empty sentence " + std::to_string(i));
    if (lemmas[i].size() != sentences[i].size())
      fail("sentence " + std::to_string(i) + " has " + std::to_string(sentences[i].size()) +
           " tokens but " + std::to_string(lemmas[i].size()) + " lemmas");
  }
  if (!deps.empty()) {
    if (deps.size() != sentences.size()) fail("dependency trees do not match sentences");
    for (std::size_t i = 0; i < deps.size(); ++i)
      if (deps[i].heads.size() != sentences[i].size())
        fail("dependency tree " + std::to_string(i) + " has the wrong length");
  }
}

std::size_t Document::word_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::vector<std::size_t> Document::sentence_lengths() const {
  std::vector<std::size_t> out;
  for (const auto& s : sentences) out.push_back(s.size());
  return out;
}

std::vector<std::string> Document::encoder_words() const {
  std::vector<std::string> out;
  for (const auto& s : sentences) {
    out.push_back(kSentenceStart);
    out.insert(out.end(), s.begin(), s.end());
    out.push_back(kSentenceEnd);
  }
  return out;
}

std::vector<std::string> Document::encoder_lemmas() const {
  std::vector<std::string> out;
  for (const auto& s : lemmas) {
    out.push_back(kSentenceStart);
    out.insert(out.end(), s.begin(), s.end());
    out.push_back(kSentenceEnd);
  }
  return out;
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
  CorpusStats stats;
  stats.documents = docs.size();
  std::size_t words = 0;
  for (const auto& d : docs) {
    stats.sentences += d.sentences.size();
    words += d.word_count();
  }
  if (!docs.empty()) {
    stats.avg_sentences = static_cast<double>(stats.sentences) / static_cast<double>(docs.size());
    stats.avg_words = static_cast<double>(words) / static_cast<double>(docs.size());
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Text and CoNLL

std::vector<Document> parse_documents(const std::string& text, const std::string& conll,
                                      const std::string& text_name,
                                      const std::string& conll_name) {
  std::vector<Document> docs;
  {
    std::istringstream in(text);
    std::string line;
    bool open = false;
    while (std::getline(in, line)) {
      line = strip_cr(line);
      if (line.rfind(kDocHeader, 0) == 0) {
        docs.emplace_back();
        docs.back().id = line.substr(kDocHeader.size());
        open = true;
        continue;
      }
      if (blank(line)) {
        open = false;
        continue;
      }
      if (!open) {
        docs.emplace_back();
        docs.back().id = "d" + std::to_string(docs.size());
        open = true;
      }
      docs.back().sentences.push_back(split_ws(line));
    }
  }

  if (conll.empty()) {
    for (auto& d : docs) d.lemmas = d.sentences;
  } else {
    std::istringstream in(conll);
    std::string line;
    std::size_t lineno = 0;
    int doc = -1;
    std::size_t sent = 0;
    bool in_sentence = false;
    auto current = [&]() -> Document& {
      if (doc < 0 || static_cast<std::size_t>(doc) >= docs.size())
        throw CorpusError(CorpusError::Code::Alignment,
                          conll_name + ":" + std::to_string(lineno) +
                              ": more documents in the dependency file than in " + text_name);
      return docs[static_cast<std::size_t>(doc)];
    };
    while (std::getline(in, line)) {
      ++lineno;
      line = strip_cr(line);
      if (line.rfind(kDocHeader, 0) == 0) {
        ++doc;
        sent = 0;
        in_sentence = false;
        const std::string id = line.substr(kDocHeader.size());
        if (current().id != id)
          throw CorpusError(CorpusError::Code::Alignment,
                            conll_name + ":" + std::to_string(lineno) + ": document " + id +
                                " does not match " + current().id);
        continue;
      }
      if (!line.empty() && line[0] == '#') continue;
      if (blank(line)) {
        if (in_sentence) ++sent;
        in_sentence = false;
        continue;
      }
      if (doc < 0) doc = 0;
      auto cols = split_tabs(line);
      if (cols.size() < 5) parse_error(conll_name, lineno, "expected 5 tab-separated columns");
      Document& d = current();
      if (sent >= d.sentences.size())
        throw CorpusError(CorpusError::Code::Alignment,
                          conll_name + ":" + std::to_string(lineno) + ": extra sentence in " + d.id);
      if (!in_sentence) {
        d.deps.emplace_back();
        d.lemmas.emplace_back();
        in_sentence = true;
      }
      auto& tree = d.deps.back();
      const std::size_t pos = tree.heads.size();
      int index = 0, head = 0;
      try {
        index = std::stoi(cols[0]);
        head = std::stoi(cols[3]);
      } catch (const std::exception&) {
        parse_error(conll_name, lineno, "index and head must be integers");
      }
      if (index != static_cast<int>(pos) + 1)
        parse_error(conll_name, lineno, "token index " + cols[0] + " out of sequence");
      if (pos >= d.sentences[sent].size() || d.sentences[sent][pos] != cols[1])
        throw CorpusError(CorpusError::Code::Alignment,
                          conll_name + ":" + std::to_string(lineno) + ": token '" + cols[1] +
                              "' does not match the text of " + d.id);
      tree.heads.push_back(head);
      tree.labels.push_back(cols[4]);
      d.lemmas.back().push_back(cols[2] == "_" ? cols[1] : cols[2]);
    }
  }
  for (auto& d : docs) d.validate();
  return docs;
}

std::string format_text(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += std::string(kDocHeader) + d.id + "\n";
    for (const auto& s : d.sentences) {
      for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + s[i];
      out += "\n";
    }
    out += "\n";
  }
  return out;
}

std::string format_conll(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += std::string(kDocHeader) + d.id + "\n";
    for (std::size_t s = 0; s < d.sentences.size(); ++s) {
      for (std::size_t i = 0; i < d.sentences[s].size(); ++i) {
        const auto& dep = d.deps.at(s);
        out += std::to_string(i + 1) + "\t" + d.sentences[s][i] + "\t" + d.lemmas[s][i] + "\t" +
               std::to_string(dep.heads[i]) + "\t" + dep.labels[i] + "\n";
      }
      out += "\n";
    }
  }
  return out;
}

std::vector<Document> load_documents(const std::string& text_path, const std::string& deps_path) {
  std::string conll = deps_path.empty() ? std::string() : read_file(deps_path);
  return parse_documents(read_file(text_path), conll, text_path, deps_path);
}

std::vector<DrtsTree> parse_trees(const std::string& text, const std::string& name) {
  std::vector<DrtsTree> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (blank(line) || line[0] == '#') continue;
    try {
      out.push_back(parse_tree(line));
    } catch (const TreeError& e) {
      parse_error(name, lineno, e.what());
    }
  }
  return out;
}

std::vector<DrtsTree> load_trees(const std::string& path) { return parse_trees(read_file(path), path); }

void save_trees(const std::string& path, const std::vector<DrtsTree>& trees) {
  std::string out;
  for (const auto& t : trees) out += format_tree(t) + "\n";
  write_file(path, out);
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const fs::path deps = root / kDepsFile;
  Corpus corpus;
  corpus.documents =
      load_documents((root / kTextFile).string(), fs::exists(deps) ? deps.string() : std::string());
  const fs::path trees = root / kTreesFile;
  if (fs::exists(trees)) {
    auto gold = load_trees(trees.string());
    if (gold.size() != corpus.documents.size())
      throw CorpusError(CorpusError::Code::Alignment,
                        trees.string() + ": " + std::to_string(gold.size()) + " trees for " +
                            std::to_string(corpus.documents.size()) + " documents");
    for (std::size_t i = 0; i < gold.size(); ++i) corpus.documents[i].gold = std::move(gold[i]);
  }
  corpus.stats = corpus_stats(corpus.documents);
  return corpus;
}

void save_corpus(const std::string& dir, const std::vector<Document>& docs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file((fs::path(dir) / kTextFile).string(), format_text(docs));
  const bool with_deps = std::all_of(docs.begin(), docs.end(),
                                     [](const Document& d) { return !d.deps.empty(); });
  if (with_deps) write_file((fs::path(dir) / kDepsFile).string(), format_conll(docs));
  const bool with_gold =
      std::all_of(docs.begin(), docs.end(), [](const Document& d) { return d.gold.has_value(); });
  if (with_gold) {
    std::vector<DrtsTree> trees;
    for (const auto& d : docs) trees.push_back(*d.gold);
    save_trees((fs::path(dir) / kTreesFile).string(), trees);
  }
}

// ---------------------------------------------------------------------------

Vocab::Vocab(bool with_unk) : has_unk_(with_unk) {
  if (with_unk) add(kUnk);
}

int Vocab::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  if (token.empty() || std::any_of(token.begin(), token.end(),
                                   [](unsigned char c) { return std::isspace(c); }))
    throw std::invalid_argument("vocabulary tokens must be non-empty without whitespace");
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::optional<int> Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id(const std::string& token) const {
  if (auto found = find(token)) return *found;
  if (has_unk_) return 0;
  throw std::out_of_range("not in vocabulary: " + token);
}

std::string Vocab::serialize() const {
  std::string out = has_unk_ ? "unk" : "nounk";
  for (std::size_t i = has_unk_ ? 1 : 0; i < tokens_.size(); ++i) out += " " + tokens_[i];
  return out;
}

Vocab Vocab::deserialize(const std::string& text) {
  auto toks = split_ws(text);
  if (toks.empty() || (toks[0] != "unk" && toks[0] != "nounk"))
    throw std::runtime_error("malformed vocabulary record");
  Vocab v(toks[0] == "unk");
  for (std::size_t i = 1; i < toks.size(); ++i) v.add(toks[i]);
  return v;
}

Eigen::MatrixXd load_embeddings(const std::string& path, const Vocab& words, Eigen::Index dim) {
  std::istringstream in(read_file(path));
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(words.size()), dim);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(strip_cr(line));
    if (toks.empty()) continue;
    if (lineno == 1 && toks.size() == 2 &&
        std::all_of(toks[1].begin(), toks[1].end(), [](unsigned char c) { return std::isdigit(c); })) {
      if (std::stol(toks[1]) != dim)
        throw CorpusError(CorpusError::Code::Config, path + ": embeddings have dimension " +
                                                         toks[1] + ", config expects " +
                                                         std::to_string(dim));
      continue;
    }
    if (static_cast<Eigen::Index>(toks.size()) - 1 != dim)
      throw CorpusError(CorpusError::Code::Config,
                        path + ":" + std::to_string(lineno) + ": vector has dimension " +
                            std::to_string(toks.size() - 1) + ", config expects " +
                            std::to_string(dim));
    auto id = words.find(toks[0]);
    if (!id) continue;
    for (Eigen::Index j = 0; j < dim; ++j) {
      try {
        table(*id, j) = std::stod(toks[static_cast<std::size_t>(j) + 1]);
      } catch (const std::exception&) {
        parse_error(path, lineno, "bad number " + toks[static_cast<std::size_t>(j) + 1]);
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

struct LabelSpec {
  const char* name;
  const char* sorts;  // argument sorts, one letter each
};

// DRU relations; `relations` in the spec takes a prefix of this list, and
// extra labels are made up beyond it.
constexpr LabelSpec kInventory[] = {
    {"letter", "x"}, {"warn", "e"},    {"woman", "x"},     {"Agent", "ex"},  {"Theme", "ex"},
    {"sign", "e"},   {"man", "x"},     {"Patient", "ex"},  {"time", "t"},    {"Time", "et"},
    {"wife", "x"},   {"of", "xx"},     {"suffer", "e"},    {"rabbi", "x"},   {"date", "e"},
    {"Jewish", "s"}, {"Attribute", "xs"}, {"urge", "e"},   {"avoid", "e"},   {"Experiencer", "sx"},
    {"Arab", "s"},   {"in", "ex"},     {"country", "x"},   {"say", "e"},
};
constexpr LabelSpec kThat{"That", "xp"};
constexpr LabelSpec kName{"Name", "xc"};
constexpr const char* kSegmentRelations[] = {"continuation", "elaboration", "contrast"};
constexpr const char* kConstants[] = {"john", "mary", "israel", "london", "paris"};

class TreeGenerator {
 public:
  TreeGenerator(std::uint64_t seed, const SyntheticSpec& spec) : rng_(seed), spec_(spec) {
    const int n = std::max(1, spec.relations);
    const int known = static_cast<int>(std::size(kInventory));
    for (int i = 0; i < n; ++i) {
      if (i < known) {
        labels_.push_back({kInventory[i].name, kInventory[i].sorts});
      } else {
        labels_.push_back({"rel" + std::to_string(i), i % 3 == 0 ? "ex" : "x"});
      }
    }
  }

  DrtsTree tree() {
    counters_.clear();
    referents_.clear();
    const bool sdrs = spec_.max_depth >= 3 && coin(0.5);
    return DrtsTree{box(sdrs ? NodeKind::Sdrs : NodeKind::Drs, spec_.max_depth)};
  }

  nn::Rng& rng() { return rng_; }

 private:
  struct Label {
    std::string name;
    std::string sorts;
  };

  bool coin(double p) { return rng_.uniform() < p; }
  int between(int lo, int hi) { return lo + static_cast<int>(rng_.index(static_cast<std::size_t>(hi - lo + 1))); }

  VariableId fresh(Sort sort) {
    VariableId v = VariableId::make(sort, ++counters_[static_cast<char>(sort)]);
    referents_[static_cast<char>(sort)].push_back(v);
    return v;
  }

  VariableId referent(Sort sort) {
    auto& known = referents_[static_cast<char>(sort)];
    if (!known.empty() && coin(0.5)) return known[rng_.index(known.size())];
    return fresh(sort);
  }

  RelationTuple tuple(const Label& label) {
    RelationTuple t{label.name, {}};
    for (char s : label.sorts) {
      if (s == 'c')
        t.args.push_back(VariableId::make_constant(kConstants[rng_.index(std::size(kConstants))]));
      else
        t.args.push_back(referent(*sort_from_char(s)));
    }
    return t;
  }

  Dru dru() {
    Dru d;
    if (coin(0.1)) return d;
    const int n = between(1, std::max(1, spec_.max_tuples));
    for (int i = 0; i < n; ++i) d.insert(tuple(labels_[rng_.index(labels_.size())]));
    if (coin(spec_.constant_rate)) d.insert(tuple({kName.name, kName.sorts}));
    return d;
  }

  SkeletonNode box(NodeKind kind, int depth) {
    if (kind == NodeKind::Sdrs) {
      SkeletonNode node = SkeletonNode::box(NodeKind::Sdrs);
      const int segments = between(1, std::max(1, spec_.max_segments));
      std::vector<VariableId> ks;
      for (int i = 0; i < segments; ++i) {
        VariableId k = fresh(Sort::Segment);
        ks.push_back(k);
        const bool nested = depth - 2 >= 3 && coin(0.2);
        node.children.push_back(
            SkeletonNode::var(k, box(nested ? NodeKind::Sdrs : NodeKind::Drs, depth - 2)));
      }
      Dru d;
      for (std::size_t i = 0; i + 1 < ks.size(); ++i)
        if (coin(0.7))
          d.insert({kSegmentRelations[rng_.index(std::size(kSegmentRelations))], {ks[i], ks[i + 1]}});
      node.dru = std::move(d);
      return node;
    }

    SkeletonNode node = SkeletonNode::box(NodeKind::Drs, dru());
    if (depth >= 3) {
      if (coin(0.35)) {
        auto r = kAllDiscourseRelations[rng_.index(std::size(kAllDiscourseRelations))];
        std::vector<SkeletonNode> scope;
        for (int i = 0; i < relation_arity(r); ++i) scope.push_back(box(NodeKind::Drs, depth - 2));
        node.children.push_back(SkeletonNode::rel(r, std::move(scope)));
      }
      if (coin(0.25)) {
        VariableId p = fresh(Sort::Proposition);
        node.children.push_back(SkeletonNode::var(p, box(NodeKind::Drs, depth - 2)));
        node.dru->insert({kThat.name, {referent(Sort::Entity), p}});
      }
    }
    return node;
  }

  nn::Rng rng_;
  SyntheticSpec spec_;
  std::vector<Label> labels_;
  std::map<char, int> counters_;
  std::map<char, std::vector<VariableId>> referents_;
};

std::string word_for(const VariableId& v) {
  return v.sort == Sort::Constant ? v.constant : v.str();
}

std::string lemma_for(const std::string& word) {
  std::string out = word;
  while (out.size() > 1 && std::isdigit(static_cast<unsigned char>(out.back()))) out.pop_back();
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::pair<const char*, const char*> relation_cues(DiscourseRelation r) {
  switch (r) {
    case DiscourseRelation::Imp: return {"if", "then"};
    case DiscourseRelation::Or: return {"either", "or"};
    case DiscourseRelation::Dup: return {"dup", "dup2"};
    case DiscourseRelation::Pos: return {"maybe", ""};
    case DiscourseRelation::Nec: return {"must", ""};
    case DiscourseRelation::Not: return {"not", ""};
  }
  return {"", ""};
}

// One sentence per box: pending cue words, the box word (the syntactic root),
// then every tuple as its relation word followed by its argument words.
void render(const SkeletonNode& node, std::vector<std::string> cues, Document& doc) {
  std::vector<std::string> words = cues;
  std::vector<int> heads;
  std::vector<std::string> labels;
  const int root = static_cast<int>(cues.size()) + 1;
  for (std::size_t i = 0; i < cues.size(); ++i) {
    heads.push_back(root);
    labels.push_back("cue");
  }
  words.push_back(node.kind == NodeKind::Sdrs ? "sdrs" : "drs");
  heads.push_back(0);
  labels.push_back("root");
  if (node.dru) {
    for (const auto& t : node.dru->tuples()) {
      words.push_back(t.relation);
      heads.push_back(root);
      labels.push_back("pred");
      const int pred = static_cast<int>(words.size());
      for (const auto& a : t.args) {
        words.push_back(word_for(a));
        heads.push_back(pred);
        labels.push_back("arg");
      }
    }
  }
  std::vector<std::string> lemmas;
  for (const auto& w : words) lemmas.push_back(lemma_for(w));
  doc.sentences.push_back(std::move(words));
  doc.lemmas.push_back(std::move(lemmas));
  doc.deps.push_back({std::move(heads), std::move(labels)});

  for (const auto& child : node.children) {
    if (child.kind == NodeKind::Variable) {
      render(child.children[0], {child.variable.str()}, doc);
    } else if (child.kind == NodeKind::Relation) {
      auto [first, second] = relation_cues(child.relation);
      for (std::size_t i = 0; i < child.children.size(); ++i)
        render(child.children[i], {i == 0 ? first : second}, doc);
    }
  }
}

}  // namespace

DrtsTree random_tree(std::uint64_t seed, const SyntheticSpec& spec) {
  return TreeGenerator(seed, spec).tree();
}

std::vector<Document> gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec) {
  if (spec.documents < 1 || spec.max_depth < 1 || spec.relations < 1 || spec.max_tuples < 1 ||
      spec.max_segments < 1)
    throw CorpusError(CorpusError::Code::Config, "synthetic corpus bounds must be positive");
  TreeGenerator gen(seed, spec);
  std::vector<Document> docs;
  for (int i = 0; i < spec.documents; ++i) {
    Document doc;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%04d", i);
    doc.id = id;
    doc.gold = gen.tree();
    render(doc.gold->root, {}, doc);
    doc.validate();
    docs.push_back(std::move(doc));
  }
  return docs;
}

int tree_depth(const DrtsTree& tree) {
  std::function<int(const SkeletonNode&)> depth = [&](const SkeletonNode& n) {
    int best = 0;
    for (const auto& c : n.children) best = std::max(best, depth(c));
    return best + 1;
  };
  return depth(tree.root);
}

}  // namespace drts
