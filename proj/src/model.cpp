#include "drts/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "drts/metrics.hpp"

namespace drts {

using nn::Expr;
using nn::Index;
using nn::Matrix;
using nn::Tape;

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::GatEncoder: return "gat-enc";
    case Mode::GatDecoder: return "gat-dec";
    case Mode::GatBoth: return "gat-enc-dec";
  }
  return "?";
}

Mode mode_from_name(const std::string& name) {
  for (Mode m : {Mode::Baseline, Mode::GatEncoder, Mode::GatDecoder, Mode::GatBoth})
    if (mode_name(m) == name) return m;
  throw ModelError(ModelError::Code::Config, "unknown mode: " + name);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Visitor>
void visit_fields(ModelConfig& c, Visitor&& v) {
  v("word_dim", c.word_dim);
  v("pretrained_dim", c.pretrained_dim);
  v("lemma_dim", c.lemma_dim);
  v("mlp_dim", c.mlp_dim);
  v("encoder_hidden", c.encoder_hidden);
  v("encoder_layers", c.encoder_layers);
  v("decoder_hidden", c.decoder_hidden);
  v("decoder_layers", c.decoder_layers);
  v("encoder_gat_hidden", c.encoder_gat_hidden);
  v("decoder_gat_hidden", c.decoder_gat_hidden);
  v("gat_layers", c.gat_layers);
  v("gat_heads", c.gat_heads);
  v("syntax_label_dim", c.syntax_label_dim);
  v("skeleton_label_dim", c.skeleton_label_dim);
  v("symbol_dim", c.symbol_dim);
  v("attention_dim", c.attention_dim);
  v("max_var_index", c.max_var_index);
  v("max_relations_per_dru", c.max_relations_per_dru);
  v("learning_rate", c.learning_rate);
  v("clip_norm", c.clip_norm);
  v("dropout", c.dropout);
  v("epochs", c.epochs);
  v("seed", c.seed);
  v("shuffle", c.shuffle);
  v("pretrained_path", c.pretrained_path);
}

struct Setter {
  const std::string& key;
  const std::string& value;
  bool found = false;

  template <typename T>
  void operator()(const char* name, T& field) {
    if (key != name) return;
    found = true;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        field = value;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (value == "true" || value == "1")
          field = true;
        else if (value == "false" || value == "0")
          field = false;
        else
          throw std::invalid_argument(value);
      } else if constexpr (std::is_same_v<T, double>) {
        std::size_t used = 0;
        field = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        std::size_t used = 0;
        field = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } else {
        std::size_t used = 0;
        field = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      }
    } catch (const std::exception&) {
      throw ModelError(ModelError::Code::Config, "bad value for " + key + ": " + value);
    }
  }
};

void set_field(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "mode") {
    c.mode = mode_from_name(value);
    return;
  }
  Setter s{key, value};
  visit_fields(c, s);
  if (!s.found) throw ModelError(ModelError::Code::Config, "unknown config key: " + key);
}

}  // namespace

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ModelError(ModelError::Code::Config,
                       "config line " + std::to_string(lineno) + ": expected key = value");
    set_field(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.check();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError(ModelError::Code::Config, "cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ModelConfig::serialize() const {
  std::ostringstream out;
  out.precision(17);
  out << "mode=" << mode_name(mode);
  ModelConfig copy = *this;
  visit_fields(copy, [&](const char* name, const auto& field) {
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::string>) {
      if (field.find(';') != std::string::npos)
        throw ModelError(ModelError::Code::Config, std::string(name) + " may not contain ';'");
    }
    out << ";" << name << "=" << field;
  });
  return out.str();
}

ModelConfig ModelConfig::deserialize(const std::string& line) {
  std::string text = line;
  std::replace(text.begin(), text.end(), ';', '\n');
  return parse(text);
}

void ModelConfig::apply_environment() {
  if (const char* s = std::getenv("DRTS_SEED"); s && *s) set_field(*this, "seed", s);
}

void ModelConfig::check() const {
  auto positive = [](const char* name, int v) {
    if (v <= 0) throw ModelError(ModelError::Code::Config, std::string(name) + " must be positive");
  };
  positive("word_dim", word_dim);
  positive("pretrained_dim", pretrained_dim);
  positive("lemma_dim", lemma_dim);
  positive("mlp_dim", mlp_dim);
  positive("encoder_hidden", encoder_hidden);
  positive("encoder_layers", encoder_layers);
  positive("decoder_hidden", decoder_hidden);
  positive("encoder_gat_hidden", encoder_gat_hidden);
  positive("decoder_gat_hidden", decoder_gat_hidden);
  positive("gat_layers", gat_layers);
  positive("gat_heads", gat_heads);
  positive("syntax_label_dim", syntax_label_dim);
  positive("skeleton_label_dim", skeleton_label_dim);
  positive("symbol_dim", symbol_dim);
  positive("attention_dim", attention_dim);
  positive("max_var_index", max_var_index);
  positive("max_relations_per_dru", max_relations_per_dru);
  if (decoder_layers != 1)
    throw ModelError(ModelError::Code::Config, "only a single-layer decoder LSTM is supported");
  if (encoder_gat_hidden % gat_heads || decoder_gat_hidden % gat_heads)
    throw ModelError(ModelError::Code::Config, "GAT hidden sizes must be divisible by gat_heads");
  if (decoder_gat_hidden != decoder_hidden)
    throw ModelError(ModelError::Code::Config,
                     "decoder_gat_hidden must equal decoder_hidden: skeleton GAT outputs replace "
                     "decoder states in place");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ModelError(ModelError::Code::Config, "dropout must be in [0, 1)");
  if (learning_rate < 0.0) throw ModelError(ModelError::Code::Config, "negative learning rate");
}

ModelConfig desk_config(Mode mode) {
  ModelConfig c;
  c.mode = mode;
  c.word_dim = 32;
  c.pretrained_dim = 8;
  c.lemma_dim = 16;
  c.mlp_dim = 32;
  c.encoder_hidden = 32;
  c.encoder_layers = 2;
  c.decoder_hidden = 64;
  c.encoder_gat_hidden = 32;
  c.decoder_gat_hidden = 64;
  c.gat_layers = 1;
  c.gat_heads = 4;
  c.syntax_label_dim = 8;
  c.skeleton_label_dim = 16;
  c.symbol_dim = 32;
  c.attention_dim = 32;
  c.max_var_index = 32;
  c.learning_rate = 3e-3;
  return c;
}

// ---------------------------------------------------------------------------
// Vocabularies

namespace {

constexpr Sort kIndexedSorts[] = {Sort::Entity, Sort::Event,       Sort::State,
                                  Sort::Time,   Sort::Proposition, Sort::Segment};

std::size_t percentile99(std::vector<std::size_t> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

Vocabularies Vocabularies::build(const std::vector<Document>& corpus, const ModelConfig& config) {
  Vocabularies v;
  v.words.add(kSentenceStart);
  v.words.add(kSentenceEnd);
  v.lemmas.add(kSentenceStart);
  v.lemmas.add(kSentenceEnd);
  v.syntax_labels.add(kMarkerLabel);

  v.skeleton.add(Symbol::close().str());
  v.skeleton.add("SDRS(");
  v.skeleton.add("DRS(");
  for (auto r : kAllDiscourseRelations) v.skeleton.add(std::string(relation_name(r)) + "(");
  for (Sort s : {Sort::Proposition, Sort::Segment})
    for (int i = 0; i < config.max_var_index; ++i)
      v.skeleton.add(VariableId::make(s, i).str() + "(");

  std::set<std::string> relations, constants;
  std::vector<std::size_t> skeleton_lengths, dru_lengths;
  std::vector<std::pair<SymbolSequence, SymbolSequence>> gold;
  for (const auto& doc : corpus) {
    for (const auto& s : doc.sentences)
      for (const auto& w : s) v.words.add(w);
    for (const auto& s : doc.lemmas)
      for (const auto& l : s) v.lemmas.add(l);
    for (const auto& d : doc.deps)
      for (const auto& l : d.labels) v.syntax_labels.add(l);
    if (!doc.gold) continue;
    auto skel = linearize_skeleton(*doc.gold);
    auto drus = linearize_drus(*doc.gold);
    for (const auto& sym : drus) {
      if (sym.kind == SymbolKind::Relation) relations.insert(sym.str());
      if (sym.kind == SymbolKind::Variable && sym.variable.sort == Sort::Constant)
        constants.insert(sym.str());
    }
    skeleton_lengths.push_back(skel.size());
    dru_lengths.push_back(drus.size());
    gold.emplace_back(std::move(skel), std::move(drus));
  }

  v.dru.add(Symbol::sep().str());
  for (const auto& r : relations) v.dru.add(r);
  for (Sort s : kIndexedSorts)
    for (int i = 0; i < config.max_var_index; ++i) v.dru.add(VariableId::make(s, i).str());
  for (const auto& c : constants) v.dru.add(c);

  for (const auto& [skel, drus] : gold) {
    for (const auto& sym : skel)
      if (!v.skeleton.find(sym.str()))
        throw VocabularyMiss("skeleton symbol outside the output vocabulary: " + sym.str());
    for (const auto& sym : drus)
      if (!v.dru.find(sym.str()))
        throw VocabularyMiss("DRU symbol outside the output vocabulary: " + sym.str());
  }

  v.max_skeleton_length = std::max<std::size_t>(4 * percentile99(skeleton_lengths), 8);
  v.max_dru_length = std::max<std::size_t>(12 * percentile99(dru_lengths), 8);
  return v;
}

// ---------------------------------------------------------------------------
// Skeleton grammar

namespace {

struct LabelInfo {
  NodeKind kind;
  int arity = 0;
};

std::optional<LabelInfo> classify(const std::string& label) {
  if (label == "SDRS") return LabelInfo{NodeKind::Sdrs};
  if (label == "DRS") return LabelInfo{NodeKind::Drs};
  if (auto r = relation_from_name(label)) return LabelInfo{NodeKind::Relation, relation_arity(*r)};
  if (auto v = VariableId::parse(label);
      v && (v->sort == Sort::Proposition || v->sort == Sort::Segment))
    return LabelInfo{NodeKind::Variable};
  return std::nullopt;
}

}  // namespace

std::size_t SkeletonGrammar::frame_cost(const Frame& f) {
  switch (f.kind) {
    case NodeKind::Drs: return 1;
    case NodeKind::Sdrs: return f.children == 0 ? 5 : 1;  // k( DRS( ) ) )
    case NodeKind::Relation: return static_cast<std::size_t>(2 * (f.arity - f.children) + 1);
    case NodeKind::Variable: return f.children == 0 ? 3 : 1;
  }
  return 1;
}

std::size_t SkeletonGrammar::min_completion() const {
  std::size_t cost = 0;
  for (const auto& f : stack_) cost += frame_cost(f);
  return cost;
}

bool SkeletonGrammar::grammatical(const Symbol& next) const {
  if (complete()) return false;
  if (next.kind != SymbolKind::Open && next.kind != SymbolKind::Close) return false;
  if (!started_) {
    return next.kind == SymbolKind::Open && (next.label == "SDRS" || next.label == "DRS");
  }
  const Frame& top = stack_.back();
  if (next.kind == SymbolKind::Close) {
    switch (top.kind) {
      case NodeKind::Sdrs: return top.children > 0;
      case NodeKind::Drs: return true;
      case NodeKind::Relation: return top.children == top.arity;
      case NodeKind::Variable: return top.children == 1;
    }
  }
  auto info = classify(next.label);
  if (!info) return false;
  const bool child_is_box = info->kind == NodeKind::Sdrs || info->kind == NodeKind::Drs;
  switch (top.kind) {
    case NodeKind::Sdrs:
    case NodeKind::Drs: return !child_is_box;
    case NodeKind::Relation: return child_is_box && top.children < top.arity;
    case NodeKind::Variable: return child_is_box && top.children == 0;
  }
  return false;
}

bool SkeletonGrammar::allowed(const Symbol& next) const {
  if (!grammatical(next)) return false;
  std::size_t cost = 0;
  if (next.kind == SymbolKind::Close) {
    for (std::size_t i = 0; i + 1 < stack_.size(); ++i) cost += frame_cost(stack_[i]);
  } else {
    for (std::size_t i = 0; i < stack_.size(); ++i) {
      Frame f = stack_[i];
      if (i + 1 == stack_.size()) ++f.children;
      cost += frame_cost(f);
    }
    auto info = classify(next.label);
    cost += frame_cost(Frame{info->kind, info->arity, 0});
  }
  return length_ + 1 + cost <= max_length_;
}

void SkeletonGrammar::push(const Symbol& next) {
  started_ = true;
  ++length_;
  if (next.kind == SymbolKind::Close) {
    if (stack_.empty()) throw TreeError(TreeError::Code::Unbalanced, "unmatched close");
    stack_.pop_back();
    return;
  }
  auto info = classify(next.label);
  if (!info) throw TreeError(TreeError::Code::BadLabel, "unknown skeleton label " + next.label);
  if (!stack_.empty()) ++stack_.back().children;
  stack_.push_back(Frame{info->kind, info->arity, 0});
}

// ---------------------------------------------------------------------------
// Parser

Parser::Parser(ModelConfig config, Vocabularies vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.check();
  build();
}

void Parser::build() {
  nn::Rng rng(config_.seed);
  const Index words = static_cast<Index>(vocab_.words.size());
  const Index skel = static_cast<Index>(vocab_.skeleton.size());
  const Index dru = static_cast<Index>(vocab_.dru.size());
  const Index enc_width = 2 * config_.encoder_hidden;
  const Index memory =
      uses_encoder_gat(config_.mode) ? config_.encoder_gat_hidden : enc_width;
  const Index hidden = config_.decoder_hidden;

  embed_ = nn::WordEmbedder(params_, "embed", words, static_cast<Index>(vocab_.lemmas.size()),
                            config_.word_dim, config_.pretrained_dim, config_.lemma_dim, rng);
  mlp_ = nn::Mlp(params_, "mlp", embed_.dim(), config_.mlp_dim, rng);
  encoder_ = nn::BiLstm(params_, "encoder", config_.mlp_dim, config_.encoder_hidden,
                        config_.encoder_layers, rng);
  syntax_labels_ = nn::Embedding(params_, "gat_enc.labels",
                                 static_cast<Index>(vocab_.syntax_labels.size()),
                                 config_.syntax_label_dim, rng);
  encoder_gat_ = nn::GatStack(params_, "gat_enc", enc_width + config_.syntax_label_dim,
                              config_.gat_layers, config_.gat_heads, config_.encoder_gat_hidden, rng);

  init_ = nn::Linear(params_, "skeleton.init", memory, hidden, rng);
  skeleton_in_ = nn::Embedding(params_, "skeleton.input", skel + 1, config_.symbol_dim, rng);
  skeleton_cell_ = nn::LstmCell(params_, "skeleton.lstm", config_.symbol_dim, hidden, rng);
  skeleton_attn_ =
      nn::AdditiveAttention(params_, "skeleton.attn", hidden, memory, config_.attention_dim, rng);
  skeleton_combine_ = nn::Linear(params_, "skeleton.combine", hidden + memory, hidden, rng);
  skeleton_out_ = nn::Linear(params_, "skeleton.out", hidden, skel, rng);

  skeleton_labels_ = nn::Embedding(params_, "gat_dec.labels", skel, config_.skeleton_label_dim, rng);
  skeleton_gat_ = nn::GatStack(params_, "gat_dec", hidden + config_.skeleton_label_dim,
                               config_.gat_layers, config_.gat_heads, config_.decoder_gat_hidden, rng);

  dru_in_ = nn::Embedding(params_, "dru.input", dru, config_.symbol_dim, rng);
  dru_cell_ = nn::LstmCell(params_, "dru.lstm", config_.symbol_dim + hidden, hidden, rng);
  dru_enc_attn_ =
      nn::AdditiveAttention(params_, "dru.attn_enc", hidden, memory, config_.attention_dim, rng);
  dru_skel_attn_ =
      nn::AdditiveAttention(params_, "dru.attn_skel", hidden, hidden, config_.attention_dim, rng);
  dru_combine_ = nn::Linear(params_, "dru.combine", 2 * hidden + memory, hidden, rng);
  dru_out_ = nn::Linear(params_, "dru.out", hidden, dru, rng);
}

void Parser::load_pretrained(const Matrix& table) {
  auto& p = embed_.pretrained();
  if (table.rows() != p.value.rows() || table.cols() != p.value.cols())
    throw ModelError(ModelError::Code::Config, "pretrained table shape does not match the model");
  p.value = table;
}

Graph Parser::syntax_graph(const Document& doc) const {
  if (doc.deps.empty())
    throw ModelError(ModelError::Code::Config,
                     "document " + doc.id + " has no dependency trees but the encoder GAT needs them");
  return build_syntax_graph(doc.sentence_lengths(), doc.deps);
}

EncoderOutput Parser::encode_document(Tape& tape, const Document& doc, ForwardTrace* trace,
                                      nn::Rng* dropout_rng) const {
  if (doc.sentences.empty() || doc.word_count() == 0)
    throw ModelError(ModelError::Code::EmptyInput, "empty document " + doc.id);
  doc.validate();
  EncoderOutput out;
  out.words = doc.encoder_words();
  const auto lemmas = doc.encoder_lemmas();
  std::vector<Expr> xs;
  xs.reserve(out.words.size());
  for (std::size_t i = 0; i < out.words.size(); ++i) {
    Expr v = embed_(tape, word_id(out.words[i]), vocab_.lemmas.id(lemmas[i]));
    if (dropout_rng && config_.dropout > 0.0) {
      Matrix mask(v.rows(), 1);
      const double keep = 1.0 - config_.dropout;
      for (Index r = 0; r < mask.rows(); ++r)
        mask(r, 0) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      v = nn::cmul(v, tape.constant(std::move(mask)));
    }
    xs.push_back(mlp_(tape, v));
  }
  out.states = nn::concat_cols(encoder_(tape, xs));
  out.memory = out.states;
  if (uses_encoder_gat(config_.mode)) {
    const Graph graph = syntax_graph(doc);
    std::vector<Expr> labels;
    labels.reserve(graph.size());
    for (std::size_t i = 0; i < graph.size(); ++i)
      labels.push_back(syntax_labels_(tape, vocab_.syntax_labels.id(graph.label(i))));
    Expr nodes = nn::concat_rows({out.states, nn::concat_cols(labels)});
    out.memory = encoder_gat_(tape, nodes, graph, trace ? &trace->encoder_gat : nullptr);
  }
  return out;
}

namespace {

Index best_of(const Matrix& logits, const std::function<bool(Index)>& ok) {
  Index best = -1;
  for (Index i = 0; i < logits.rows(); ++i)
    if (ok(i) && (best < 0 || logits(i, 0) > logits(best, 0))) best = i;
  return best;
}

}  // namespace

SkeletonDecoding Parser::decode_skeleton(Tape& tape, const EncoderOutput& enc,
                                         const SymbolSequence* gold, ForwardTrace* trace) const {
  SkeletonDecoding out;
  const Index n = enc.memory.cols();
  Expr mean = nn::matmul(enc.memory, tape.constant(Matrix::Constant(n, 1, 1.0 / static_cast<double>(n))));
  nn::LstmState state{nn::tanh(init_(tape, mean)),
                      tape.constant(Matrix::Zero(config_.decoder_hidden, 1))};
  const auto memory = skeleton_attn_.prepare(tape, enc.memory);

  std::vector<Symbol> symbols;
  symbols.reserve(vocab_.skeleton.size());
  for (const auto& t : vocab_.skeleton.tokens()) symbols.push_back(Symbol::parse(t));

  SkeletonGrammar grammar(vocab_.max_skeleton_length);
  Index prev = static_cast<Index>(vocab_.skeleton.size());  // start-of-sequence input
  for (std::size_t step = 0;; ++step) {
    if (gold ? step == gold->size() : grammar.complete()) break;
    state = skeleton_cell_.step(tape, state, skeleton_in_(tape, prev));
    auto att = skeleton_attn_.attend(tape, memory, state.h);
    if (trace) trace->decoder_attention.push_back(att.weights.value());
    Expr logits = skeleton_out_(
        tape, nn::tanh(skeleton_combine_(tape, nn::concat_rows({state.h, att.context}))));
    Index chosen;
    if (gold) {
      auto id = vocab_.skeleton.find((*gold)[step].str());
      if (!id) throw VocabularyMiss("skeleton symbol not in vocabulary: " + (*gold)[step].str());
      chosen = *id;
    } else {
      chosen = best_of(logits.value(), [&](Index i) { return grammar.allowed(symbols[static_cast<std::size_t>(i)]); });
      if (chosen < 0)
        throw ModelError(ModelError::Code::MaxLengthExceeded, "no legal skeleton continuation");
      if (best_of(logits.value(), [&](Index i) { return grammar.grammatical(symbols[static_cast<std::size_t>(i)]); }) !=
          chosen)
        out.hit_length_limit = true;
      grammar.push(symbols[static_cast<std::size_t>(chosen)]);
    }
    out.symbols.push_back(symbols[static_cast<std::size_t>(chosen)]);
    out.states.push_back(state.h);
    out.logits.push_back(logits);
    prev = chosen;
  }
  out.final_state = state;
  return out;
}

std::vector<Expr> Parser::encode_skeleton(Tape& tape, const SkeletonDecoding& skel,
                                          ForwardTrace* trace) const {
  std::vector<Expr> states = skel.states;
  if (!uses_decoder_gat(config_.mode)) return states;
  const Graph graph = build_skeleton_graph(skel.symbols);
  const auto positions = skeleton_node_positions(skel.symbols);
  std::vector<Expr> nodes;
  nodes.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& sym = skel.symbols[positions[i]];
    nodes.push_back(nn::concat_rows(
        {states[positions[i]], skeleton_labels_(tape, vocab_.skeleton.id(sym.str()))}));
  }
  Expr out = skeleton_gat_(tape, nn::concat_cols(nodes), graph,
                           trace ? &trace->skeleton_gat : nullptr);
  for (std::size_t i = 0; i < positions.size(); ++i)
    states[positions[i]] = nn::column(out, static_cast<Index>(i));
  return states;
}

DruDecoding Parser::decode_drus(Tape& tape, const EncoderOutput& enc, const SkeletonDecoding& skel,
                                const std::vector<Expr>& skeleton_memory,
                                const SymbolSequence* gold, ForwardTrace* trace) const {
  DruDecoding out;
  std::vector<Expr> cues;
  for (std::size_t i = 0; i < skel.symbols.size(); ++i) {
    const auto& s = skel.symbols[i];
    if (s.kind == SymbolKind::Open && (s.label == "SDRS" || s.label == "DRS"))
      cues.push_back(skeleton_memory[i]);
  }
  if (cues.empty()) return out;  // unreachable for grammatical skeletons

  std::vector<SymbolSequence> gold_groups;
  if (gold) {
    gold_groups.emplace_back();
    for (const auto& s : *gold) {
      gold_groups.back().push_back(s);
      if (s.kind == SymbolKind::DruSep) gold_groups.emplace_back();
    }
    gold_groups.pop_back();
    if (gold_groups.size() != cues.size())
      throw TreeError(TreeError::Code::GroupCountMismatch,
                      "gold DRU groups do not match the skeleton's boxes");
  }

  std::vector<Symbol> symbols;
  symbols.reserve(vocab_.dru.size());
  for (const auto& t : vocab_.dru.tokens()) symbols.push_back(Symbol::parse(t));

  const auto enc_memory = dru_enc_attn_.prepare(tape, enc.memory);
  const auto skel_memory = dru_skel_attn_.prepare(tape, nn::concat_cols(skeleton_memory));
  nn::LstmState state = skel.final_state;
  const std::size_t budget = std::max(vocab_.max_dru_length, cues.size());
  std::size_t used = 0;

  for (std::size_t g = 0; g < cues.size(); ++g) {
    Index prev = 0;  // separator id doubles as the group-start input
    const std::size_t allowance = budget - used - (cues.size() - g - 1);
    int relations = 0, arity = 0, variables = 0;
    std::size_t in_group = 0;
    for (std::size_t step = 0;; ++step) {
      Expr input = nn::concat_rows({dru_in_(tape, prev), cues[g]});
      state = dru_cell_.step(tape, state, input);
      auto a_enc = dru_enc_attn_.attend(tape, enc_memory, state.h);
      auto a_skel = dru_skel_attn_.attend(tape, skel_memory, state.h);
      if (trace) {
        trace->decoder_attention.push_back(a_enc.weights.value());
        trace->decoder_attention.push_back(a_skel.weights.value());
      }
      Expr logits = dru_out_(
          tape, nn::tanh(dru_combine_(
                    tape, nn::concat_rows({state.h, a_enc.context, a_skel.context}))));
      Index chosen;
      if (gold) {
        const auto& want = gold_groups[g].at(step);
        auto id = vocab_.dru.find(want.str());
        if (!id) throw VocabularyMiss("DRU symbol not in vocabulary: " + want.str());
        chosen = *id;
      } else {
        auto grammatical = [&](Index i) {
          const auto& s = symbols[static_cast<std::size_t>(i)];
          switch (s.kind) {
            case SymbolKind::DruSep: return relations == 0 || variables == arity;
            case SymbolKind::Relation:
              return variables == 0 && relations < config_.max_relations_per_dru;
            case SymbolKind::Variable: return relations > 0 && variables < arity;
            default: return false;
          }
        };
        auto fits = [&](Index i) {
          const auto& s = symbols[static_cast<std::size_t>(i)];
          if (s.kind != SymbolKind::Relation) return true;
          // This relation, every variable still owed and the separator.
          return in_group + 1 + static_cast<std::size_t>(arity + s.arity - variables) + 1 <=
                 allowance;
        };
        chosen = best_of(logits.value(), [&](Index i) { return grammatical(i) && fits(i); });
        if (best_of(logits.value(), grammatical) != chosen) out.hit_length_limit = true;
      }
      const Symbol& sym = symbols[static_cast<std::size_t>(chosen)];
      if (sym.kind == SymbolKind::Relation) {
        ++relations;
        arity += sym.arity;
      } else if (sym.kind == SymbolKind::Variable) {
        ++variables;
      }
      out.symbols.push_back(sym);
      out.states.push_back(state.h);
      out.logits.push_back(logits);
      ++in_group;
      prev = chosen;
      if (sym.kind == SymbolKind::DruSep) break;
    }
    used += in_group;
  }
  return out;
}

std::size_t Parser::gold_length(const Document& doc) const {
  if (!doc.gold) return 0;
  return linearize_skeleton(*doc.gold).size() + linearize_drus(*doc.gold).size();
}

Expr Parser::loss(Tape& tape, const Document& doc, ForwardTrace* trace,
                  nn::Rng* dropout_rng) const {
  if (!doc.gold) throw ModelError(ModelError::Code::EmptyInput, "document " + doc.id + " has no gold tree");
  const auto gold_skel = linearize_skeleton(*doc.gold);
  const auto gold_drus = linearize_drus(*doc.gold);
  auto enc = encode_document(tape, doc, trace, dropout_rng);
  auto skel = decode_skeleton(tape, enc, &gold_skel, trace);
  auto memory = encode_skeleton(tape, skel, trace);
  auto drus = decode_drus(tape, enc, skel, memory, &gold_drus, trace);

  std::vector<Expr> logits = skel.logits;
  logits.insert(logits.end(), drus.logits.begin(), drus.logits.end());
  std::vector<Index> ids;
  ids.reserve(logits.size());
  for (const auto& s : gold_skel) ids.push_back(vocab_.skeleton.id(s.str()));
  for (const auto& s : gold_drus) ids.push_back(vocab_.dru.id(s.str()));
  return nn::cross_entropy(tape, logits, ids);
}

ParseResult Parser::parse(const Document& doc, ForwardTrace* trace) const {
  Tape tape;
  auto enc = encode_document(tape, doc, trace);
  auto skel = decode_skeleton(tape, enc, nullptr, trace);
  auto memory = encode_skeleton(tape, skel, trace);
  auto drus = decode_drus(tape, enc, skel, memory, nullptr, trace);
  ParseResult result;
  result.tree = delinearize(skel.symbols, drus.symbols);
  result.skeleton = std::move(skel.symbols);
  result.drus = std::move(drus.symbols);
  result.hit_length_limit = skel.hit_length_limit || drus.hit_length_limit;
  return result;
}

void Parser::save(const std::string& path) const {
  auto ckpt = nn::Checkpoint::from_store(params_);
  ckpt.meta["config"] = config_.serialize();
  ckpt.meta["vocab.words"] = vocab_.words.serialize();
  ckpt.meta["vocab.lemmas"] = vocab_.lemmas.serialize();
  ckpt.meta["vocab.syntax"] = vocab_.syntax_labels.serialize();
  ckpt.meta["vocab.skeleton"] = vocab_.skeleton.serialize();
  ckpt.meta["vocab.dru"] = vocab_.dru.serialize();
  ckpt.meta["max_skeleton_length"] = std::to_string(vocab_.max_skeleton_length);
  ckpt.meta["max_dru_length"] = std::to_string(vocab_.max_dru_length);
  const std::string tmp = path + ".tmp";
  ckpt.save(tmp);
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<Parser> Parser::load(const std::string& path) {
  auto ckpt = nn::Checkpoint::load(path);
  auto meta = [&](const std::string& key) -> const std::string& {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw std::runtime_error(path + ": missing checkpoint field " + key);
    return it->second;
  };
  Vocabularies vocab;
  vocab.words = Vocab::deserialize(meta("vocab.words"));
  vocab.lemmas = Vocab::deserialize(meta("vocab.lemmas"));
  vocab.syntax_labels = Vocab::deserialize(meta("vocab.syntax"));
  vocab.skeleton = Vocab::deserialize(meta("vocab.skeleton"));
  vocab.dru = Vocab::deserialize(meta("vocab.dru"));
  vocab.max_skeleton_length = std::stoul(meta("max_skeleton_length"));
  vocab.max_dru_length = std::stoul(meta("max_dru_length"));
  auto model = std::make_unique<Parser>(ModelConfig::deserialize(meta("config")), std::move(vocab));
  ckpt.restore(model->params_);
  return model;
}

// ---------------------------------------------------------------------------
// Training

double mean_loss(const Parser& model, const std::vector<Document>& corpus) {
  double total = 0.0;
  for (const auto& doc : corpus) {
    Tape tape;
    total += model.loss(tape, doc).scalar();
  }
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

std::vector<EpochLog> train_model(Parser& model, const std::vector<Document>& corpus,
                                  const TrainSchedule& schedule) {
  if (corpus.empty()) throw ModelError(ModelError::Code::EmptyInput, "empty training corpus");
  const auto& config = model.config();
  nn::Adam optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  nn::Rng order_rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  nn::Rng dropout_rng(config.seed * 0xC2B2AE3D27D4EB4FULL + 2);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (!schedule.checkpoint_dir.empty()) std::filesystem::create_directories(schedule.checkpoint_dir);
  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    if (config.shuffle)
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.index(i)]);
    double total = 0.0;
    for (std::size_t idx : order) {
      Tape tape;
      Expr loss = model.loss(tape, corpus[idx], nullptr,
                             config.dropout > 0.0 ? &dropout_rng : nullptr);
      total += loss.scalar();
      tape.backward(loss);
      optimizer.step(model.parameters());
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = total / static_cast<double>(corpus.size());
    if (schedule.eval_every > 0 && epoch % schedule.eval_every == 0) {
      MatchResult tuples;
      SkeletonScore skeleton;
      for (const auto& doc : corpus) {
        if (!doc.gold) continue;
        auto parsed = model.parse(doc);
        tuples += tuple_f1(parsed.tree, *doc.gold);
        skeleton += skeleton_f1(parsed.tree, *doc.gold);
      }
      entry.tuple_f1 = tuples.f1;
      entry.skeleton_f1 = skeleton.overall.f1;
    }
    if (!schedule.checkpoint_dir.empty())
      model.save((std::filesystem::path(schedule.checkpoint_dir) / "model.ckpt").string());
    log.push_back(entry);
    if (schedule.on_epoch) schedule.on_epoch(entry);
    if (schedule.stop_at_f1 && entry.tuple_f1 && *entry.tuple_f1 >= *schedule.stop_at_f1 &&
        *entry.skeleton_f1 >= *schedule.stop_at_f1)
      break;
  }
  return log;
}

TrainResult train(const std::vector<Document>& corpus, const ModelConfig& config,
                  const TrainSchedule& schedule) {
  if (corpus.empty()) throw ModelError(ModelError::Code::EmptyInput, "empty training corpus");
  TrainResult result;
  result.model = std::make_unique<Parser>(config, Vocabularies::build(corpus, config));
  if (!config.pretrained_path.empty())
    result.model->load_pretrained(load_embeddings(config.pretrained_path,
                                                  result.model->vocab().words,
                                                  config.pretrained_dim));
  result.initial_loss = mean_loss(*result.model, corpus);
  result.log = train_model(*result.model, corpus, schedule);
  return result;
}

}  // namespace drts
