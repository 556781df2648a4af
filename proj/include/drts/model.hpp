#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drts/core.hpp"
#include "drts/data.hpp"
#include "drts/graphs.hpp"
#include "drts/layers.hpp"

namespace drts {

enum class Mode { Baseline, GatEncoder, GatDecoder, GatBoth };

std::string mode_name(Mode m);  // baseline, gat-enc, gat-dec, gat-enc-dec
Mode mode_from_name(const std::string& name);
inline bool uses_encoder_gat(Mode m) { return m == Mode::GatEncoder || m == Mode::GatBoth; }
inline bool uses_decoder_gat(Mode m) { return m == Mode::GatDecoder || m == Mode::GatBoth; }

struct ModelConfig {
  Mode mode = Mode::GatBoth;

  int word_dim = 300;
  int pretrained_dim = 100;
  int lemma_dim = 100;
  int mlp_dim = 300;  // BiLSTM input width
  int encoder_hidden = 300;
  int encoder_layers = 2;
  int decoder_hidden = 600;
  int decoder_layers = 1;
  int encoder_gat_hidden = 300;
  int decoder_gat_hidden = 600;
  int gat_layers = 2;
  int gat_heads = 4;
  int syntax_label_dim = 100;
  int skeleton_label_dim = 100;
  int symbol_dim = 100;     // decoder input embeddings
  int attention_dim = 300;
  int max_var_index = 64;   // variable symbols x0 .. x63 per sort
  int max_relations_per_dru = 64;

  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  double dropout = 0.0;
  int epochs = 30;
  std::uint64_t seed = 1;
  bool shuffle = true;
  std::string pretrained_path;

  /// Flat `key = value` text, `#` comments. Unknown keys are errors.
  static ModelConfig parse(const std::string& text);
  static ModelConfig load(const std::string& path);
  std::string serialize() const;  // single line, `;`-separated
  static ModelConfig deserialize(const std::string& line);
  /// Applies DRTS_SEED from the environment when set.
  void apply_environment();
  void check() const;
};

/// The small configuration the tests, grad-check and acceptance runs use.
ModelConfig desk_config(Mode mode);

struct Vocabularies {
  Vocab words{true};
  Vocab lemmas{true};
  Vocab syntax_labels{true};
  Vocab skeleton;  // output symbols; ")" is id 0
  Vocab dru;       // output symbols; "|" is id 0
  std::size_t max_skeleton_length = 0;
  std::size_t max_dru_length = 0;

  /// Builds every table from a training corpus (min frequency 1). Throws
  /// VocabularyMiss for gold symbols the output space cannot express.
  static Vocabularies build(const std::vector<Document>& corpus, const ModelConfig& config);
};

class VocabularyMiss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelError : public std::runtime_error {
 public:
  enum class Code { EmptyInput, MaxLengthExceeded, Config };
  ModelError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Attention distributions observed during one forward pass.
struct ForwardTrace {
  std::vector<nn::Matrix> decoder_attention;  // each 1 x n
  nn::GatTrace encoder_gat;
  nn::GatTrace skeleton_gat;
};

struct EncoderOutput {
  nn::Expr states;  // H^enc, width x n
  nn::Expr memory;  // what the decoders attend to: H^g-enc or H^enc
  std::vector<std::string> words;
};

struct SkeletonDecoding {
  SymbolSequence symbols;
  std::vector<nn::Expr> states;  // H^skt, one per symbol
  std::vector<nn::Expr> logits;
  nn::LstmState final_state;
  bool hit_length_limit = false;
};

struct DruDecoding {
  SymbolSequence symbols;
  std::vector<nn::Expr> states;  // H^dru
  std::vector<nn::Expr> logits;
  bool hit_length_limit = false;
};

struct ParseResult {
  DrtsTree tree;
  SymbolSequence skeleton;
  SymbolSequence drus;
  bool hit_length_limit = false;
};

/// Two-stage encoder-decoder with optional graph attention over input syntax
/// and over the decoded skeleton.
class Parser {
 public:
  Parser(ModelConfig config, Vocabularies vocab);

  const ModelConfig& config() const { return config_; }
  const Vocabularies& vocab() const { return vocab_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }

  EncoderOutput encode_document(nn::Tape& tape, const Document& doc, ForwardTrace* trace = nullptr,
                                nn::Rng* dropout_rng = nullptr) const;
  SkeletonDecoding decode_skeleton(nn::Tape& tape, const EncoderOutput& enc,
                                   const SymbolSequence* gold, ForwardTrace* trace = nullptr) const;
  /// H^g-skt: GAT outputs at open-symbol steps, decoder states elsewhere.
  /// Without the decoder GAT this is H^skt unchanged.
  std::vector<nn::Expr> encode_skeleton(nn::Tape& tape, const SkeletonDecoding& skel,
                                        ForwardTrace* trace = nullptr) const;
  DruDecoding decode_drus(nn::Tape& tape, const EncoderOutput& enc, const SkeletonDecoding& skel,
                          const std::vector<nn::Expr>& skeleton_memory, const SymbolSequence* gold,
                          ForwardTrace* trace = nullptr) const;

  /// Teacher-forced mean cross-entropy over all skeleton and DRU symbols.
  nn::Expr loss(nn::Tape& tape, const Document& doc, ForwardTrace* trace = nullptr,
                nn::Rng* dropout_rng = nullptr) const;
  std::size_t gold_length(const Document& doc) const;

  ParseResult parse(const Document& doc, ForwardTrace* trace = nullptr) const;

  void save(const std::string& path) const;
  static std::unique_ptr<Parser> load(const std::string& path);

  void load_pretrained(const nn::Matrix& table);

 private:
  void build();
  int word_id(const std::string& w) const { return vocab_.words.id(w); }
  Graph syntax_graph(const Document& doc) const;

  ModelConfig config_;
  Vocabularies vocab_;
  nn::ParameterStore params_;

  nn::WordEmbedder embed_;
  nn::Mlp mlp_;
  nn::BiLstm encoder_;
  nn::Embedding syntax_labels_;
  nn::GatStack encoder_gat_;

  nn::Linear init_;
  nn::Embedding skeleton_in_;
  nn::LstmCell skeleton_cell_;
  nn::AdditiveAttention skeleton_attn_;
  nn::Linear skeleton_combine_, skeleton_out_;

  nn::Embedding skeleton_labels_;
  nn::GatStack skeleton_gat_;

  nn::Embedding dru_in_;
  nn::LstmCell dru_cell_;
  nn::AdditiveAttention dru_enc_attn_, dru_skel_attn_;
  nn::Linear dru_combine_, dru_out_;
};

/// Legal-next-symbol tracking for skeleton decoding; every completed
/// sequence parses into a tree that passes validate_tree.
class SkeletonGrammar {
 public:
  explicit SkeletonGrammar(std::size_t max_length) : max_length_(max_length) {}

  bool allowed(const Symbol& next) const;
  /// Legal ignoring the length budget.
  bool grammatical(const Symbol& next) const;
  void push(const Symbol& next);
  bool complete() const { return started_ && stack_.empty(); }
  std::size_t length() const { return length_; }
  /// Fewest symbols that close every open node.
  std::size_t min_completion() const;

 private:
  struct Frame {
    NodeKind kind;
    int arity = 0;  // relation nodes
    int children = 0;
  };
  static std::size_t frame_cost(const Frame& f);

  std::vector<Frame> stack_;
  std::size_t max_length_;
  std::size_t length_ = 0;
  bool started_ = false;
};

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;  // mean per-document loss
  std::optional<double> tuple_f1;
  std::optional<double> skeleton_f1;
};

struct TrainSchedule {
  int epochs = 30;
  int eval_every = 0;  // evaluate on the training set every N epochs (0: never)
  std::optional<double> stop_at_f1;  // stop once tuple and skeleton F1 reach it
  std::string checkpoint_dir;        // checkpoint written after every epoch
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<Parser> model;
  std::vector<EpochLog> log;
  double initial_loss = 0.0;
};

TrainResult train(const std::vector<Document>& corpus, const ModelConfig& config,
                  const TrainSchedule& schedule);

/// Trains an existing model in place.
std::vector<EpochLog> train_model(Parser& model, const std::vector<Document>& corpus,
                                  const TrainSchedule& schedule);

double mean_loss(const Parser& model, const std::vector<Document>& corpus);

}  // namespace drts
