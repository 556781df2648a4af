#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "drts/autodiff.hpp"
#include "drts/graphs.hpp"

namespace drts::nn {

/// y = W x + b, applied column-wise when x has several columns.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
         bool bias = true);

  Expr operator()(Tape& tape, const Expr& x) const;
  Index in() const { return weight_->value.cols(); }
  Index out() const { return weight_->value.rows(); }
  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

enum class Activation { Relu, Identity };

/// Single hidden layer: act(W x + b), one position at a time.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
      Activation act = Activation::Relu);

  Expr operator()(Tape& tape, const Expr& x) const;
  std::vector<Expr> operator()(Tape& tape, const std::vector<Expr>& xs) const;
  Linear& layer() { return layer_; }

 private:
  Linear layer_;
  Activation act_ = Activation::Relu;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, Index vocab, Index dim, Rng& rng,
            bool trainable = true);

  Expr operator()(Tape& tape, Index id) const { return tape.row(*table_, id); }
  Index dim() const { return table_->value.cols(); }
  Index vocab() const { return table_->value.rows(); }
  Parameter& table() const { return *table_; }

 private:
  Parameter* table_ = nullptr;
};

/// Word representation: trainable word table, frozen pretrained table and
/// trainable lemma table, concatenated.
class WordEmbedder {
 public:
  WordEmbedder() = default;
  WordEmbedder(ParameterStore& store, const std::string& name, Index words, Index lemmas,
               Index rand_dim, Index pret_dim, Index lemma_dim, Rng& rng);

  Expr operator()(Tape& tape, Index word, Index lemma) const;
  Index dim() const { return random_.dim() + pretrained_.dim() + lemma_.dim(); }
  Parameter& pretrained() const { return pretrained_.table(); }

 private:
  Embedding random_, pretrained_, lemma_;
};

struct LstmState {
  Expr h;
  Expr c;
};

/// Standard LSTM cell with input, forget, output and candidate gates computed
/// from one affine map over [x; h].
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, Index in, Index hidden, Rng& rng);

  LstmState step(Tape& tape, const LstmState& prev, const Expr& x) const;
  LstmState zero_state(Tape& tape) const;
  Index hidden() const { return hidden_; }
  Index in() const { return in_; }
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  Index in_ = 0;
  Index hidden_ = 0;
};

/// Stacked bidirectional LSTM; each output is [forward; backward].
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(ParameterStore& store, const std::string& name, Index in, Index hidden, int layers,
         Rng& rng);

  std::vector<Expr> operator()(Tape& tape, const std::vector<Expr>& xs) const;
  Index out() const { return 2 * hidden_; }

 private:
  std::vector<LstmCell> forward_, backward_;
  Index hidden_ = 0;
};

/// Additive attention: score_j = v . tanh(Wq q + Wk k_j + b).
class AdditiveAttention {
 public:
  struct Memory {
    Expr keys;       // d x n
    Expr projected;  // a x n
  };
  struct Result {
    Expr context;  // d x 1
    Expr weights;  // 1 x n
  };

  AdditiveAttention() = default;
  AdditiveAttention(ParameterStore& store, const std::string& name, Index query_dim,
                    Index key_dim, Index attn_dim, Rng& rng);

  Memory prepare(Tape& tape, const Expr& keys) const;
  Result attend(Tape& tape, const Memory& memory, const Expr& query) const;

 private:
  Linear query_, key_;
  Parameter* score_ = nullptr;  // 1 x a
};

/// Softmax-normalised attention from raw scores; context = keys * weights^T.
AdditiveAttention::Result attention_from_scores(Tape& tape, const Expr& keys, const Expr& scores);

/// Attention distributions recorded during a forward pass, for inspection.
struct GatTrace {
  std::vector<Matrix> alphas;  // one n x n matrix per (layer, head)
};

inline constexpr double kLeakySlope = 0.2;

/// Multi-head graph attention layer. Each head k has its own input map W_k
/// and scoring vector f_k = [left; right]; outputs are sigmoid-activated and
/// concatenated across heads.
class GatLayer {
 public:
  GatLayer() = default;
  GatLayer(ParameterStore& store, const std::string& name, Index in, int heads, Index head_dim,
           Rng& rng);

  /// `nodes` is in x n, one column per graph node.
  Expr operator()(Tape& tape, const Expr& nodes, const Graph& graph,
                  GatTrace* trace = nullptr) const;

  int heads() const { return static_cast<int>(maps_.size()); }
  Index head_dim() const { return head_dim_; }
  Index out() const { return head_dim_ * heads(); }
  Parameter& map(int k) const { return *maps_[static_cast<std::size_t>(k)]; }
  Parameter& left(int k) const { return *left_[static_cast<std::size_t>(k)]; }
  Parameter& right(int k) const { return *right_[static_cast<std::size_t>(k)]; }

 private:
  std::vector<Parameter*> maps_, left_, right_;
  Index head_dim_ = 0;
};

class GatStack {
 public:
  GatStack() = default;
  GatStack(ParameterStore& store, const std::string& name, Index in, int layers, int heads,
           Index out, Rng& rng);

  Expr operator()(Tape& tape, const Expr& nodes, const Graph& graph,
                  GatTrace* trace = nullptr) const;
  const std::vector<GatLayer>& layers() const { return layers_; }
  Index out() const { return layers_.back().out(); }

 private:
  std::vector<GatLayer> layers_;
};

/// Mean of -log p(gold) over all positions.
Expr cross_entropy(Tape& tape, const std::vector<Expr>& logits, const std::vector<Index>& gold);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Clips the global gradient norm, updates every trainable parameter and
  /// zeroes all gradients. Returns the pre-clip norm.
  double step(ParameterStore& store);
  const AdamOptions& options() const { return options_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  AdamOptions options_;
  std::map<std::string, Moments> moments_;
  long steps_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

/// Named, shaped arrays plus string metadata, stored as text with
/// round-trip exact doubles.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  struct Entry {
    std::string name;
    Matrix value;
    bool trainable = true;
  };
  std::vector<Entry> params;

  static Checkpoint from_store(const ParameterStore& store);
  /// Copies values into an existing store; shapes and names must match.
  void restore(ParameterStore& store) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
  std::string serialize() const;
  static Checkpoint deserialize(const std::string& text);
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // parameter[row,col] with the largest error
};

/// Denominator floor of the relative error: gradients smaller than this are
/// judged on absolute difference.
inline constexpr double kGradCheckFloor = 1e-5;

/// Compares reverse-mode gradients of `loss` with central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every trainable coordinate, or a seeded
/// random sample of `max_coordinates` when there are more (0: no limit).
GradCheckResult grad_check(ParameterStore& store, const std::function<Expr(Tape&)>& loss,
                           double epsilon = 1e-5, std::size_t max_coordinates = 10000,
                           std::uint64_t seed = 7);

}  // namespace drts::nn
