#pragma once

// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// Every value on a tape is a matrix; vectors are column matrices and scalars
// are 1x1. A Tape lives for one forward/backward pass.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace drts {
class Graph;
}

namespace drts::nn {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded generator with a portable uniform draw, so initialisation does not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

class Parameter {
 public:
  Parameter(std::string name, Matrix value, bool trainable)
      : value(std::move(value)), grad(Matrix::Zero(this->value.rows(), this->value.cols())),
        trainable(trainable), name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  Matrix value;
  Matrix grad;
  bool trainable;

 private:
  std::string name_;
};

enum class Init { Xavier, Zeros };

/// Owns every parameter of a model under a unique name.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Index rows, Index cols, Init init, Rng& rng,
                 bool trainable = true);
  Parameter& add(const std::string& name, Matrix value, bool trainable = true);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

  void zero_grad();
  std::size_t coordinate_count(bool trainable_only = true) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Expr {
 public:
  Expr() = default;
  Expr(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Expr constant(Matrix value);
  Expr parameter(Parameter& p);
  /// Row `r` of an embedding table as a column vector; the gradient is
  /// scattered into that row only.
  Expr row(Parameter& table, Index r);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every parameter.
  void backward(const Expr& loss);

  Expr push(Matrix value, const std::vector<Expr>& inputs, Backward backward);
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

inline const Matrix& Expr::value() const { return tape_->value(id_); }

// Arithmetic
Expr matmul(const Expr& a, const Expr& b);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr cmul(const Expr& a, const Expr& b);
Expr scale(const Expr& a, double s);
/// Adds column vector `v` to every column of `m`.
Expr add_col(const Expr& m, const Expr& v);
Expr transpose(const Expr& a);
Expr sum(const std::vector<Expr>& items);

inline Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
inline Expr operator-(const Expr& a, const Expr& b) { return sub(a, b); }
inline Expr operator*(const Expr& a, const Expr& b) { return matmul(a, b); }

// Nonlinearities
Expr sigmoid(const Expr& a);
Expr tanh(const Expr& a);
Expr relu(const Expr& a);
Expr leaky_relu(const Expr& a, double slope);

// Shape
Expr concat_rows(const std::vector<Expr>& parts);
Expr concat_cols(const std::vector<Expr>& parts);
Expr slice_rows(const Expr& a, Index start, Index count);
Expr column(const Expr& a, Index j);

/// Softmax over all entries of a row or column vector.
Expr softmax(const Expr& a);
/// -log softmax(logits)[gold] for a column of logits.
Expr neg_log_softmax(const Expr& logits, Index gold);

/// Row-stochastic neighbourhood attention used by graph attention layers:
/// alpha(i, j) = softmax over j in N(i) of LeakyReLU(left(i) + right(j)),
/// zero for j outside N(i). `left` and `right` are 1 x n.
Expr neighbourhood_attention(const Expr& left, const Expr& right, const drts::Graph& graph,
                             double slope);

}  // namespace drts::nn
