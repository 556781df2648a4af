#include "drts/autodiff.hpp"

#include <cmath>
#include <limits>

#include "drts/graphs.hpp"

namespace drts::nn {

Parameter& ParameterStore::add(const std::string& name, Index rows, Index cols, Init init,
                               Rng& rng, bool trainable) {
  Matrix value = Matrix::Zero(rows, cols);
  if (init == Init::Xavier) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) value(i, j) = rng.uniform(-bound, bound);
  }
  return add(name, std::move(value), trainable);
}

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter>(name, std::move(value), trainable));
  index_[name] = params_.back().get();
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParameterStore::coordinate_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable || !trainable_only) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---------------------------------------------------------------------------

Expr Tape::push(Matrix value, const std::vector<Expr>& inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) node.requires_grad = node.requires_grad || requires_grad(in.id());
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Expr Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Expr Tape::parameter(Parameter& p) {
  Node node{p.value, {}, p.trainable, {}};
  if (p.trainable) node.backward = [&p](Tape&, const Matrix& g) { p.grad += g; };
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Expr Tape::row(Parameter& table, Index r) {
  if (r < 0 || r >= table.value.rows())
    throw ShapeError("row " + std::to_string(r) + " outside table " + table.name());
  Node node{table.value.row(r).transpose(), {}, table.trainable, {}};
  if (table.trainable)
    node.backward = [&table, r](Tape&, const Matrix& g) { table.grad.row(r) += g.transpose(); };
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(const Expr& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward needs a scalar loss");
  auto& seed = nodes_[static_cast<std::size_t>(loss.id())];
  if (!seed.requires_grad) return;
  seed.grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.size() == 0 || !node.backward) continue;
    node.backward(*this, node.grad);
    node.grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------

namespace {

void require(bool ok, const char* op, const Expr& a, const Expr& b) {
  if (!ok)
    throw ShapeError(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

template <typename Fwd, typename Deriv>
Expr elementwise(const Expr& a, Fwd fwd, Deriv deriv) {
  Matrix out = a.value().unaryExpr(fwd);
  const int ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia, deriv](Tape& t, const Matrix& g) {
    // `deriv` maps an input entry to its local derivative.
    t.accumulate(ia, g.cwiseProduct(t.value(ia).unaryExpr(deriv)));
  });
}

}  // namespace

Expr matmul(const Expr& a, const Expr& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Expr add(const Expr& a, const Expr& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Expr sub(const Expr& a, const Expr& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Expr cmul(const Expr& a, const Expr& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "cmul", a, b);
  const int ia = a.id(), ib = b.id();
  return a.tape().push(a.value().cwiseProduct(b.value()), {a, b},
                       [ia, ib](Tape& t, const Matrix& g) {
                         if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                         if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                       });
}

Expr scale(const Expr& a, double s) {
  const int ia = a.id();
  return a.tape().push(a.value() * s, {a},
                       [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Expr add_col(const Expr& m, const Expr& v) {
  require(v.cols() == 1 && v.rows() == m.rows(), "add_col", m, v);
  const int im = m.id(), iv = v.id();
  Matrix out = m.value().colwise() + v.value().col(0);
  return m.tape().push(std::move(out), {m, v}, [im, iv](Tape& t, const Matrix& g) {
    t.accumulate(im, g);
    if (t.requires_grad(iv)) t.accumulate(iv, g.rowwise().sum());
  });
}

Expr transpose(const Expr& a) {
  const int ia = a.id();
  return a.tape().push(a.value().transpose(), {a},
                       [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Expr sum(const std::vector<Expr>& items) {
  if (items.empty()) throw ShapeError("sum of nothing");
  Matrix out = items[0].value();
  for (std::size_t i = 1; i < items.size(); ++i) {
    require(items[i].rows() == out.rows() && items[i].cols() == out.cols(), "sum", items[0],
            items[i]);
    out += items[i].value();
  }
  std::vector<int> ids;
  for (const auto& e : items) ids.push_back(e.id());
  return items[0].tape().push(std::move(out), items, [ids](Tape& t, const Matrix& g) {
    for (int id : ids) t.accumulate(id, g);
  });
}

Expr sigmoid(const Expr& a) {
  return elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Expr tanh(const Expr& a) {
  return elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Expr relu(const Expr& a) {
  return elementwise(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Expr leaky_relu(const Expr& a, double slope) {
  return elementwise(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x) { return x > 0 ? 1.0 : slope; });
}

Expr concat_rows(const std::vector<Expr>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Index rows = 0, cols = parts[0].cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows", parts[0], p);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts[0].tape().push(std::move(out), parts, [spans](Tape& t, const Matrix& g) {
    for (auto [id, start] : spans)
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(start, t.value(id).rows()));
  });
}

Expr concat_cols(const std::vector<Expr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Index cols = 0, rows = parts[0].rows();
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", parts[0], p);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts[0].tape().push(std::move(out), parts, [spans](Tape& t, const Matrix& g) {
    for (auto [id, start] : spans)
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(start, t.value(id).cols()));
  });
}

Expr slice_rows(const Expr& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows out of range");
  const int ia = a.id();
  const Index rows = a.rows();
  return a.tape().push(a.value().middleRows(start, count), {a},
                       [ia, start, count, rows](Tape& t, const Matrix& g) {
                         Matrix full = Matrix::Zero(rows, g.cols());
                         full.middleRows(start, count) = g;
                         t.accumulate(ia, full);
                       });
}

Expr column(const Expr& a, Index j) {
  if (j < 0 || j >= a.cols()) throw ShapeError("column out of range");
  const int ia = a.id();
  const Index cols = a.cols();
  return a.tape().push(a.value().col(j), {a}, [ia, j, cols](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(g.rows(), cols);
    full.col(j) = g;
    t.accumulate(ia, full);
  });
}

Expr softmax(const Expr& a) {
  if (a.rows() != 1 && a.cols() != 1) throw ShapeError("softmax needs a vector");
  Matrix out = (a.value().array() - a.value().maxCoeff()).exp();
  out /= out.sum();
  const int ia = a.id();
  Matrix probs = std::move(out);
  return a.tape().push(probs, {a}, [ia, probs](Tape& t, const Matrix& g) {
    const double dot = g.cwiseProduct(probs).sum();
    t.accumulate(ia, probs.cwiseProduct((g.array() - dot).matrix()));
  });
}

Expr neg_log_softmax(const Expr& logits, Index gold) {
  if (logits.cols() != 1) throw ShapeError("neg_log_softmax needs a column");
  if (gold < 0 || gold >= logits.rows()) throw ShapeError("gold index outside logits");
  const auto& z = logits.value();
  const double m = z.maxCoeff();
  Matrix probs = (z.array() - m).exp();
  const double total = probs.sum();
  probs /= total;
  Matrix out(1, 1);
  out(0, 0) = -(z(gold, 0) - m - std::log(total));
  const int il = logits.id();
  return logits.tape().push(std::move(out), {logits}, [il, probs, gold](Tape& t, const Matrix& g) {
    Matrix d = probs;
    d(gold, 0) -= 1.0;
    t.accumulate(il, d * g(0, 0));
  });
}

Expr neighbourhood_attention(const Expr& left, const Expr& right, const drts::Graph& graph,
                             double slope) {
  const Index n = static_cast<Index>(graph.size());
  if (left.rows() != 1 || right.rows() != 1 || left.cols() != n || right.cols() != n)
    throw ShapeError("neighbourhood_attention: scores must be 1 x n");
  Matrix alpha = Matrix::Zero(n, n);
  Matrix slope_at = Matrix::Zero(n, n);  // LeakyReLU derivative per entry
  const auto& l = left.value();
  const auto& r = right.value();
  for (Index i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors(static_cast<std::size_t>(i));
    if (nb.empty()) throw ShapeError("node without neighbours");
    double best = -std::numeric_limits<double>::infinity();
    for (auto j : nb) {
      const double pre = l(0, i) + r(0, static_cast<Index>(j));
      const double e = pre > 0 ? pre : slope * pre;
      slope_at(i, static_cast<Index>(j)) = pre > 0 ? 1.0 : slope;
      alpha(i, static_cast<Index>(j)) = e;
      best = std::max(best, e);
    }
    double total = 0.0;
    for (auto j : nb) {
      double& v = alpha(i, static_cast<Index>(j));
      v = std::exp(v - best);
      total += v;
    }
    for (auto j : nb) alpha(i, static_cast<Index>(j)) /= total;
  }
  const int il = left.id(), ir = right.id();
  Matrix a = alpha;
  return left.tape().push(
      std::move(alpha), {left, right}, [il, ir, a, slope_at](Tape& t, const Matrix& g) {
        // Softmax backward per row; entries outside N(i) have alpha == 0 and
        // therefore contribute nothing.
        Matrix de = a.cwiseProduct(g);
        const Eigen::VectorXd row_dot = de.rowwise().sum();
        de -= a.cwiseProduct(row_dot.replicate(1, a.cols()));
        de = de.cwiseProduct(slope_at);
        t.accumulate(il, de.rowwise().sum().transpose());
        t.accumulate(ir, de.colwise().sum());
      });
}

}  // namespace drts::nn
