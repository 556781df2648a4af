#include "drts/layers.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace drts::nn {

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
               bool bias) {
  weight_ = &store.add(name + ".W", out, in, Init::Xavier, rng);
  if (bias) bias_ = &store.add(name + ".b", out, 1, Init::Zeros, rng);
}

Expr Linear::operator()(Tape& tape, const Expr& x) const {
  if (x.rows() != in())
    throw ShapeError(weight_->name() + ": input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(in()));
  Expr y = matmul(tape.parameter(*weight_), x);
  if (!bias_) return y;
  return x.cols() == 1 ? add(y, tape.parameter(*bias_)) : add_col(y, tape.parameter(*bias_));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
         Activation act)
    : layer_(store, name, in, out, rng), act_(act) {}

Expr Mlp::operator()(Tape& tape, const Expr& x) const {
  Expr y = layer_(tape, x);
  return act_ == Activation::Relu ? relu(y) : y;
}

std::vector<Expr> Mlp::operator()(Tape& tape, const std::vector<Expr>& xs) const {
  std::vector<Expr> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back((*this)(tape, x));
  return out;
}

Embedding::Embedding(ParameterStore& store, const std::string& name, Index vocab, Index dim,
                     Rng& rng, bool trainable) {
  table_ = &store.add(name, vocab, dim, trainable ? Init::Xavier : Init::Zeros, rng, trainable);
}

WordEmbedder::WordEmbedder(ParameterStore& store, const std::string& name, Index words,
                           Index lemmas, Index rand_dim, Index pret_dim, Index lemma_dim,
                           Rng& rng)
    : random_(store, name + ".rand", words, rand_dim, rng),
      pretrained_(store, name + ".pret", words, pret_dim, rng, /*trainable=*/false),
      lemma_(store, name + ".lemma", lemmas, lemma_dim, rng) {}

Expr WordEmbedder::operator()(Tape& tape, Index word, Index lemma) const {
  return concat_rows({random_(tape, word), pretrained_(tape, word), lemma_(tape, lemma)});
}

LstmCell::LstmCell(ParameterStore& store, const std::string& name, Index in, Index hidden,
                   Rng& rng)
    : in_(in), hidden_(hidden) {
  weight_ = &store.add(name + ".W", 4 * hidden, in + hidden, Init::Xavier, rng);
  bias_ = &store.add(name + ".b", 4 * hidden, 1, Init::Zeros, rng);
}

LstmState LstmCell::zero_state(Tape& tape) const {
  return {tape.constant(Matrix::Zero(hidden_, 1)), tape.constant(Matrix::Zero(hidden_, 1))};
}

LstmState LstmCell::step(Tape& tape, const LstmState& prev, const Expr& x) const {
  if (x.rows() != in_ || x.cols() != 1)
    throw ShapeError(weight_->name() + ": bad input shape " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()));
  Expr gates = add(matmul(tape.parameter(*weight_), concat_rows({x, prev.h})),
                   tape.parameter(*bias_));
  Expr i = sigmoid(slice_rows(gates, 0, hidden_));
  Expr f = sigmoid(slice_rows(gates, hidden_, hidden_));
  Expr o = sigmoid(slice_rows(gates, 2 * hidden_, hidden_));
  Expr g = tanh(slice_rows(gates, 3 * hidden_, hidden_));
  Expr c = add(cmul(f, prev.c), cmul(i, g));
  Expr h = cmul(o, tanh(c));
  return {h, c};
}

BiLstm::BiLstm(ParameterStore& store, const std::string& name, Index in, Index hidden, int layers,
               Rng& rng)
    : hidden_(hidden) {
  for (int l = 0; l < layers; ++l) {
    Index layer_in = l == 0 ? in : 2 * hidden;
    forward_.emplace_back(store, name + ".l" + std::to_string(l) + ".fwd", layer_in, hidden, rng);
    backward_.emplace_back(store, name + ".l" + std::to_string(l) + ".bwd", layer_in, hidden, rng);
  }
}

std::vector<Expr> BiLstm::operator()(Tape& tape, const std::vector<Expr>& xs) const {
  if (xs.empty()) throw ShapeError("BiLSTM over an empty sequence");
  std::vector<Expr> current = xs;
  const std::size_t n = xs.size();
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    std::vector<Expr> fwd(n), bwd(n);
    LstmState s = forward_[l].zero_state(tape);
    for (std::size_t t = 0; t < n; ++t) {
      s = forward_[l].step(tape, s, current[t]);
      fwd[t] = s.h;
    }
    s = backward_[l].zero_state(tape);
    for (std::size_t t = n; t-- > 0;) {
      s = backward_[l].step(tape, s, current[t]);
      bwd[t] = s.h;
    }
    for (std::size_t t = 0; t < n; ++t) current[t] = concat_rows({fwd[t], bwd[t]});
  }
  return current;
}

AdditiveAttention::AdditiveAttention(ParameterStore& store, const std::string& name,
                                     Index query_dim, Index key_dim, Index attn_dim, Rng& rng)
    : query_(store, name + ".q", query_dim, attn_dim, rng, /*bias=*/true),
      key_(store, name + ".k", key_dim, attn_dim, rng, /*bias=*/false) {
  score_ = &store.add(name + ".v", 1, attn_dim, Init::Xavier, rng);
}

AdditiveAttention::Memory AdditiveAttention::prepare(Tape& tape, const Expr& keys) const {
  return {keys, key_(tape, keys)};
}

AdditiveAttention::Result attention_from_scores(Tape&, const Expr& keys, const Expr& scores) {
  if (scores.rows() != 1 || scores.cols() != keys.cols() || keys.cols() == 0)
    throw ShapeError("attention scores do not match keys");
  Expr weights = softmax(scores);
  return {matmul(keys, transpose(weights)), weights};
}

AdditiveAttention::Result AdditiveAttention::attend(Tape& tape, const Memory& memory,
                                                    const Expr& query) const {
  Expr hidden = tanh(add_col(memory.projected, query_(tape, query)));
  Expr scores = matmul(tape.parameter(*score_), hidden);
  return attention_from_scores(tape, memory.keys, scores);
}

GatLayer::GatLayer(ParameterStore& store, const std::string& name, Index in, int heads,
                   Index head_dim, Rng& rng)
    : head_dim_(head_dim) {
  if (heads < 1 || head_dim < 1) throw ShapeError("GAT layer needs heads >= 1 and head_dim >= 1");
  for (int k = 0; k < heads; ++k) {
    const std::string prefix = name + ".h" + std::to_string(k);
    maps_.push_back(&store.add(prefix + ".W", head_dim, in, Init::Xavier, rng));
    left_.push_back(&store.add(prefix + ".f_left", 1, head_dim, Init::Xavier, rng));
    right_.push_back(&store.add(prefix + ".f_right", 1, head_dim, Init::Xavier, rng));
  }
}

Expr GatLayer::operator()(Tape& tape, const Expr& nodes, const Graph& graph,
                          GatTrace* trace) const {
  if (static_cast<std::size_t>(nodes.cols()) != graph.size())
    throw ShapeError("GAT: " + std::to_string(nodes.cols()) + " node vectors for a graph of " +
                     std::to_string(graph.size()) + " nodes");
  if (nodes.rows() != maps_[0]->value.cols())
    throw ShapeError("GAT: node width " + std::to_string(nodes.rows()) + ", expected " +
                     std::to_string(maps_[0]->value.cols()));
  std::vector<Expr> heads;
  for (std::size_t k = 0; k < maps_.size(); ++k) {
    Expr z = matmul(tape.parameter(*maps_[k]), nodes);  // head_dim x n
    Expr left = matmul(tape.parameter(*left_[k]), z);   // 1 x n
    Expr right = matmul(tape.parameter(*right_[k]), z);
    Expr alpha = neighbourhood_attention(left, right, graph, kLeakySlope);
    if (trace) trace->alphas.push_back(alpha.value());
    heads.push_back(sigmoid(matmul(z, transpose(alpha))));
  }
  return heads.size() == 1 ? heads[0] : concat_rows(heads);
}

GatStack::GatStack(ParameterStore& store, const std::string& name, Index in, int layers,
                   int heads, Index out, Rng& rng) {
  if (layers < 1) throw ShapeError("GAT stack needs at least one layer");
  if (heads < 1 || out % heads != 0)
    throw ShapeError("GAT output width " + std::to_string(out) + " is not divisible by " +
                     std::to_string(heads) + " heads");
  for (int l = 0; l < layers; ++l)
    layers_.emplace_back(store, name + ".l" + std::to_string(l), l == 0 ? in : out, heads,
                         out / heads, rng);
}

Expr GatStack::operator()(Tape& tape, const Expr& nodes, const Graph& graph,
                          GatTrace* trace) const {
  Expr h = nodes;
  for (const auto& layer : layers_) h = layer(tape, h, graph, trace);
  return h;
}

Expr cross_entropy(Tape&, const std::vector<Expr>& logits, const std::vector<Index>& gold) {
  if (logits.size() != gold.size() || logits.empty())
    throw ShapeError("cross_entropy: " + std::to_string(logits.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold symbols");
  std::vector<Expr> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    terms.push_back(neg_log_softmax(logits[i], gold[i]));
  return scale(sum(terms), 1.0 / static_cast<double>(terms.size()));
}

double Adam::step(ParameterStore& store) {
  double norm2 = 0.0;
  for (const auto& p : store.all())
    if (p->trainable) norm2 += p->grad.squaredNorm();
  const double norm = std::sqrt(norm2);
  const double clip =
      options_.clip_norm > 0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;
  ++steps_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (const auto& p : store.all()) {
    if (!p->trainable) continue;
    auto& mom = moments_[p->name()];
    if (mom.m.size() == 0) {
      mom.m = Matrix::Zero(p->value.rows(), p->value.cols());
      mom.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    const Matrix g = p->grad * clip;
    mom.m = options_.beta1 * mom.m + (1.0 - options_.beta1) * g;
    mom.v = options_.beta2 * mom.v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    p->value.array() -= options_.learning_rate * (mom.m.array() / c1) /
                        ((mom.v.array() / c2).sqrt() + options_.epsilon);
  }
  store.zero_grad();
  return norm;
}

// ---------------------------------------------------------------------------

Checkpoint Checkpoint::from_store(const ParameterStore& store) {
  Checkpoint ckpt;
  for (const auto& p : store.all()) ckpt.params.push_back({p->name(), p->value, p->trainable});
  return ckpt;
}

void Checkpoint::restore(ParameterStore& store) const {
  if (params.size() != store.all().size())
    throw std::runtime_error("checkpoint has " + std::to_string(params.size()) +
                             " parameters, model has " + std::to_string(store.all().size()));
  for (const auto& e : params) {
    Parameter* p = store.find(e.name);
    if (!p) throw std::runtime_error("checkpoint parameter not in model: " + e.name);
    if (p->value.rows() != e.value.rows() || p->value.cols() != e.value.cols())
      throw std::runtime_error("shape mismatch for " + e.name);
    p->value = e.value;
  }
}

std::string Checkpoint::serialize() const {
  std::ostringstream out;
  out << "drts-checkpoint " << kCheckpointVersion << "\n";
  for (const auto& [k, v] : meta) {
    if (v.find('\n') != std::string::npos)
      throw std::runtime_error("checkpoint metadata must be single-line: " + k);
    out << "meta " << k << " " << v << "\n";
  }
  out << std::setprecision(17);
  for (const auto& e : params) {
    out << "param " << e.name << " " << e.value.rows() << " " << e.value.cols() << " "
        << (e.trainable ? 1 : 0) << "\n";
    for (Index i = 0; i < e.value.rows(); ++i) {
      for (Index j = 0; j < e.value.cols(); ++j) out << (j ? " " : "") << e.value(i, j);
      out << "\n";
    }
  }
  return out.str();
}

Checkpoint Checkpoint::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "drts-checkpoint")
    throw std::runtime_error("not a checkpoint");
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "meta") {
      std::string key, value;
      in >> key;
      std::getline(in, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      ckpt.meta[key] = value;
    } else if (tag == "param") {
      Entry e;
      Index rows = 0, cols = 0;
      int trainable = 1;
      if (!(in >> e.name >> rows >> cols >> trainable))
        throw std::runtime_error("truncated parameter header");
      e.value.resize(rows, cols);
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
          std::string tok;
          if (!(in >> tok)) throw std::runtime_error("truncated values for " + e.name);
          e.value(i, j) = std::strtod(tok.c_str(), nullptr);
        }
      e.trainable = trainable != 0;
      ckpt.params.push_back(std::move(e));
    } else {
      throw std::runtime_error("unexpected checkpoint record: " + tag);
    }
  }
  return ckpt;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize();
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(ParameterStore& store, const std::function<Expr(Tape&)>& loss,
                           double epsilon, std::size_t max_coordinates, std::uint64_t seed) {
  store.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  struct Coord {
    Parameter* param;
    Index i, j;
  };
  std::vector<Coord> coords;
  for (const auto& p : store.all())
    if (p->trainable)
      for (Index j = 0; j < p->value.cols(); ++j)
        for (Index i = 0; i < p->value.rows(); ++i) coords.push_back({p.get(), i, j});
  if (max_coordinates > 0 && coords.size() > max_coordinates) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coordinates; ++i)
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    coords.resize(max_coordinates);
  }

  auto evaluate = [&] {
    Tape tape;
    return loss(tape).scalar();
  };
  GradCheckResult result;
  result.coordinates = coords.size();
  for (const auto& c : coords) {
    double& x = c.param->value(c.i, c.j);
    const double saved = x;
    x = saved + epsilon;
    const double up = evaluate();
    x = saved - epsilon;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = c.param->grad(c.i, c.j);
    // Relative error, with the denominator floored so that coordinates whose
    // true gradient is ~0 are judged on absolute difference.
    const double denom = std::max({std::abs(numeric), std::abs(analytic), kGradCheckFloor});
    const double err = std::abs(numeric - analytic) / denom;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst = c.param->name() + "[" + std::to_string(c.i) + "," + std::to_string(c.j) + "]";
    }
  }
  store.zero_grad();
  return result;
}

}  // namespace drts::nn
