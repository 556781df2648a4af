#include <doctest.h>

#include <cmath>

#include "drts/layers.hpp"
#include "oracles.hpp"

using namespace drts;
using namespace drts::nn;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

Graph random_graph(Rng& rng, std::size_t n, double p) {
  Graph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) g.connect(i, j);
  return g;
}

// Scalar loss with varied weights so that no gradient cancels by symmetry.
Expr weighted_sum(Tape& tape, const Expr& e, std::uint64_t seed = 99) {
  Rng rng(seed);
  Matrix w = random_matrix(rng, e.cols(), e.rows());
  Expr prod = matmul(tape.constant(w), e);  // cols x cols
  Matrix ones = Matrix::Ones(1, prod.rows());
  Expr row = matmul(tape.constant(ones), prod);
  return matmul(row, tape.constant(Matrix::Ones(prod.cols(), 1)));
}

}  // namespace

TEST_CASE("word embeddings") {
  ParameterStore store;
  Rng rng(1);
  WordEmbedder embed(store, "emb", 10, 6, 300, 100, 100, rng);
  Tape tape;
  Expr v = embed(tape, 3, 2);
  CHECK(v.rows() == 500);
  CHECK(v.cols() == 1);
  CHECK(embed(tape, 3, 2).value() == v.value());
  CHECK(embed.pretrained().value.isZero());

  Expr unk = embed(tape, 0, 1);
  CHECK(unk.value().block(300, 0, 100, 1).isZero());

  tape.backward(weighted_sum(tape, v));
  CHECK(embed.pretrained().grad.isZero());
  CHECK_FALSE(store.find("emb.rand")->grad.row(3).isZero());
  CHECK(store.find("emb.rand")->grad.row(4).isZero());
}

TEST_CASE("mlp") {
  ParameterStore store;
  Rng rng(2);
  SUBCASE("zero weights give zero output") {
    Mlp mlp(store, "m", 4, 3, rng);
    mlp.layer().weight().value.setZero();
    Tape tape;
    CHECK(mlp(tape, tape.constant(random_matrix(rng, 4, 1))).value().isZero());
  }
  SUBCASE("identity weights with linear activation") {
    Mlp mlp(store, "m", 3, 3, rng, Activation::Identity);
    mlp.layer().weight().value.setIdentity();
    Tape tape;
    Matrix x = random_matrix(rng, 3, 1);
    CHECK(mlp(tape, tape.constant(x)).value() == x);
  }
  SUBCASE("matches a hand multiply") {
    Mlp mlp(store, "m", 4, 3, rng);
    mlp.layer().bias()->value = random_matrix(rng, 3, 1);
    Tape tape;
    std::vector<Expr> xs{tape.constant(random_matrix(rng, 4, 1)), tape.constant(random_matrix(rng, 4, 1))};
    auto ys = mlp(tape, xs);
    const Matrix& w = mlp.layer().weight().value;
    const Matrix& b = mlp.layer().bias()->value;
    for (std::size_t t = 0; t < 2; ++t) {
      for (Index r = 0; r < 3; ++r) {
        double s = b(r, 0);
        for (Index c = 0; c < 4; ++c) s += w(r, c) * xs[t].value()(c, 0);
        CHECK(ys[t].value()(r, 0) == doctest::Approx(std::max(0.0, s)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("lstm cell") {
  ParameterStore store;
  Rng rng(3);
  LstmCell cell(store, "lstm", 3, 2, rng);
  SUBCASE("zero weights: closed form from the biases") {
    cell.weight().value.setZero();
    cell.bias().value << 0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8;
    Tape tape;
    auto s = cell.step(tape, cell.zero_state(tape), tape.constant(Matrix::Zero(3, 1)));
    for (int u = 0; u < 2; ++u) {
      const double i = oracle::sigmoid(cell.bias().value(u, 0));
      const double o = oracle::sigmoid(cell.bias().value(4 + u, 0));
      const double c = i * std::tanh(cell.bias().value(6 + u, 0));
      CHECK(s.c.value()(u, 0) == doctest::Approx(c).epsilon(1e-14));
      CHECK(s.h.value()(u, 0) == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
    }
  }
  SUBCASE("zero state, input and weights give zero output") {
    cell.weight().value.setZero();
    cell.bias().value.setZero();
    Tape tape;
    auto s = cell.step(tape, cell.zero_state(tape), tape.constant(Matrix::Zero(3, 1)));
    CHECK(s.h.value().isZero());
  }
  SUBCASE("random weights match the gate equations") {
    cell.bias().value = random_matrix(rng, 8, 1);
    Tape tape;
    Eigen::VectorXd x = random_matrix(rng, 3, 1), h = random_matrix(rng, 2, 1), c = random_matrix(rng, 2, 1);
    auto s = cell.step(tape, {tape.constant(h), tape.constant(c)}, tape.constant(x));
    auto [h2, c2] = oracle::lstm_step(cell.weight().value, cell.bias().value, x, h, c);
    CHECK((s.h.value() - h2).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((s.c.value() - c2).cwiseAbs().maxCoeff() < 1e-14);
    auto again = cell.step(tape, {tape.constant(h), tape.constant(c)}, tape.constant(x));
    CHECK(again.h.value() == s.h.value());
  }
}

TEST_CASE("bidirectional lstm") {
  ParameterStore store;
  Rng rng(4);
  BiLstm bi(store, "bi", 3, 2, 1, rng);
  Tape tape;
  std::vector<Expr> xs;
  for (int t = 0; t < 4; ++t) xs.push_back(tape.constant(random_matrix(rng, 3, 1)));
  auto fwd = bi(tape, xs);
  REQUIRE(fwd.size() == 4);
  CHECK(fwd[0].rows() == 4);
  // With tied direction weights reversal swaps the halves exactly.
  store.find("bi.l0.bwd.W")->value = store.find("bi.l0.fwd.W")->value;
  store.find("bi.l0.bwd.b")->value = store.find("bi.l0.fwd.b")->value;
  Tape t2;
  std::vector<Expr> xs2, rev2;
  for (auto& x : xs) xs2.push_back(t2.constant(x.value()));
  rev2.assign(xs2.rbegin(), xs2.rend());
  auto f2 = bi(t2, xs2);
  auto b2 = bi(t2, rev2);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK((f2[t].value().topRows(2) - b2[3 - t].value().bottomRows(2)).norm() < 1e-14);
    CHECK((f2[t].value().bottomRows(2) - b2[3 - t].value().topRows(2)).norm() < 1e-14);
  }

  Tape t3;
  auto single = bi(t3, {t3.constant(xs[0].value())});
  REQUIRE(single.size() == 1);
  CHECK((single[0].value().topRows(2) - single[0].value().bottomRows(2)).norm() < 1e-14);
}

TEST_CASE("attention") {
  ParameterStore store;
  Rng rng(5);
  AdditiveAttention attn(store, "att", 3, 4, 5, rng);
  SUBCASE("single key") {
    Tape tape;
    Matrix key = random_matrix(rng, 4, 1);
    auto r = attn.attend(tape, attn.prepare(tape, tape.constant(key)), tape.constant(random_matrix(rng, 3, 1)));
    CHECK(r.weights.value()(0, 0) == doctest::Approx(1.0));
    CHECK((r.context.value() - key).norm() < 1e-15);
  }
  SUBCASE("equal scores split evenly") {
    Tape tape;
    Matrix keys(4, 2);
    keys.col(0) = random_matrix(rng, 4, 1);
    keys.col(1) = keys.col(0);
    auto r = attn.attend(tape, attn.prepare(tape, tape.constant(keys)), tape.constant(random_matrix(rng, 3, 1)));
    CHECK(r.weights.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.weights.value()(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("weights are the softmax of the scores") {
    Tape tape;
    Matrix scores(1, 3);
    scores << 1, 2, 3;
    Matrix keys = random_matrix(rng, 4, 3);
    auto r = attention_from_scores(tape, tape.constant(keys), tape.constant(scores));
    auto want = oracle::softmax({1, 2, 3});
    Eigen::VectorXd ctx = Eigen::VectorXd::Zero(4);
    for (int j = 0; j < 3; ++j) {
      CHECK(r.weights.value()(0, j) == doctest::Approx(want[static_cast<std::size_t>(j)]).epsilon(1e-15));
      ctx += want[static_cast<std::size_t>(j)] * keys.col(j);
    }
    CHECK((r.context.value() - ctx).norm() < 1e-14);
  }
}

TEST_CASE("graph attention layer") {
  Rng rng(6);
  SUBCASE("isolated node attends only to itself") {
    ParameterStore store;
    GatLayer layer(store, "g", 3, 2, 2, rng);
    Graph g(1);
    Matrix h = random_matrix(rng, 3, 1);
    Tape tape;
    GatTrace trace;
    Expr out = layer(tape, tape.constant(h), g, &trace);
    for (const auto& a : trace.alphas) CHECK(a(0, 0) == 1.0);
    for (int k = 0; k < 2; ++k) {
      Matrix want = (layer.map(k).value * h).unaryExpr([](double v) { return oracle::sigmoid(v); });
      CHECK((out.value().middleRows(2 * k, 2) - want).norm() < 1e-15);
    }
  }
  SUBCASE("equal neighbours share the weight with the node itself") {
    ParameterStore store;
    GatLayer layer(store, "g", 3, 1, 2, rng);
    Graph g(3);
    g.connect(0, 1);
    g.connect(0, 2);
    Matrix h(3, 3);
    h.col(0) = random_matrix(rng, 3, 1);
    h.col(1) = h.col(0);
    h.col(2) = h.col(0);
    Tape tape;
    GatTrace trace;
    layer(tape, tape.constant(h), g, &trace);
    for (int j = 0; j < 3; ++j) CHECK(trace.alphas[0](0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(trace.alphas[0](1, 2) == 0.0);
  }
  SUBCASE("dense oracle on random graphs") {
    for (int trial = 0; trial < 20; ++trial) {
      ParameterStore store;
      const int heads = trial % 2 ? 4 : 1;
      const std::size_t n = 1 + rng.index(10);
      GatStack stack(store, "s", 5, 1 + trial % 2, heads, 2 * heads, rng);
      Graph g = random_graph(rng, n, 0.4);
      Matrix h = random_matrix(rng, 5, static_cast<Index>(n));
      Tape tape;
      Expr out = stack(tape, tape.constant(h), g);
      CHECK((out.value() - oracle::gat_stack(h, g, stack)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  SUBCASE("a removed edge carries no gradient") {
    ParameterStore store;
    GatLayer layer(store, "g", 3, 2, 2, rng);
    Graph g = random_graph(rng, 5, 1.0);
    g.disconnect(0, 3);
    Matrix h = random_matrix(rng, 3, 5);
    Tape tape;
    Expr x = tape.parameter(store.add("input", h));
    Expr out = layer(tape, x, g);
    tape.backward(weighted_sum(tape, column(out, 0)));
    CHECK(store.find("input")->grad.col(3).isZero());
    CHECK_FALSE(store.find("input")->grad.col(1).isZero());
  }
  SUBCASE("row attention is invariant to a shared score shift") {
    Tape tape;
    Matrix s = random_matrix(rng, 1, 6, 3.0);
    Matrix a = softmax(tape.constant(s)).value();
    Matrix b = softmax(tape.constant((s.array() + 7.5).matrix())).value();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy") {
  Tape tape;
  Matrix sure = Matrix::Zero(4, 1);
  sure(2, 0) = 800.0;
  CHECK(cross_entropy(tape, {tape.constant(sure)}, {2}).scalar() == doctest::Approx(0.0));
  CHECK(cross_entropy(tape, {tape.constant(Matrix::Zero(7, 1))}, {3}).scalar() ==
        doctest::Approx(std::log(7.0)).epsilon(1e-14));

  Rng rng(7);
  std::vector<Expr> logits;
  std::vector<Index> gold{0, 4, 2};
  double want = 0.0;
  for (Index g : gold) {
    Matrix l = random_matrix(rng, 5, 1, 4.0);
    logits.push_back(tape.constant(l));
    std::vector<double> s(l.data(), l.data() + 5);
    want -= std::log(oracle::softmax(s)[static_cast<std::size_t>(g)]);
  }
  CHECK(cross_entropy(tape, logits, gold).scalar() == doctest::Approx(want / 3).epsilon(1e-13));
}

TEST_CASE("finite-difference gradient checks") {
  Rng rng(8);
  Rng data(9);
  SUBCASE("linear") {
    ParameterStore store;
    Linear lin(store, "lin", 4, 3, rng);
    lin.bias()->value = random_matrix(rng, 3, 1);
    Matrix x = random_matrix(data, 4, 2);
    auto r = grad_check(store, [&](Tape& t) { return weighted_sum(t, lin(t, t.constant(x))); }, 1e-5, 0, 1);
    CHECK(r.max_relative_error <= 1e-8);
  }
  SUBCASE("mlp") {
    ParameterStore store;
    Mlp mlp(store, "mlp", 4, 6, rng);
    Matrix x = random_matrix(data, 4, 1);
    auto r = grad_check(store, [&](Tape& t) { return weighted_sum(t, mlp(t, t.constant(x))); }, 1e-5, 0, 1);
    CHECK(r.max_relative_error <= 1e-4);
  }
  SUBCASE("bilstm") {
    ParameterStore store;
    BiLstm bi(store, "bi", 3, 3, 2, rng);
    std::vector<Matrix> xs;
    for (int t = 0; t < 3; ++t) xs.push_back(random_matrix(data, 3, 1));
    auto r = grad_check(store, [&](Tape& t) {
      std::vector<Expr> in;
      for (auto& x : xs) in.push_back(t.constant(x));
      return weighted_sum(t, concat_cols(bi(t, in)));
    }, 1e-5, 0, 1);
    CHECK(r.max_relative_error <= 1e-4);
  }
  SUBCASE("attention") {
    ParameterStore store;
    AdditiveAttention attn(store, "att", 3, 4, 5, rng);
    Matrix keys = random_matrix(data, 4, 5), q = random_matrix(data, 3, 1);
    auto r = grad_check(store, [&](Tape& t) {
      return weighted_sum(t, attn.attend(t, attn.prepare(t, t.constant(keys)), t.constant(q)).context);
    }, 1e-5, 0, 1);
    CHECK(r.max_relative_error <= 1e-4);
  }
  SUBCASE("graph attention") {
    ParameterStore store;
    GatStack stack(store, "gat", 4, 2, 2, 4, rng);
    Graph g = random_graph(data, 6, 0.5);
    Matrix h = random_matrix(data, 4, 6);
    auto r = grad_check(store, [&](Tape& t) { return weighted_sum(t, stack(t, t.constant(h), g)); }, 1e-5, 0, 1);
    CHECK(r.max_relative_error <= 1e-4);
  }
}

TEST_CASE("adam") {
  ParameterStore store;
  Rng rng(10);
  Linear lin(store, "lin", 3, 2, rng);
  Matrix before = lin.weight().value;
  SUBCASE("zero learning rate leaves parameters alone") {
    Adam adam({0.0, 0.9, 0.999, 1e-8, 5.0});
    Tape t;
    t.backward(weighted_sum(t, lin(t, t.constant(random_matrix(rng, 3, 1)))));
    adam.step(store);
    CHECK(lin.weight().value == before);
    CHECK(lin.weight().grad.isZero());
  }
  SUBCASE("first step moves each coordinate by about the learning rate") {
    Adam adam({0.01, 0.9, 0.999, 1e-8, 1e9});
    Tape t;
    t.backward(weighted_sum(t, lin(t, t.constant(random_matrix(rng, 3, 1)))));
    Matrix g = lin.weight().grad;
    adam.step(store);
    Matrix delta = lin.weight().value - before;
    for (Index i = 0; i < g.size(); ++i)
      if (std::abs(g(i)) > 1e-6) CHECK(delta(i) == doctest::Approx(-0.01 * (g(i) > 0 ? 1 : -1)).epsilon(1e-4));
  }
  SUBCASE("gradient norm is clipped") {
    Adam adam({0.01, 0.9, 0.999, 1e-8, 1e-3});
    Tape t;
    t.backward(scale(weighted_sum(t, lin(t, t.constant(random_matrix(rng, 3, 1)))), 1e3));
    CHECK(adam.step(store) > 1e-3);
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  ParameterStore store;
  Rng rng(11);
  store.add("a", 3, 4, Init::Xavier, rng);
  store.add("frozen", random_matrix(rng, 2, 2), false);
  auto ckpt = Checkpoint::from_store(store);
  ckpt.meta["note"] = "two words";
  auto back = Checkpoint::deserialize(ckpt.serialize());
  CHECK(back.meta.at("note") == "two words");
  ParameterStore other;
  Rng rng2(12);
  other.add("a", 3, 4, Init::Xavier, rng2);
  other.add("frozen", Matrix::Zero(2, 2), false);
  back.restore(other);
  CHECK(other.find("a")->value == store.find("a")->value);
  CHECK(other.find("frozen")->value == store.find("frozen")->value);
  CHECK_FALSE(other.find("frozen")->trainable);

  ParameterStore wrong;
  wrong.add("a", Matrix::Zero(4, 3));
  CHECK_THROWS(back.restore(wrong));
}

TEST_CASE("seeded construction is deterministic") {
  auto build = [] {
    ParameterStore store;
    Rng rng(42);
    GatStack stack(store, "s", 4, 2, 4, 8, rng);
    Graph g(3);
    g.connect(0, 1);
    Tape t;
    return stack(t, t.constant(Matrix::Ones(4, 3)), g).value();
  };
  CHECK(build() == build());
}
