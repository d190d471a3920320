#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rnnha/attention.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/grad_check.hpp"

using namespace rnnha;
using testutil::random_tensor;

namespace {

TransformerNetParams tiny_transformer(double w1, double b1, double w2, double b2) {
  TransformerNetParams p = TransformerNetParams::init(1, 1, 1, 0);
  p.hidden_weight = Tensor::matrix(1, 1, {w1});
  p.hidden_bias = Tensor::vector({b1});
  p.out_weight = Tensor::matrix(1, 1, {w2});
  p.out_bias = Tensor::vector({b2});
  return p;
}

}  // namespace

TEST_CASE("default epsilon") { CHECK(kAttentionEpsilon == 0.1); }

TEST_CASE("guidance signal") {
  TransformerNetParams zero = TransformerNetParams::init(3, 4, 2, 1);
  for (Tensor* t : {&zero.hidden_weight, &zero.hidden_bias, &zero.out_weight, &zero.out_bias}) t->fill(0.0);
  ad::Graph g;
  CHECK(guidance_signal(g, g.constant(Tensor::vector({1, -2, 3})), zero).value().values() ==
        std::vector<double>{0.0, 0.0});

  TransformerNetParams eye = TransformerNetParams::init(2, 2, 2, 1);
  eye.hidden_weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
  eye.out_weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
  eye.hidden_bias.fill(0.0);
  eye.out_bias.fill(0.0);
  CHECK(guidance_signal(g, g.constant(Tensor::vector({0.25, 1.5})), eye).value().values() ==
        std::vector<double>{0.25, 1.5});

  TransformerNetParams clip = tiny_transformer(1.0, 0.0, 2.0, 0.5);
  CHECK(guidance_signal(g, g.constant(Tensor::vector({-1.0})), clip).value().values() ==
        std::vector<double>{0.5});

  CHECK_THROWS_AS(guidance_signal(g, g.constant(Tensor::vector({1, 2, 3, 4})), zero), ShapeError);
}

TEST_CASE("attention scores") {
  ad::Graph g;
  Rng rng(4);
  ad::Var map = g.constant(random_tensor({2, 3, 4}, rng));
  ad::Var s0 = attention_scores(g.constant(Tensor({4}, 0.0)), map);
  CHECK(s0.shape() == Shape{2, 3});
  for (double v : s0.value().values()) CHECK(v == doctest::Approx(0.693147).epsilon(1e-6));

  Tensor f({1, 2, 2}, std::vector<double>{0.5, 0.5, -50.0, -50.0});
  ad::Var s = attention_scores(g.constant(Tensor::vector({1.0, 1.0})), g.constant(f));
  CHECK(s.value()[0] == doctest::Approx(1.313262).epsilon(1e-6));
  CHECK(s.value()[1] > 0.0);
  CHECK(s.value()[1] < 1e-40);
  CHECK(std::isfinite(s.value()[1]));
}

TEST_CASE("normalized scores") {
  ad::Graph g;
  ad::Var eq = normalize_scores(g.constant(Tensor({2, 2}, 0.8)));
  for (double v : eq.value().values()) CHECK(v == doctest::Approx(0.25));

  ad::Var a = normalize_scores(g.constant(Tensor({1, 4}, std::vector<double>{1, 0, 0, 0})), 0.1);
  CHECK(a.value()[0] == doctest::Approx(11.0 / 14.0));
  for (int i = 1; i < 4; ++i) CHECK(a.value()[i] == doctest::Approx(1.0 / 14.0));

  for (double s : {0.0, 3.0, 1e6}) {
    CHECK(normalize_scores(g.constant(Tensor({1, 1}, s))).value()[0] == 1.0);
  }
}

TEST_CASE("normalized weights form a distribution for random draws") {
  Rng rng(100);
  for (int draw = 0; draw < 300; ++draw) {
    const std::size_t h = 1 + rng.below(7), w = 1 + rng.below(7), d = 1 + rng.below(6);
    ad::Graph g;
    Tensor wt = random_tensor({d}, rng, -5, 5);
    Tensor map = random_tensor({h, w, d}, rng, -5, 5);
    ad::Var a = normalize_scores(attention_scores(g.constant(wt), g.constant(map)));
    double total = 0.0;
    for (double v : a.value().values()) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("shifting every logit keeps a valid distribution") {
  ad::Graph g;
  Tensor f({1, 3, 2}, std::vector<double>{1, 0, -0.5, 0, 2, 0});
  Tensor shift({1, 3, 2}, std::vector<double>{1, 1, -0.5, 1, 2, 1});
  ad::Var w = g.constant(Tensor::vector({1.0, 0.7}));
  ad::Var s1 = attention_scores(w, g.constant(f));
  ad::Var s2 = attention_scores(w, g.constant(shift));
  ad::Var a2 = normalize_scores(s2);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s2.value()[i] > s1.value()[i]);
    total += a2.value()[i];
  }
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("dominant location wins the attention") {
  ad::Graph g;
  Tensor f({2, 2, 1}, std::vector<double>{-30, -30, 30, -30});
  ad::Var a = normalize_scores(attention_scores(g.constant(Tensor::vector({1.0})), g.constant(f)));
  for (std::size_t i : {0u, 1u, 3u}) CHECK(a.value()[2] > a.value()[i]);
}

TEST_CASE("attend scales each descriptor by its weight") {
  ad::Graph g;
  Rng rng(12);
  Tensor f = random_tensor({2, 2, 3}, rng);
  ad::Var uni = attend(g.constant(Tensor({2, 2}, 0.25)), g.constant(f));
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(uni.value()[i] == doctest::Approx(f[i] / 4.0));

  ad::Var zero = attend(g.constant(Tensor({2, 2}, std::vector<double>{0, 1e-300, 1, 1})), g.constant(f));
  for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(zero.value()[k]) < 1e-299);

  Tensor one = random_tensor({1, 1, 3}, rng);
  CHECK(attend(g.constant(Tensor({1, 1}, 1.0)), g.constant(one)).value().values() == one.values());

  CHECK_THROWS_AS(attend(g.constant(Tensor({2, 3}, 0.1)), g.constant(f)), ShapeError);
}

TEST_CASE("attention embedding") {
  ad::Graph g;
  Tensor one({1, 1, 2}, std::vector<double>{4, -1});
  ad::Var a1 = normalize_scores(g.constant(Tensor({1, 1}, 0.3)));
  CHECK(attention_embedding(attend(a1, g.constant(one))).value().values() == one.values());

  Rng rng(13);
  Tensor f = random_tensor({2, 2, 3}, rng);
  ad::Var x1 = ad::global_average_pool(g.constant(f));
  ad::Var x2 = attention_embedding(attend(normalize_scores(g.constant(Tensor({2, 2}, 1.0))), g.constant(f)));
  for (std::size_t k = 0; k < 3; ++k) CHECK(x2.value()[k] == doctest::Approx(x1.value()[k] / 4.0));

  Tensor uv({1, 2, 2}, std::vector<double>{3, -2, 7, 9});
  ad::Var x = attention_embedding(attend(g.constant(Tensor({1, 2}, std::vector<double>{1, 0})), g.constant(uv)));
  CHECK(x.value().values() == std::vector<double>{1.5, -1.0});
}

TEST_CASE("attention chain passes the gradient check") {
  Rng rng(40);
  TransformerNetParams p = TransformerNetParams::init(5, 4, 3, 8);
  Tensor o1 = random_tensor({5}, rng);
  Tensor map = random_tensor({2, 3, 3}, rng);
  Tensor weights = random_tensor({3}, rng);
  std::vector<Tensor*> params = {&p.hidden_weight, &p.hidden_bias, &p.out_weight, &p.out_bias, &o1, &map};
  auto build = [&](ad::Graph& g) {
    ad::Var m = g.parameter(map);
    ad::Var w = guidance_signal(g, g.parameter(o1), p);
    ad::Var x2 = attention_embedding(attend(normalize_scores(attention_scores(w, m)), m));
    return ad::sum(x2 * g.constant(weights));
  };
  CHECK(grad_check(build, params).max_rel_error < 1e-4);
}

TEST_CASE("attention map argmax") {
  AttentionMap m;
  m.height = 2;
  m.width = 2;
  m.weights = {0.1, 0.4, 0.4, 0.1};
  CHECK(m.argmax() == 1);
}
