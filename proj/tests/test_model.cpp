#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/grad_check.hpp"
#include "rnnha/model.hpp"

using namespace rnnha;
using testutil::random_tensor;

namespace {

ModelConfig small_config(Variant v, std::uint64_t seed = 1) {
  ModelConfig c;
  c.variant = v;
  c.descriptor_dim = 4;
  c.hidden_dim = 8;
  c.model_classes = 3;
  c.vehicle_classes = 6;
  c.seed = seed;
  return c;
}

void zero_all(Model& m) {
  for (auto& p : m.parameters()) p.tensor->fill(0.0);
}

const std::vector<Variant> kVariants = {Variant::rnn_ha, Variant::fc_ha, Variant::rnn_h_no_attention};

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : kVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("lstm"), ConfigError);
  CHECK(parse_backbone(to_string(BackboneKind::conv)) == BackboneKind::conv);
}

TEST_CASE("config text round trip and validation") {
  ModelConfig c = small_config(Variant::fc_ha, 99);
  c.epsilon = 0.25;
  c.backbone = BackboneKind::conv;
  c.conv = ConvStackConfig::standard(16, 16, 1, 4);
  ModelConfig back = ModelConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.epsilon == 0.25);
  CHECK(back.conv.layers.size() == 3);

  ModelConfig bad = small_config(Variant::rnn_ha);
  bad.hidden_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(small_config(Variant::rnn_ha).effective_transformer_dim() == 4);
}

TEST_CASE("zero parameters give uniform logits for every variant") {
  Rng rng(3);
  Tensor input = random_tensor({2, 2, 4}, rng);
  for (Variant v : kVariants) {
    CAPTURE(to_string(v));
    Model m(small_config(v));
    zero_all(m);
    ad::Graph g;
    ForwardResult r = m.forward(g, input);
    CHECK(r.logits_model.value().values() == std::vector<double>(3, 0.0));
    CHECK(r.logits_vehicle.value().values() == std::vector<double>(6, 0.0));
    const LossReport loss = m.loss(r, 1, 4).report();
    CHECK(std::abs(loss.total - (std::log(3.0) + std::log(6.0))) <= 1e-12);
  }
}

TEST_CASE("a 1x1 map sends the descriptor itself to the second step") {
  Rng rng(9);
  Tensor input = random_tensor({1, 1, 4}, rng);
  Model m(small_config(Variant::rnn_ha));
  ad::Graph g;
  ForwardResult r = m.forward(g, input);
  CHECK(r.weights->value().values() == std::vector<double>{1.0});
  CHECK(r.x2.value().values() == input.values());
  CHECK(r.x1.value().values() == input.values());
}

TEST_CASE("forward plus loss passes the gradient check for every variant") {
  Rng rng(21);
  Tensor input = random_tensor({2, 2, 4}, rng);
  for (Variant v : kVariants) {
    CAPTURE(to_string(v));
    Model m(small_config(v, 5));
    auto named = m.parameters();
    std::vector<Tensor*> params;
    for (auto& p : named) params.push_back(p.tensor);
    auto build = [&](ad::Graph& g) {
      ForwardResult r = m.forward(g, input);
      return m.loss(r, 2, 5).total;
    };
    GradCheckResult res = grad_check(build, params);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("conv backbone model passes the gradient check") {
  ModelConfig c = small_config(Variant::rnn_ha, 2);
  c.backbone = BackboneKind::conv;
  c.conv.in_height = 8;
  c.conv.in_width = 8;
  c.conv.in_channels = 1;
  c.conv.layers = {ConvLayerSpec{3, 4, 1, 1, true}, ConvLayerSpec{3, 4, 1, 1, true}};
  Model m(c);
  Rng rng(1);
  Tensor img = random_tensor({8, 8, 1}, rng, 0.0, 1.0);
  std::vector<Tensor*> params;
  for (auto& p : m.parameters()) params.push_back(p.tensor);
  auto build = [&](ad::Graph& g) { return m.loss(m.forward(g, img), 0, 3).total; };
  CHECK(grad_check(build, params).max_rel_error < 1e-4);
}

TEST_CASE("identical seeds give identical outputs") {
  Rng rng(2);
  Tensor input = random_tensor({3, 3, 4}, rng);
  for (Variant v : kVariants) {
    Model a(small_config(v, 77)), b(small_config(v, 77));
    CHECK(a.extract_feature(input).values == b.extract_feature(input).values);
  }
}

TEST_CASE("parameter counts follow the closed form") {
  for (Variant v : kVariants) {
    ModelConfig c = small_config(v);
    Model m(c);
    CHECK(m.parameter_count() == Model::expected_parameter_count(c));
  }
  // d=4, H=8, Ht=4, C=3+6.
  const std::size_t heads = 3 * 9 + 6 * 9;
  const std::size_t gru = 3 * (8 * 4 + 8 * 8 + 8);
  const std::size_t fc = 2 * (8 * 4 + 8 + 8 * 8 + 8);
  const std::size_t transformer = 4 * 8 + 4 + 4 * 4 + 4;
  CHECK(Model(small_config(Variant::rnn_ha)).parameter_count() == gru + transformer + heads);
  CHECK(Model(small_config(Variant::rnn_h_no_attention)).parameter_count() == gru + heads);
  CHECK(Model(small_config(Variant::fc_ha)).parameter_count() == fc + transformer + heads);
}

TEST_CASE("parameter names are unique and the ablation has no transformer") {
  for (Variant v : kVariants) {
    Model m(small_config(v));
    std::set<std::string> names;
    bool has_transformer = false;
    for (auto& p : m.parameters()) {
      CHECK(names.insert(p.name).second);
      if (p.name.rfind("transformer", 0) == 0) has_transformer = true;
    }
    CHECK(has_transformer == (v != Variant::rnn_h_no_attention));
    CHECK(m.has_attention() == has_transformer);
  }
}

TEST_CASE("ablation without attention matches the first step of the full model") {
  Rng rng(5);
  Tensor input = random_tensor({3, 2, 4}, rng);
  Model full(small_config(Variant::rnn_ha, 11)), plain(small_config(Variant::rnn_h_no_attention, 11));
  ad::Graph g1, g2;
  ForwardResult a = full.forward(g1, input);
  ForwardResult b = plain.forward(g2, input);
  CHECK(a.logits_model.value().values() == b.logits_model.value().values());
  CHECK(b.x2.value().values() == b.x1.value().values());
  CHECK_FALSE(b.weights.has_value());
  CHECK_FALSE(plain.attention_map(input).has_value());
}

TEST_CASE("transformer gets gradient only from the vehicle loss") {
  Rng rng(19);
  Tensor input = random_tensor({2, 3, 4}, rng);
  Model m(small_config(Variant::rnn_ha, 4));
  auto transformer_grad = [&](bool model_branch) {
    auto params = m.parameters();
    for (auto& p : params) {
      p.tensor->set_requires_grad(true);
      p.tensor->zero_grad();
    }
    ad::Graph g;
    HierarchicalLoss l = m.loss(m.forward(g, input), 1, 2);
    g.backward(model_branch ? l.model : l.vehicle);
    double sq = 0.0;
    bool all_zero = true;
    for (auto& p : params) {
      if (p.name.rfind("transformer", 0) != 0) continue;
      for (double v : p.tensor->grad()) {
        sq += v * v;
        if (v != 0.0) all_zero = false;
      }
    }
    return std::make_pair(sq, all_zero);
  };
  CHECK(transformer_grad(true).second);
  CHECK(transformer_grad(false).first > 0.0);
}

TEST_CASE("wrong descriptor width or labels are rejected") {
  Model m(small_config(Variant::rnn_ha));
  ad::Graph g;
  CHECK_THROWS_AS(m.forward(g, Tensor({2, 2, 5}, 0.1)), ConfigError);
  ForwardResult r = m.forward(g, Tensor({2, 2, 4}, 0.1));
  CHECK_THROWS_AS(m.loss(r, 3, 0), IndexError);
  CHECK_THROWS_AS(m.loss(r, 0, 6), IndexError);
}

TEST_CASE("l2 normalization of features") {
  FeatureVector f = l2_normalize({3, 4});
  CHECK(f.normalized);
  CHECK(f.values[0] == doctest::Approx(0.6));
  CHECK(f.values[1] == doctest::Approx(0.8));

  FeatureVector unit = l2_normalize({0.6, 0.8});
  CHECK(unit.values[0] == doctest::Approx(0.6));
  CHECK(unit.values[1] == doctest::Approx(0.8));

  FeatureVector zero = l2_normalize({0, 0, 0});
  CHECK_FALSE(zero.normalized);
  CHECK(zero.values == std::vector<double>{0, 0, 0});
}

TEST_CASE("extracted features and attention maps") {
  Rng rng(8);
  Tensor input = random_tensor({2, 3, 4}, rng);
  Model m(small_config(Variant::rnn_ha, 3));
  FeatureVector f = m.extract_feature(input);
  double sq = 0.0;
  for (double v : f.values) sq += v * v;
  CHECK(f.values.size() == 8);
  CHECK(sq == doctest::Approx(1.0));

  auto att = m.attention_map(input);
  REQUIRE(att.has_value());
  CHECK(att->height == 2);
  CHECK(att->width == 3);
  double total = 0.0;
  for (double a : att->weights) total += a;
  CHECK(total == doctest::Approx(1.0));
  CHECK(att->scores.size() == 6);
}
