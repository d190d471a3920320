#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "rnnha/backbone.hpp"
#include "rnnha/desc_io.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/grad_check.hpp"

using namespace rnnha;
using testutil::random_tensor;
using testutil::TempDir;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

void write_raw(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("standard stack maps 16x16x1 to 2x2x32") {
  ConvStackConfig cfg = ConvStackConfig::standard(16, 16, 1, 32);
  CHECK(cfg.layers.size() == 3);
  CHECK(cfg.output_shape() == Shape{2, 2, 32});
  ConvStackParams params = ConvStackParams::init(cfg, 7);
  Rng rng(1);
  ActivationMap map = conv_forward(random_tensor({16, 16, 1}, rng, 0.0, 1.0), params);
  CHECK(map.tensor.shape() == Shape{2, 2, 32});
  CHECK(map.provenance == Provenance::conv);
}

TEST_CASE("output shape follows padded convolution and floor pooling") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    ConvStackConfig cfg;
    cfg.in_height = 6 + rng.below(20);
    cfg.in_width = 6 + rng.below(20);
    cfg.in_channels = 1 + rng.below(3);
    std::size_t h = cfg.in_height, w = cfg.in_width;
    const std::size_t layers = 1 + rng.below(2);
    bool ok = true;
    for (std::size_t l = 0; l < layers; ++l) {
      ConvLayerSpec spec{1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(2), rng.below(2),
                         rng.below(2) == 1};
      cfg.layers.push_back(spec);
      h += 2 * spec.padding;
      w += 2 * spec.padding;
      if (h < spec.kernel || w < spec.kernel) { ok = false; break; }
      h = (h - spec.kernel) / spec.stride + 1;
      w = (w - spec.kernel) / spec.stride + 1;
      if (spec.pool) {
        if (h < 2 || w < 2) { ok = false; break; }
        h /= 2;
        w /= 2;
      }
    }
    if (!ok) {
      CHECK_THROWS_AS(cfg.output_shape(), ShapeError);
      continue;
    }
    CHECK(cfg.output_shape() == Shape{h, w, cfg.layers.back().out_channels});
    ConvStackParams params = ConvStackParams::init(cfg, trial);
    ActivationMap m = conv_forward(random_tensor({cfg.in_height, cfg.in_width, cfg.in_channels}, rng),
                                   params);
    CHECK(m.tensor.shape() == cfg.output_shape());
  }
}

TEST_CASE("zero image with zero biases gives a zero map") {
  ConvStackConfig cfg = ConvStackConfig::standard(16, 16, 1);
  ConvStackParams params = ConvStackParams::init(cfg, 3);
  for (auto& b : params.biases) b.fill(0.0);
  ActivationMap m = conv_forward(Tensor({16, 16, 1}, 0.0), params);
  for (double v : m.tensor.data()) CHECK(v == 0.0);
}

TEST_CASE("identity 1x1 kernel without pooling passes the input through") {
  ConvStackConfig cfg;
  cfg.in_height = 3;
  cfg.in_width = 4;
  cfg.in_channels = 2;
  cfg.layers = {ConvLayerSpec{1, 2, 1, 0, false}};
  ConvStackParams params = ConvStackParams::init(cfg, 0);
  params.kernels[0] = Tensor({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  params.biases[0].fill(0.0);
  Rng rng(4);
  Tensor img = random_tensor({3, 4, 2}, rng, 0.0, 1.0);
  CHECK(conv_forward(img, params).tensor.values() == img.values());
}

TEST_CASE("image size mismatch is a shape error") {
  ConvStackParams params = ConvStackParams::init(ConvStackConfig::standard(16, 16, 1), 0);
  CHECK_THROWS_AS(conv_forward(Tensor({15, 16, 1}), params), ShapeError);
}

TEST_CASE("conv stack gradient matches finite differences on 8x8 input") {
  ConvStackConfig cfg;
  cfg.in_height = 8;
  cfg.in_width = 8;
  cfg.in_channels = 1;
  cfg.layers = {ConvLayerSpec{3, 3, 1, 0, true}, ConvLayerSpec{1, 2, 1, 0, false}};
  ConvStackParams params = ConvStackParams::init(cfg, 12);
  Rng rng(8);
  Tensor img = random_tensor({8, 8, 1}, rng);
  std::vector<Tensor*> ps;
  for (auto& k : params.kernels) ps.push_back(&k);
  for (auto& b : params.biases) ps.push_back(&b);
  ps.push_back(&img);
  auto build = [&](ad::Graph& g) { return ad::sum(ad::tanh(conv_forward(g, g.parameter(img), params))); };
  CHECK(grad_check(build, ps).max_rel_error < 1e-4);
}

TEST_CASE("descriptor views are row-major and lossless") {
  Tensor t({2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  ActivationMap m = make_activation_map(t, Provenance::ingested);
  auto d = to_descriptors(m);
  REQUIRE(d.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(d[i] == std::vector<double>{double(i + 1)});

  Tensor single({1, 1, 3}, std::vector<double>{0.5, -1, 2});
  auto s = to_descriptors(make_activation_map(single, Provenance::ingested));
  REQUIRE(s.size() == 1);
  CHECK(s[0] == single.values());

  Rng rng(2);
  ActivationMap r = make_activation_map(random_tensor({3, 2, 4}, rng), Provenance::ingested);
  auto back = to_descriptors(from_descriptors(to_descriptors(r), 3, 2));
  CHECK(back == to_descriptors(r));
}

TEST_CASE("DESC1 reading") {
  TempDir dir("desc");
  std::string bytes = "DESC1\n";
  put_u32(bytes, 2);
  put_u32(bytes, 1);
  put_u32(bytes, 1);
  put_u32(bytes, 4);
  for (int i = 0; i < 8; ++i) put_f32(bytes, 0.5f * i);
  write_raw(dir.file("ok.desc"), bytes);
  auto maps = load_descriptors(dir.file("ok.desc"));
  REQUIRE(maps.size() == 2);
  CHECK(maps[0].tensor.shape() == Shape{1, 1, 4});
  CHECK(maps[1].tensor[3] == 3.5);
  CHECK(maps[0].provenance == Provenance::ingested);
  CHECK_FALSE(maps[0].tensor.requires_grad());

  write_raw(dir.file("short.desc"), bytes.substr(0, bytes.size() - 6));
  try {
    load_descriptors(dir.file("short.desc"));
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("32") != std::string::npos);
    CHECK(msg.find("26") != std::string::npos);
  }

  std::string bad = bytes;
  bad[0] = 'X';
  write_raw(dir.file("magic.desc"), bad);
  CHECK_THROWS_AS(load_descriptors(dir.file("magic.desc")), FormatError);

  std::string zero = "DESC1\n";
  put_u32(zero, 1);
  put_u32(zero, 0);
  put_u32(zero, 1);
  put_u32(zero, 1);
  write_raw(dir.file("zero.desc"), zero);
  CHECK_THROWS_AS(load_descriptors(dir.file("zero.desc")), FormatError);

  CHECK_THROWS_AS(load_descriptors(dir.file("missing.desc")), IoError);
}

TEST_CASE("write then load descriptors is the identity on float32 values") {
  TempDir dir("desc_rt");
  Rng rng(6);
  std::vector<ActivationMap> maps;
  for (int i = 0; i < 3; ++i) {
    Tensor t = random_tensor({2, 3, 5}, rng);
    for (double& v : t.data()) v = static_cast<float>(v);
    maps.push_back(make_activation_map(t, Provenance::ingested));
  }
  write_descriptors(dir.file("rt.desc"), maps);
  auto back = load_descriptors(dir.file("rt.desc"));
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back[i].tensor.values() == maps[i].tensor.values());
}

TEST_CASE("binary PGM images load scaled to [0,1]") {
  TempDir dir("pnm");
  std::string bytes = "P5\n2 1\n255\n";
  bytes.push_back(static_cast<char>(0));
  bytes.push_back(static_cast<char>(255));
  write_raw(dir.file("a.pgm"), bytes);
  Tensor img = load_pnm(dir.file("a.pgm"));
  CHECK(img.shape() == Shape{1, 2, 1});
  CHECK(img[0] == 0.0);
  CHECK(img[1] == 1.0);

  write_raw(dir.file("b.pgm"), "P2\n1 1\n255\n7\n");
  CHECK_THROWS_AS(load_pnm(dir.file("b.pgm")), FormatError);
  write_raw(dir.file("c.pgm"), "P5\n4 4\n255\nab");
  CHECK_THROWS_AS(load_pnm(dir.file("c.pgm")), FormatError);
}
