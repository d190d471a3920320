#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "rnnha/dataset.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/synth.hpp"

using namespace rnnha;
using testutil::TempDir;

namespace {

const char* kHeader = "split,source,vehicle_id,model_id,camera_id,track_id\n";

}  // namespace

TEST_CASE("small manifest label maps") {
  DatasetSplit s = parse_manifest(std::string(kHeader) +
                                  "train,a.desc:0,v1,m1\n"
                                  "train,a.desc:1,v1,m1\n"
                                  "train,a.desc:2,v2,m1\n"
                                  "train,a.desc:3,v2,m1\n");
  CHECK(s.model_classes() == 1);
  CHECK(s.vehicle_classes() == 2);
  CHECK(s.train.size() == 4);
  CHECK(s.vehicle_labels.at("v2") == 1);
  CHECK_FALSE(s.train[0].camera_id.has_value());
}

TEST_CASE("optional camera and track columns") {
  DatasetSplit s = parse_manifest(std::string(kHeader) +
                                  "train,a:0,v1,m1,c0,t0\n"
                                  "test,a:1,v9,m1,c1\n");
  CHECK(*s.train[0].camera_id == "c0");
  CHECK(*s.train[0].track_id == "t0");
  CHECK(*s.test[0].camera_id == "c1");
  CHECK_FALSE(s.test[0].track_id.has_value());
  CHECK(s.vehicle_classes() == 1);
}

TEST_CASE("manifest validation errors") {
  try {
    parse_manifest(std::string(kHeader) + "train,a:0,v1,m1\ntrain,a:1,v1,m2\n");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("v1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_manifest(std::string(kHeader) + "train,a:0,v1,m1\ntest,a:1,v1,m1\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_manifest("source,split\ntrain,a,v,m\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest(""), FormatError);
  CHECK_THROWS_AS(parse_manifest(std::string(kHeader) + "valid,a:0,v1,m1\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest(std::string(kHeader) + "train,a:0,v1\n"), FormatError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), IoError);
}

TEST_CASE("hierarchy consistency on random manifests") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t vehicles = 2 + rng.below(10);
    std::vector<std::size_t> model_of(vehicles);
    for (auto& m : model_of) m = rng.below(4);
    std::string text = kHeader;
    std::vector<std::string> rows;
    for (std::size_t v = 0; v < vehicles; ++v) {
      const char* split = v % 3 == 0 ? "test" : "train";
      for (std::size_t k = 0; k < 1 + rng.below(3); ++k) {
        rows.push_back(std::string(split) + ",x:" + std::to_string(rows.size()) + ",v" +
                       std::to_string(v) + ",m" + std::to_string(model_of[v]) + "\n");
      }
    }
    const int fault = static_cast<int>(rng.below(3));  // 0: none, 1: hierarchy, 2: overlap
    const std::size_t victim = 1 + rng.below(vehicles - 1);
    if (fault == 1) {
      rows.push_back(std::string(victim % 3 == 0 ? "test" : "train") + ",x:z,v" +
                     std::to_string(victim) + ",m" + std::to_string(model_of[victim] + 1) + "\n");
    } else if (fault == 2) {
      rows.push_back(std::string(victim % 3 == 0 ? "train" : "test") + ",x:z,v" +
                     std::to_string(victim) + ",m" + std::to_string(model_of[victim]) + "\n");
    }
    rng.shuffle(rows);
    for (const auto& r : rows) text += r;
    if (fault != 0) {
      CHECK_THROWS_AS(parse_manifest(text), ValidationError);
      continue;
    }
    DatasetSplit s = parse_manifest(text);
    std::map<std::string, std::string> seen;
    for (const auto* list : {&s.train, &s.test}) {
      for (const auto& sample : *list) {
        auto [it, inserted] = seen.emplace(sample.vehicle_id, sample.model_id);
        CHECK(it->second == sample.model_id);
      }
    }
    for (const auto& [id, label] : s.vehicle_labels) CHECK(label < s.vehicle_classes());
  }
}

TEST_CASE("manifest CSV round trip") {
  const std::string text = std::string(kHeader) + "train,a:0,v1,m1,c0,t0\ntest,a:1,v2,m1,,\n";
  DatasetSplit s = parse_manifest(text);
  CHECK(manifest_csv(s) == text);
}

TEST_CASE("batch iteration") {
  auto b = batch_iter(10, 4, 1);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  CHECK(batch_iter(10, 4, 1) == b);

  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = rng.below(200), bs = 1 + rng.below(70);
    std::vector<std::size_t> all;
    for (const auto& batch : batch_iter(n, bs, t)) {
      CHECK(batch.size() <= bs);
      CHECK_FALSE(batch.empty());
      all.insert(all.end(), batch.begin(), batch.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(n);
    for (std::size_t i = 0; i < n; ++i) expect[i] = i;
    CHECK(all == expect);
  }
  CHECK(batch_iter(100, 10, 1) != batch_iter(100, 10, 2));
}

TEST_CASE("synthetic dataset counts and labels") {
  SynthDataset d = synth_generate(SynthConfig{}, 0);
  CHECK(d.split.train.size() == 8 * 8 * 20);
  CHECK(d.split.test.size() == 8 * 8 * 20);
  CHECK(d.train_maps.size() == 1280);
  CHECK(d.split.model_classes() == 8);
  CHECK(d.split.vehicle_classes() == 64);
  CHECK(d.train_maps[0].tensor.shape() == Shape{6, 6, 16});
  CHECK(d.signatures.size() == 128);
  std::set<std::string> train_v, test_v;
  for (const auto& s : d.split.train) train_v.insert(s.vehicle_id);
  for (const auto& s : d.split.test) test_v.insert(s.vehicle_id);
  for (const auto& v : test_v) CHECK(train_v.count(v) == 0);
  for (const auto& s : d.split.test) {
    CHECK(s.camera_id.has_value());
    CHECK(s.track_id.has_value());
  }
}

TEST_CASE("vehicles of one model use distinct signature cells") {
  SynthDataset d = synth_generate(SynthConfig{}, 4);
  std::map<std::string, std::set<std::pair<std::size_t, std::size_t>>> cells;
  std::map<std::string, std::string> model_of;
  for (const auto& s : d.split.train) model_of[s.vehicle_id] = s.model_id;
  for (const auto& s : d.split.test) model_of[s.vehicle_id] = s.model_id;
  for (const auto& sig : d.signatures) {
    const std::string key = model_of.at(sig.vehicle_id) + (sig.vehicle_id < "v0064" ? "a" : "b");
    CHECK(cells[key].insert({sig.row, sig.col}).second);
  }
}

TEST_CASE("synthetic generation is deterministic and noise-free images agree") {
  SynthDataset a = synth_generate(SynthConfig{}, 7), b = synth_generate(SynthConfig{}, 7);
  CHECK(a.train_maps[10].tensor.values() == b.train_maps[10].tensor.values());
  TempDir da("synth_a"), db("synth_b");
  write_synth(da.path().string(), a);
  write_synth(db.path().string(), b);
  for (const char* f : {"manifest.csv", "train.desc", "test.desc", "signatures.csv"}) {
    CHECK(testutil::slurp(da.file(f)) == testutil::slurp(db.file(f)));
  }
  SynthConfig quiet;
  quiet.noise_sigma = 0.0;
  SynthDataset q = synth_generate(quiet, 1);
  CHECK(q.train_maps[0].tensor.values() == q.train_maps[1].tensor.values());
  CHECK(q.train_maps[0].tensor.values() != q.train_maps[20].tensor.values());
}

TEST_CASE("signature cell energy is attenuated by pooling") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;
  SynthDataset d = synth_generate(cfg, 2);
  const ActivationMap& vehicle_a = d.train_maps[0];
  const ActivationMap& vehicle_b = d.train_maps[20];  // same model, next vehicle
  REQUIRE(d.split.train[0].model_id == d.split.train[20].model_id);
  const std::size_t dim = 16, cells = 36;
  const SignatureCell& sa = d.signature_of(d.split.train[0].vehicle_id);
  const std::size_t ca = sa.row * 6 + sa.col;
  // Difference of two vehicles of one model is the two signatures only.
  double cell_energy = 0.0, pooled_energy = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double cell_diff = vehicle_a.tensor[ca * dim + k] - vehicle_b.tensor[ca * dim + k];
    cell_energy += cell_diff * cell_diff;
    double pa = 0.0, pb = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      pa += vehicle_a.tensor[c * dim + k];
      pb += vehicle_b.tensor[c * dim + k];
    }
    const double pooled_diff = (pa - pb) / cells;
    pooled_energy += pooled_diff * pooled_diff;
  }
  CHECK(cell_energy > 0.0);
  // Two signatures survive GAP at 1/36 amplitude each, so energy drops by far more than 36x.
  CHECK(pooled_energy < cell_energy / 36.0);

  // The coarse pattern survives GAP unchanged.
  const ActivationMap& other_model = d.train_maps[8 * 20];
  double coarse_gap = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    double pa = 0.0, po = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      pa += vehicle_a.tensor[c * dim + k];
      po += other_model.tensor[c * dim + k];
    }
    coarse_gap += std::pow((pa - po) / cells, 2);
  }
  CHECK(coarse_gap > 10.0 * pooled_energy);
}

TEST_CASE("synthetic configuration errors") {
  SynthConfig tiny;
  tiny.grid_height = 2;
  tiny.grid_width = 2;
  CHECK_THROWS_AS(synth_generate(tiny, 0), ConfigError);
  SynthConfig one;
  one.grid_height = 1;
  one.grid_width = 1;
  one.train_vehicles_per_model = 1;
  one.test_vehicles_per_model = 1;
  CHECK_THROWS_AS(synth_generate(one, 0), ConfigError);
  SynthConfig neg;
  neg.noise_sigma = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  SynthConfig dims;
  dims.signature_active_dims = 17;
  CHECK_THROWS_AS(dims.validate(), ConfigError);
}

TEST_CASE("written synthetic sets load back through the manifest") {
  TempDir dir("synth_load");
  SynthConfig cfg;
  cfg.models = 2;
  cfg.train_vehicles_per_model = 2;
  cfg.test_vehicles_per_model = 2;
  cfg.images_per_vehicle = 3;
  SynthDataset d = synth_generate(cfg, 5);
  write_synth(dir.path().string(), d);
  DatasetSplit s = load_manifest(dir.file("manifest.csv"));
  CHECK(s.train.size() == 12);
  TrainingSet ts = make_training_set(s);
  REQUIRE(ts.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t k = 0; k < ts.inputs[i].size(); ++k) {
      CHECK(ts.inputs[i][k] == static_cast<double>(static_cast<float>(d.train_maps[i].tensor[k])));
    }
  }
  auto sigs = load_signatures(dir.file("signatures.csv"));
  REQUIRE(sigs.size() == d.signatures.size());
  CHECK(sigs[3].vehicle_id == d.signatures[3].vehicle_id);
  CHECK(sigs[3].row == d.signatures[3].row);
  CHECK_THROWS_AS(d.signature_of("nope"), IndexError);
}
