// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criteria that train models use the default synthetic set and schedule.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracle.hpp"
#include "retrieval_fixtures.hpp"
#include "rnnha/attention.hpp"
#include "rnnha/commands.hpp"
#include "rnnha/model.hpp"
#include "rnnha/optim.hpp"
#include "rnnha/retrieval.hpp"
#include "rnnha/rng.hpp"
#include "rnnha/synth.hpp"

using namespace rnnha;
using testutil::random_tensor;
using testutil::slurp;
using testutil::TempDir;

namespace {

constexpr Variant kVariants[] = {Variant::rnn_ha, Variant::rnn_h_no_attention, Variant::fc_ha};

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

TrainingSet training_set(const SynthDataset& data) {
  TrainingSet ts;
  for (std::size_t i = 0; i < data.train_maps.size(); ++i) {
    ts.inputs.push_back(data.train_maps[i].tensor);
    ts.model_labels.push_back(data.split.model_labels.at(data.split.train[i].model_id));
    ts.vehicle_labels.push_back(data.split.vehicle_labels.at(data.split.train[i].vehicle_id));
  }
  return ts;
}

std::vector<Tensor> test_inputs(const SynthDataset& data) {
  std::vector<Tensor> out;
  for (const auto& m : data.test_maps) out.push_back(m.tensor);
  return out;
}

// ------------------------------------------------------------------ criteria

Outcome gradient_correctness() {
  const auto start = Clock::now();
  GradcheckReport report = cmd_gradcheck(GradcheckOptions{});
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  for (const auto& g : report.groups) worst = std::max(worst, g.max_rel_error);
  Outcome o;
  o.pass = report.passed() && report.groups.size() > 0 && elapsed < 60.0;
  o.detail = std::to_string(report.groups.size()) + " groups, max rel error " + fmt("%.3g", worst) +
             ", " + fmt("%.1f", elapsed) + " s";
  return o;
}

Outcome attention_distribution() {
  Rng rng(1001);
  Outcome o;
  double worst_sum = 0.0, min_weight = 1.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6), d = 1 + rng.below(8);
    ad::Graph g;
    ad::Var map = g.constant(random_tensor({h, w, d}, rng, -3.0, 3.0));
    ad::Var wv = g.constant(random_tensor({d}, rng, -3.0, 3.0));
    const Tensor a = normalize_scores(attention_scores(wv, map)).value();
    double sum = 0.0;
    for (double v : a.values()) {
      sum += v;
      min_weight = std::min(min_weight, v);
      if (!(v > 0.0)) o.pass = false;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  if (worst_sum > 1e-9) o.pass = false;
  if (kAttentionEpsilon != 0.1 || ModelConfig{}.epsilon != 0.1) o.pass = false;
  // The default argument must be the constant, not some other value.
  ad::Graph g;
  ad::Var s = g.constant(Tensor::vector({0.0, 1.0, 2.0, 3.0}).reshaped({2, 2}));
  if (normalize_scores(s).value().values() != normalize_scores(s, 0.1).value().values()) o.pass = false;
  o.detail = "|sum-1| <= " + fmt("%.2g", worst_sum) + ", min a " + fmt("%.3g", min_weight) +
             ", default epsilon " + fmt("%g", kAttentionEpsilon);
  return o;
}

Outcome loss_identity() {
  Rng rng(2002);
  Outcome o;
  std::size_t checked = 0;
  for (int batch = 0; batch < 1000; ++batch) {
    ModelConfig c;
    c.variant = kVariants[rng.below(std::size(kVariants))];
    c.descriptor_dim = 1 + rng.below(4);
    c.hidden_dim = 1 + rng.below(6);
    c.model_classes = 1 + rng.below(4);
    c.vehicle_classes = 1 + rng.below(6);
    c.seed = rng.next_u64();
    Model m(c);
    const std::size_t h = 1 + rng.below(3), w = 1 + rng.below(3), n = 1 + rng.below(5);
    std::vector<LossReport> items;
    for (std::size_t i = 0; i < n; ++i) {
      ad::Graph g;
      ForwardResult r = m.forward(g, random_tensor({h, w, c.descriptor_dim}, rng));
      LossReport rep = m.loss(r, rng.below(c.model_classes), rng.below(c.vehicle_classes)).report();
      if (rep.total != rep.model + rep.vehicle) o.pass = false;
      items.push_back(rep);
    }
    LossReport mean = mean_loss(items);
    if (mean.total != mean.model + mean.vehicle) o.pass = false;
    ++checked;
  }
  double worst_zero = 0.0;
  for (Variant v : kVariants) {
    for (int t = 0; t < 10; ++t) {
      ModelConfig c;
      c.variant = v;
      c.descriptor_dim = 3;
      c.hidden_dim = 5;
      c.model_classes = 1 + rng.below(20);
      c.vehicle_classes = 1 + rng.below(200);
      Model m(c);
      for (auto& p : m.parameters()) p.tensor->fill(0.0);
      ad::Graph g;
      ForwardResult r = m.forward(g, random_tensor({2, 2, 3}, rng));
      const double total = m.loss(r, 0, c.vehicle_classes - 1).report().total;
      const double expected = std::log(static_cast<double>(c.model_classes)) +
                              std::log(static_cast<double>(c.vehicle_classes));
      worst_zero = std::max(worst_zero, std::abs(total - expected));
    }
  }
  if (worst_zero > 1e-12) o.pass = false;
  o.detail = std::to_string(checked) + " batches bit-exact, zero-parameter gap " + fmt("%.2g", worst_zero);
  return o;
}

Outcome metric_oracle() {
  Rng rng(3003);
  Outcome o;
  std::size_t mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    fixtures::Instance inst = fixtures::random_instance(rng, 10, 5);
    EvaluationReport r = veri_protocol(fixtures::to_index(inst.queries), fixtures::to_index(inst.gallery));
    oracle::Metrics m = oracle::evaluate(inst.queries, inst.gallery, true, false);
    if (r.map != m.map || r.cmc.at(1) != m.cmc1 || r.cmc.at(5) != m.cmc5 || r.queries != m.evaluated) {
      ++mismatches;
    }

    // Same instance under the repeated-gallery protocol: every drawn gallery
    // is scored against the oracle with one image per unit.
    std::vector<oracle::Item> items = inst.gallery;
    items.insert(items.end(), inst.queries.begin(), inst.queries.end());
    for (std::size_t i = inst.gallery.size(); i < items.size(); ++i) {
      items[i].track = items[i].vehicle + "_" + items[i].camera + "_q";
    }
    std::set<std::string> vehicles;
    for (const auto& it : items) vehicles.insert(it.vehicle);
    const std::size_t size = 1 + rng.below(vehicles.size());
    RetrievalIndex index = fixtures::to_index(items);
    EvaluationReport vr = vehicleid_protocol(index, size, 2, t);
    for (std::size_t k = 0; k < 2; ++k) {
      GallerySelection sel = vehicleid_selection(index, size, derive_seed(t, k));
      std::vector<oracle::Item> q, g;
      for (std::size_t i : sel.queries) q.push_back(items[i]);
      for (std::size_t i : sel.gallery) g.push_back(items[i]);
      oracle::Metrics vm = oracle::evaluate(q, g, false, true);
      if (vr.repeats[k].map != vm.map || vr.repeats[k].cmc1 != vm.cmc1 || vr.repeats[k].cmc5 != vm.cmc5) {
        ++mismatches;
      }
    }
  }
  o.pass = mismatches == 0;
  o.detail = "200 instances, " + std::to_string(mismatches) + " mismatches";
  return o;
}

std::vector<oracle::Item> items_from_features(const std::vector<std::vector<double>>& features,
                                              const std::vector<LabeledSample>& samples) {
  std::vector<oracle::Item> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    oracle::Item it;
    it.feature = features[i];
    it.vehicle = samples[i].vehicle_id;
    it.camera = samples[i].camera_id.value_or("");
    it.track = samples[i].track_id.value_or(it.vehicle + "_" + it.camera);
    out.push_back(it);
  }
  return out;
}

Outcome scale_invariance(const SynthDataset& data) {
  Outcome o;
  std::size_t compared = 0;
  const std::vector<double> factors = {1e-9, 1e-3, 0.37, 3.0, 7.1, 1e4, 1e9};
  auto same = [&](const EvaluationReport& a, const EvaluationReport& b) {
    ++compared;
    if (a.map != b.map || a.cmc != b.cmc) o.pass = false;
    for (std::size_t k = 0; k < a.repeats.size(); ++k) {
      if (a.repeats[k].map != b.repeats[k].map || a.repeats[k].cmc1 != b.repeats[k].cmc1 ||
          a.repeats[k].cmc5 != b.repeats[k].cmc5) {
        o.pass = false;
      }
    }
  };

  // Tie-heavy fixtures.
  Rng rng(4004);
  for (int t = 0; t < 200; ++t) {
    fixtures::Instance inst = fixtures::random_instance(rng);
    EvaluationReport base = veri_protocol(fixtures::to_index(inst.queries), fixtures::to_index(inst.gallery));
    for (double c : factors) {
      same(base, veri_protocol(fixtures::to_index(inst.queries, c), fixtures::to_index(inst.gallery, c)));
    }
  }

  // Features extracted from a model on the synthetic test split.
  ModelConfig c;
  c.descriptor_dim = data.test_maps.front().depth();
  c.hidden_dim = 16;
  c.model_classes = data.split.model_labels.size();
  c.vehicle_classes = data.split.vehicle_labels.size();
  c.seed = 5;
  Model m(c);
  const auto features = extract_features(m, test_inputs(data));
  const auto items = items_from_features(features, data.split.test);
  // The synthetic test split has no query/gallery division, so the first image
  // of each track is the query for the image-to-track check.
  std::vector<oracle::Item> queries, gallery;
  std::set<std::string> seen;
  for (const auto& it : items) (seen.insert(it.track).second ? queries : gallery).push_back(it);
  EvaluationReport veri = veri_protocol(fixtures::to_index(queries), fixtures::to_index(gallery));
  EvaluationReport vid = vehicleid_protocol(fixtures::to_index(items), 32, 10, 7);
  for (double f : factors) {
    same(veri, veri_protocol(fixtures::to_index(queries, f), fixtures::to_index(gallery, f)));
    same(vid, vehicleid_protocol(fixtures::to_index(items, f), 32, 10, 7));
  }
  o.detail = std::to_string(compared) + " rescaled evaluations compared";
  return o;
}

Outcome protocol_fidelity(const SynthDataset& data) {
  Outcome o;
  // Repeated-gallery selections.
  std::vector<std::vector<double>> raw;
  for (const auto& m : data.test_maps) {
    const auto& v = m.tensor.values();
    raw.emplace_back(v.begin(), v.begin() + m.depth());
  }
  const std::vector<ItemMeta> meta = item_meta(data.split.test);
  const EvaluationReport a = vehicleid_protocol(RetrievalIndex::build(raw, meta), 32, 10, 99);
  const EvaluationReport b = vehicleid_protocol(RetrievalIndex::build(raw, meta), 32, 10, 99);
  bool selections_equal = a.repeats.size() == 10 && b.repeats.size() == 10;
  for (std::size_t k = 0; selections_equal && k < 10; ++k) {
    selections_equal = a.repeats[k].gallery == b.repeats[k].gallery && a.repeats[k].seed == b.repeats[k].seed;
  }
  if (!selections_equal || a.to_json() != b.to_json()) o.pass = false;

  // Same-camera audit: for a single query, rewrite every gallery image that
  // shares its camera into an exact, relevant copy of the query. If any such
  // track were ranked, it would take rank one and change the metrics.
  Rng rng(5005);
  std::size_t audited = 0, violations = 0;
  for (int t = 0; t < 500; ++t) {
    fixtures::Instance inst = fixtures::random_instance(rng, 10, 1);
    const oracle::Item& q = inst.queries.front();
    std::vector<oracle::Item> planted = inst.gallery;
    bool any = false;
    for (auto& it : planted) {
      if (it.camera != q.camera) continue;
      it.feature = q.feature;
      it.vehicle = q.vehicle;
      it.track = q.vehicle + "_" + q.camera + "_planted";
      any = true;
    }
    if (!any) continue;
    ++audited;
    const EvaluationReport r0 = veri_protocol(fixtures::to_index(inst.queries), fixtures::to_index(inst.gallery));
    const EvaluationReport r1 = veri_protocol(fixtures::to_index(inst.queries), fixtures::to_index(planted));
    if (r0.map != r1.map || r0.cmc != r1.cmc || r0.skipped != r1.skipped) ++violations;
  }
  if (violations > 0 || audited == 0) o.pass = false;
  o.detail = std::string("10 repeats ") + (selections_equal ? "identical" : "differ") + ", " +
             std::to_string(audited) + " same-camera audits, " + std::to_string(violations) + " violations";
  return o;
}

struct SyntheticResults {
  double cmc1[3] = {0, 0, 0};  // rnn_ha, rnn_h_no_attention, fc_ha
  double localization = 0.0;
  double seconds = 0.0;
};

SyntheticResults synthetic_runs() {
  SyntheticResults res;
  const auto start = Clock::now();
  const Variant order[3] = {Variant::rnn_ha, Variant::rnn_h_no_attention, Variant::fc_ha};
  constexpr int kSeeds = 3;
  for (int seed = 0; seed < kSeeds; ++seed) {
    SynthDataset data = synth_generate(SynthConfig{}, seed);
    const TrainingSet ts = training_set(data);
    const std::vector<Tensor> test = test_inputs(data);
    for (int k = 0; k < 3; ++k) {
      TrainOptions opt;
      opt.variant = order[k];
      opt.hidden_dim = 64;
      opt.seed = seed;
      ExperimentResult r = run_experiment(data.split, ts, test, opt, 10, &data.signatures);
      res.cmc1[k] += r.report.cmc.at(1) / kSeeds;
      if (order[k] == Variant::rnn_ha) res.localization += r.localization.value_or(0.0) / kSeeds;
    }
  }
  res.seconds = seconds_since(start);
  return res;
}

Outcome synthetic_ordering(const SyntheticResults& r) {
  Outcome o;
  o.pass = r.cmc1[0] >= r.cmc1[1] + 0.05 && r.cmc1[1] >= r.cmc1[2] && r.cmc1[0] >= 0.85 &&
           r.seconds < 15 * 60;
  o.detail = "CMC@1 rnn_ha " + fmt("%.4f", r.cmc1[0]) + ", rnn_h " + fmt("%.4f", r.cmc1[1]) +
             ", fc_ha " + fmt("%.4f", r.cmc1[2]) + ", " + fmt("%.0f", r.seconds) + " s";
  return o;
}

Outcome attention_localization_check(const SyntheticResults& r) {
  Outcome o;
  o.pass = r.localization >= 0.8;
  o.detail = "argmax on signature cell for " + fmt("%.4f", r.localization) + " of test images";
  return o;
}

Outcome schedule_fidelity() {
  Outcome o;
  for (std::size_t e = 0; e < 5; ++e) o.pass = o.pass && lr_schedule(e) == 0.001;
  for (std::size_t e = 5; e < 1000; ++e) o.pass = o.pass && lr_schedule(e) == 0.0001;
  o.detail = "epochs 0-4 at 0.001, 5-999 at 0.0001";
  return o;
}

Outcome determinism() {
  Outcome o;
  TempDir dir("acceptance_determinism");
  std::vector<std::string> features, reports, checkpoints;
  for (int run = 0; run < 2; ++run) {
    const std::string root = dir.file("run" + std::to_string(run));
    cmd_synth(root, SynthConfig{}, 3);
    TrainOptions t;
    t.manifest = root + "/manifest.csv";
    t.checkpoint_out = root + "/model.ckpt";
    t.loss_csv = root + "/loss.csv";
    t.hidden_dim = 64;
    t.seed = 3;
    cmd_train(t);
    cmd_extract(t.checkpoint_out, t.manifest, "test", root + "/test.feat");
    std::string report;
    for (const char* protocol : {"vehicleid", "veri"}) {
      EvalOptions e;
      e.features = root + "/test.feat";
      e.manifest = t.manifest;
      e.protocol = protocol;
      e.gallery_size = 32;
      e.seed = 3;
      report += cmd_eval(e).to_json();
    }
    features.push_back(slurp(root + "/test.feat"));
    reports.push_back(report + slurp(t.loss_csv));
    checkpoints.push_back(slurp(t.checkpoint_out));
  }
  o.pass = !features[0].empty() && features[0] == features[1] && reports[0] == reports[1] &&
           checkpoints[0] == checkpoints[1];
  o.detail = std::string("features ") + (features[0] == features[1] ? "identical" : "differ") +
             " (" + std::to_string(features[0].size()) + " bytes), reports " +
             (reports[0] == reports[1] ? "identical" : "differ");
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };

  const SynthDataset data = synth_generate(SynthConfig{}, 0);
  report("gradient correctness", gradient_correctness);
  report("attention distribution", attention_distribution);
  report("loss identity", loss_identity);
  report("metric oracle equivalence", metric_oracle);
  report("scale invariance", [&] { return scale_invariance(data); });
  report("protocol fidelity", [&] { return protocol_fidelity(data); });
  SyntheticResults synthetic;
  bool synthetic_ok = true;
  std::string synthetic_error;
  try {
    synthetic = synthetic_runs();
  } catch (const std::exception& e) {
    synthetic_ok = false;
    synthetic_error = e.what();
  }
  report("synthetic ordering", [&] {
    if (!synthetic_ok) throw std::runtime_error(synthetic_error);
    return synthetic_ordering(synthetic);
  });
  report("attention localization", [&] {
    if (!synthetic_ok) throw std::runtime_error(synthetic_error);
    return attention_localization_check(synthetic);
  });
  report("schedule fidelity", schedule_fidelity);
  report("determinism", determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
