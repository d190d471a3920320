#include "rnnha/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <set>
#include <sstream>

#include "rnnha/binary_io.hpp"
#include "rnnha/desc_io.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/grad_check.hpp"
#include "rnnha/rng.hpp"

namespace rnnha {

namespace fs = std::filesystem;

namespace {

bool is_descriptor_source(const std::string& source) {
  const auto colon = source.rfind(':');
  return colon != std::string::npos && colon + 1 < source.size() &&
         source.find_first_not_of("0123456789", colon + 1) == std::string::npos;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  }
}

const std::vector<LabeledSample>& split_samples(const DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "' (expected train or test)");
}

void check_inputs(const Model& model, const std::vector<Tensor>& inputs) {
  const ModelConfig& c = model.config();
  for (const Tensor& x : inputs) {
    if (x.rank() != 3) throw ConfigError("input " + shape_str(x.shape()) + " is not an h×w×c map");
    if (c.backbone == BackboneKind::ingested) {
      if (x.dim(2) != c.descriptor_dim) {
        throw ConfigError("descriptor depth " + std::to_string(x.dim(2)) +
                          " does not match checkpoint d=" + std::to_string(c.descriptor_dim));
      }
    } else if (x.dim(0) != c.conv.in_height || x.dim(1) != c.conv.in_width || x.dim(2) != c.conv.in_channels) {
      throw ConfigError("image " + shape_str(x.shape()) + " does not match checkpoint input " +
                        std::to_string(c.conv.in_height) + "x" + std::to_string(c.conv.in_width) + "x" +
                        std::to_string(c.conv.in_channels));
    }
  }
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

SynthDataset cmd_synth(const std::string& out_dir, const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  ensure_dir(out_dir);
  SynthDataset data = synth_generate(config, seed);
  write_synth(out_dir, data);
  return data;
}

ModelConfig model_config_for(const DatasetSplit& split, const std::vector<Tensor>& inputs,
                             const TrainOptions& options) {
  if (split.train.empty() || inputs.empty()) throw ConfigError("manifest has no training samples");
  const Tensor& first = inputs.front();
  if (first.rank() != 3) throw ConfigError("training input is not an h×w×c map");
  ModelConfig config;
  config.variant = options.variant;
  config.hidden_dim = options.hidden_dim;
  config.transformer_dim = options.transformer_dim;
  config.epsilon = options.epsilon;
  config.model_classes = split.model_classes();
  config.vehicle_classes = split.vehicle_classes();
  config.seed = options.seed;
  if (is_descriptor_source(split.train.front().source)) {
    config.backbone = BackboneKind::ingested;
    config.descriptor_dim = first.dim(2);
  } else {
    config.backbone = BackboneKind::conv;
    config.conv = ConvStackConfig::standard(first.dim(0), first.dim(1), first.dim(2),
                                            options.conv_depth);
    config.descriptor_dim = options.conv_depth;
  }
  config.validate();
  return config;
}

TrainState cmd_train(const TrainOptions& options, std::ostream* log) {
  options.schedule.validate();
  const DatasetSplit split = load_manifest(options.manifest);
  const TrainingSet data = make_training_set(split);

  const TrainSchedule& schedule = options.schedule;
  std::uint64_t seed = options.seed;
  TrainState state;
  std::optional<Model> model;
  if (options.resume) {
    Checkpoint ckpt = load_checkpoint(*options.resume);
    if (ckpt.model.config().model_classes != split.model_classes() ||
        ckpt.model.config().vehicle_classes != split.vehicle_classes()) {
      throw ConfigError("checkpoint class counts do not match the manifest");
    }
    seed = ckpt.seed;
    state = std::move(ckpt.state);
    model.emplace(std::move(ckpt.model));
  } else {
    model.emplace(model_config_for(split, data.inputs, options));
  }
  check_inputs(*model, data.inputs);

  train(*model, data, schedule, seed, state, [&](const EpochLoss& e) {
    if (log) {
      *log << "epoch " << e.epoch << " lr " << lr_schedule(e.epoch, schedule) << " loss "
           << fmt(e.loss.total, 6) << " (model " << fmt(e.loss.model, 6) << ", vehicle "
           << fmt(e.loss.vehicle, 6) << ")\n";
    }
  });
  if (!options.checkpoint_out.empty()) {
    save_checkpoint(options.checkpoint_out, *model, state, schedule, seed);
  }
  if (!options.loss_csv.empty()) binio::write_file(options.loss_csv, loss_trace_csv(state.trace));
  return state;
}

std::vector<std::vector<double>> extract_features(Model& model, const std::vector<Tensor>& inputs) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (const Tensor& x : inputs) out.push_back(model.extract_feature(x).values);
  return out;
}

std::size_t cmd_extract(const std::string& checkpoint, const std::string& manifest,
                        const std::string& split_name, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  const DatasetSplit split = load_manifest(manifest);
  const auto& samples = split_samples(split, split_name);
  const std::vector<Tensor> inputs = load_inputs(samples, split.base_dir);
  check_inputs(ckpt.model, inputs);
  const auto features = extract_features(ckpt.model, inputs);
  write_features(out, features);
  return features.size();
}

std::vector<ItemMeta> item_meta(const std::vector<LabeledSample>& samples) {
  std::vector<ItemMeta> meta;
  meta.reserve(samples.size());
  for (const LabeledSample& s : samples) meta.push_back({s.vehicle_id, s.camera_id, s.track_id});
  return meta;
}

EvaluationReport evaluate(const std::vector<std::vector<double>>& features,
                          const std::vector<LabeledSample>& samples, const EvalOptions& options) {
  if (features.size() != samples.size()) {
    throw ValidationError("feature file has " + std::to_string(features.size()) +
                          " rows, manifest split has " + std::to_string(samples.size()));
  }
  const RetrievalIndex index = RetrievalIndex::build(features, item_meta(samples));
  if (options.protocol == "veri") {
    return veri_protocol(index, index, parse_aggregation(options.aggregation));
  }
  if (options.protocol == "vehicleid") {
    return vehicleid_protocol(index, options.gallery_size, options.repeats, options.seed);
  }
  throw ConfigError("unknown protocol '" + options.protocol + "' (expected veri or vehicleid)");
}

EvaluationReport cmd_eval(const EvalOptions& options) {
  if (options.protocol != "veri" && options.protocol != "vehicleid") {
    throw ConfigError("unknown protocol '" + options.protocol + "' (expected veri or vehicleid)");
  }
  const DatasetSplit split = load_manifest(options.manifest);
  return evaluate(load_features(options.features), split.test, options);
}

bool GradcheckReport::passed() const {
  return !groups.empty() &&
         std::all_of(groups.begin(), groups.end(), [](const GradcheckGroup& g) { return g.passed; });
}

std::string GradcheckReport::to_text() const {
  std::ostringstream os;
  os << "variant,group,elements,max_rel_error,status\n";
  for (const GradcheckGroup& g : groups) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", g.max_rel_error);
    os << to_string(g.variant) << ',' << g.name << ',' << g.elements << ',' << err << ','
       << (g.passed ? "PASS" : "FAIL") << '\n';
  }
  return os.str();
}

GradcheckReport cmd_gradcheck(const GradcheckOptions& options) {
  if (options.grid == 0 || options.descriptor_dim == 0 || options.hidden_dim == 0 ||
      options.model_classes == 0 || options.vehicle_classes == 0) {
    throw ConfigError("gradcheck dimensions must be positive");
  }
  GradcheckReport report;
  report.tolerance = options.tolerance;
  for (Variant variant : options.variants) {
    ModelConfig config;
    config.variant = variant;
    config.descriptor_dim = options.descriptor_dim;
    config.hidden_dim = options.hidden_dim;
    config.model_classes = options.model_classes;
    config.vehicle_classes = options.vehicle_classes;
    config.seed = options.seed;
    Model model(config);

    Rng rng(derive_seed(options.seed, hash_name("gradcheck.input")));
    Tensor input({options.grid, options.grid, options.descriptor_dim});
    for (double& v : input.data()) v = rng.uniform(-2.0, 2.0);
    const std::size_t ml = rng.below(options.model_classes);
    const std::size_t vl = rng.below(options.vehicle_classes);

    std::vector<NamedParam> params = model.parameters();
    std::vector<Tensor*> tensors;
    for (const NamedParam& p : params) tensors.push_back(p.tensor);

    ad::testing::inject_backward_fault(options.inject_fault);
    GradCheckResult result;
    try {
      result = grad_check(
          [&](ad::Graph& g) {
            ForwardResult r = model.forward(g, input);
            return model.loss(r, ml, vl).total;
          },
          tensors, options.step);
    } catch (...) {
      ad::testing::inject_backward_fault(std::nullopt);
      throw;
    }
    ad::testing::inject_backward_fault(std::nullopt);

    for (std::size_t i = 0; i < params.size(); ++i) {
      GradcheckGroup g;
      g.variant = variant;
      g.name = params[i].name;
      g.elements = params[i].tensor->size();
      g.max_rel_error = result.per_param[i];
      g.passed = std::isfinite(g.max_rel_error) && g.max_rel_error < options.tolerance;
      report.groups.push_back(g);
    }
  }
  return report;
}

std::string attention_pgm(const AttentionMap& map) {
  if (map.weights.size() != map.height * map.width || map.weights.empty()) {
    throw ShapeError("attention map has " + std::to_string(map.weights.size()) +
                     " weights for a " + std::to_string(map.height) + "x" +
                     std::to_string(map.width) + " grid");
  }
  const auto [lo_it, hi_it] = std::minmax_element(map.weights.begin(), map.weights.end());
  const double lo = *lo_it, hi = *hi_it;
  std::ostringstream os;
  os << "P2\n" << map.width << ' ' << map.height << "\n255\n";
  for (std::size_t i = 0; i < map.height; ++i) {
    for (std::size_t j = 0; j < map.width; ++j) {
      const double a = map.weights[i * map.width + j];
      const long v = hi > lo ? std::lround((a - lo) / (hi - lo) * 255.0) : 255;
      os << v << (j + 1 == map.width ? '\n' : ' ');
    }
  }
  return os.str();
}

std::string attention_csv(const AttentionMap& map) {
  std::ostringstream os;
  os << "row,col,score,weight\n";
  char buf[96];
  for (std::size_t i = 0; i < map.height; ++i) {
    for (std::size_t j = 0; j < map.width; ++j) {
      const std::size_t k = i * map.width + j;
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", i, j, map.scores[k], map.weights[k]);
      os << buf;
    }
  }
  return os.str();
}

std::vector<std::string> cmd_attmap(const std::string& checkpoint, const std::string& manifest,
                                    const std::string& split_name,
                                    const std::vector<std::size_t>& ids,
                                    const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!ckpt.model.has_attention()) {
    throw ConfigError("variant " + to_string(ckpt.model.config().variant) +
                      " has no attention module");
  }
  const DatasetSplit split = load_manifest(manifest);
  const auto& samples = split_samples(split, split_name);
  for (std::size_t id : ids) {
    if (id >= samples.size()) {
      throw IndexError("sample id " + std::to_string(id) + " out of range for " + split_name +
                       " split of " + std::to_string(samples.size()));
    }
  }
  std::vector<LabeledSample> chosen;
  for (std::size_t id : ids) chosen.push_back(samples[id]);
  const std::vector<Tensor> inputs = load_inputs(chosen, split.base_dir);
  check_inputs(ckpt.model, inputs);
  ensure_dir(out_dir);

  std::vector<std::string> written;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const AttentionMap map = *ckpt.model.attention_map(inputs[k]);
    const std::string stem = (fs::path(out_dir) / ("att_" + std::to_string(ids[k]))).string();
    binio::write_file(stem + ".pgm", attention_pgm(map));
    binio::write_file(stem + ".csv", attention_csv(map));
    written.push_back(stem + ".pgm");
    written.push_back(stem + ".csv");
  }
  return written;
}

double attention_localization(Model& model, const std::vector<Tensor>& inputs,
                              const std::vector<LabeledSample>& samples,
                              const std::vector<SignatureCell>& signatures) {
  if (inputs.size() != samples.size() || inputs.empty()) {
    throw ShapeError("localization needs one input per sample");
  }
  std::map<std::string, const SignatureCell*> by_vehicle;
  for (const SignatureCell& s : signatures) by_vehicle[s.vehicle_id] = &s;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto it = by_vehicle.find(samples[i].vehicle_id);
    if (it == by_vehicle.end()) {
      throw ValidationError("no signature cell for vehicle " + samples[i].vehicle_id);
    }
    const auto map = model.attention_map(inputs[i]);
    if (!map) throw ConfigError("model has no attention module");
    const std::size_t cell = map->argmax();
    if (cell / map->width == it->second->row && cell % map->width == it->second->col) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(inputs.size());
}

ExperimentResult run_experiment(const DatasetSplit& split, const TrainingSet& train_set,
                                const std::vector<Tensor>& test_inputs,
                                const TrainOptions& options, std::size_t repeats,
                                const std::vector<SignatureCell>* signatures, std::ostream* log) {
  Model model(model_config_for(split, train_set.inputs, options));
  check_inputs(model, train_set.inputs);
  check_inputs(model, test_inputs);
  TrainState state;
  train(model, train_set, options.schedule, options.seed, state);

  std::set<std::string> vehicles;
  for (const LabeledSample& s : split.test) vehicles.insert(s.vehicle_id);
  EvalOptions eval;
  eval.protocol = "vehicleid";
  eval.gallery_size = vehicles.size();
  eval.repeats = repeats;
  eval.seed = options.seed;

  ExperimentResult result;
  result.variant = options.variant;
  result.seed = options.seed;
  result.trace = state.trace;
  result.parameters = model.parameter_count();
  result.report = evaluate(extract_features(model, test_inputs), split.test, eval);
  if (signatures && model.has_attention()) {
    result.localization = attention_localization(model, test_inputs, split.test, *signatures);
  }
  if (log) {
    *log << to_string(options.variant) << " seed " << options.seed << ": CMC@1 "
         << fmt(result.report.cmc.at(1)) << " mAP " << fmt(result.report.map);
    if (result.localization) *log << " localization " << fmt(*result.localization);
    *log << " final loss " << fmt(state.trace.empty() ? 0.0 : state.trace.back().loss.total)
         << '\n';
  }
  return result;
}

namespace {

template <typename F>
std::optional<double> mean_over(const std::vector<ExperimentResult>& runs, Variant v, F get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const ExperimentResult& r : runs) {
    if (r.variant != v) continue;
    const std::optional<double> x = get(r);
    if (!x) continue;
    sum += *x;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

constexpr Variant kAllVariants[] = {Variant::rnn_ha, Variant::rnn_h_no_attention, Variant::fc_ha};

}  // namespace

double AblationSummary::mean_cmc1(Variant variant) const {
  return mean_over(runs, variant, [](const ExperimentResult& r) {
           return std::optional<double>(r.report.cmc.at(1));
         }).value_or(0.0);
}

double AblationSummary::mean_map(Variant variant) const {
  return mean_over(runs, variant, [](const ExperimentResult& r) {
           return std::optional<double>(r.report.map);
         }).value_or(0.0);
}

std::optional<double> AblationSummary::mean_localization(Variant variant) const {
  return mean_over(runs, variant, [](const ExperimentResult& r) { return r.localization; });
}

std::string AblationSummary::table() const {
  std::ostringstream os;
  os << "| variant | runs | params | CMC@1 | CMC@5 | mAP | localization |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (Variant v : kAllVariants) {
    std::size_t n = 0, params = 0;
    for (const ExperimentResult& r : runs) {
      if (r.variant == v) {
        ++n;
        params = r.parameters;
      }
    }
    if (n == 0) continue;
    const auto cmc5 = mean_over(runs, v, [](const ExperimentResult& r) {
      return std::optional<double>(r.report.cmc.at(5));
    });
    const auto loc = mean_localization(v);
    os << "| " << to_string(v) << " | " << n << " | " << params << " | " << fmt(mean_cmc1(v))
       << " | " << fmt(cmc5.value_or(0.0)) << " | " << fmt(mean_map(v)) << " | "
       << (loc ? fmt(*loc) : std::string("n/a")) << " |\n";
  }
  return os.str();
}

AblationSummary cmd_ablate(const AblateOptions& options, std::ostream* log) {
  options.train.schedule.validate();
  if (options.seeds.empty()) throw ConfigError("ablate needs at least one seed");
  const DatasetSplit split = load_manifest(options.train.manifest);
  const TrainingSet train_set = make_training_set(split);
  const std::vector<Tensor> test_inputs = load_inputs(split.test, split.base_dir);
  std::optional<std::vector<SignatureCell>> signatures;
  if (!options.signatures.empty()) signatures = load_signatures(options.signatures);
  if (!options.out_dir.empty()) ensure_dir(options.out_dir);

  AblationSummary summary;
  for (Variant v : kAllVariants) {
    for (std::uint64_t seed : options.seeds) {
      TrainOptions t = options.train;
      t.variant = v;
      t.seed = seed;
      ExperimentResult r = run_experiment(split, train_set, test_inputs, t, options.repeats,
                                          signatures ? &*signatures : nullptr, log);
      if (!options.out_dir.empty()) {
        const std::string stem =
            (fs::path(options.out_dir) / (to_string(v) + "_seed" + std::to_string(seed))).string();
        binio::write_file(stem + "_report.json", r.report.to_json() + "\n");
        binio::write_file(stem + "_loss.csv", loss_trace_csv(r.trace));
      }
      summary.runs.push_back(std::move(r));
    }
  }
  if (!options.out_dir.empty()) {
    binio::write_file((fs::path(options.out_dir) / "ablation.md").string(), summary.table());
  }
  return summary;
}

}  // namespace rnnha
