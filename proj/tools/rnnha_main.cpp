// Command-line front end: synth, train, extract, eval, gradcheck, attmap, ablate.
//
// Options may also come from a flat key=value file given with --config; keys
// are long option names without the leading dashes. Precedence is command
// line, then HAR_SEED (seed only), then the config file, then built-in
// defaults.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rnnha/binary_io.hpp"
#include "rnnha/commands.hpp"
#include "rnnha/errors.hpp"

namespace {

using namespace rnnha;

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string config_path_from(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

/// Applies config values and HAR_SEED as option defaults, so anything given
/// on the command line still wins.
void apply_defaults(CLI::App& app, const std::map<std::string, std::string>& config) {
  for (const auto& [key, value] : config) {
    bool used = false;
    for (CLI::App* sub : app.get_subcommands({})) {
      CLI::Option* opt = sub->get_option_no_throw("--" + key);
      if (opt == nullptr) continue;
      opt->default_val(value);
      used = true;
    }
    if (!used) throw ConfigError("unknown config key '" + key + "'");
  }
  if (const char* env = std::getenv("HAR_SEED")) {
    for (CLI::App* sub : app.get_subcommands({})) {
      if (CLI::Option* opt = sub->get_option_no_throw("--seed")) opt->default_val(env);
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

void add_model_options(CLI::App* cmd, TrainOptions& t, std::string& variant) {
  cmd->add_option("--hidden", t.hidden_dim, "GRU hidden units H")->capture_default_str();
  cmd->add_option("--transformer-dim", t.transformer_dim, "transformer hidden width (0: H/2)")
      ->capture_default_str();
  cmd->add_option("--epsilon", t.epsilon, "attention normalization constant")->capture_default_str();
  cmd->add_option("--conv-depth", t.conv_depth, "conv stack output depth for image inputs")
      ->capture_default_str();
  cmd->add_option("--epochs", t.schedule.epochs)->capture_default_str();
  cmd->add_option("--batch-size", t.schedule.batch_size)->capture_default_str();
  cmd->add_option("--lr", t.schedule.initial_lr)->capture_default_str();
  cmd->add_option("--dropped-lr", t.schedule.dropped_lr)->capture_default_str();
  cmd->add_option("--drop-epoch", t.schedule.drop_epoch)->capture_default_str();
  if (!variant.empty()) {
    cmd->add_option("--variant", variant, "rnn_ha | fc_ha | rnn_h_no_attention")
        ->check(CLI::IsMember({"rnn_ha", "fc_ha", "rnn_h_no_attention", "rnn_h"}))
        ->capture_default_str();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level recurrent attention engine for vehicle re-identification"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  app.add_option("--config", config_file, "flat key=value defaults file");

  // synth
  SynthConfig synth;
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic two-level (model, vehicle) dataset");
  c_synth->add_option("--out", synth_out, "output directory")->required();
  c_synth->add_option("--models", synth.models)->capture_default_str();
  c_synth->add_option("--train-vehicles", synth.train_vehicles_per_model)->capture_default_str();
  c_synth->add_option("--test-vehicles", synth.test_vehicles_per_model)->capture_default_str();
  c_synth->add_option("--images", synth.images_per_vehicle)->capture_default_str();
  c_synth->add_option("--grid-height", synth.grid_height)->capture_default_str();
  c_synth->add_option("--grid-width", synth.grid_width)->capture_default_str();
  c_synth->add_option("--dim", synth.dim)->capture_default_str();
  c_synth->add_option("--cameras", synth.cameras)->capture_default_str();
  c_synth->add_option("--coarse-amplitude", synth.coarse_amplitude)->capture_default_str();
  c_synth->add_option("--signature-amplitude", synth.signature_amplitude)->capture_default_str();
  c_synth->add_option("--signature-dims", synth.signature_active_dims)->capture_default_str();
  c_synth->add_option("--noise", synth.noise_sigma)->capture_default_str();
  c_synth->add_option("--seed", synth_seed)->capture_default_str();

  // train
  TrainOptions train_opts;
  std::string train_variant = "rnn_ha";
  std::string resume;
  auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint");
  c_train->add_option("--manifest", train_opts.manifest)->required();
  c_train->add_option("--out", train_opts.checkpoint_out, "checkpoint path")->required();
  c_train->add_option("--loss-csv", train_opts.loss_csv, "per-epoch loss trace");
  c_train->add_option("--resume", resume, "continue from this checkpoint");
  c_train->add_option("--seed", train_opts.seed)->capture_default_str();
  add_model_options(c_train, train_opts, train_variant);

  // extract
  std::string ex_ckpt, ex_manifest, ex_split = "test", ex_out;
  auto* c_extract = app.add_subcommand("extract", "write l2-normalized o2 features (FEAT1)");
  c_extract->add_option("--checkpoint", ex_ckpt)->required();
  c_extract->add_option("--manifest", ex_manifest)->required();
  c_extract->add_option("--split", ex_split)->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  c_extract->add_option("--out", ex_out)->required();

  // eval
  EvalOptions eval;
  std::string eval_out;
  auto* c_eval = app.add_subcommand("eval", "retrieval evaluation report (JSON)");
  c_eval->add_option("--features", eval.features)->required();
  c_eval->add_option("--manifest", eval.manifest)->required();
  c_eval->add_option("--protocol", eval.protocol)->check(CLI::IsMember({"veri", "vehicleid"}))
      ->capture_default_str();
  c_eval->add_option("--gallery-size", eval.gallery_size)->capture_default_str();
  c_eval->add_option("--repeats", eval.repeats)->capture_default_str();
  c_eval->add_option("--seed", eval.seed)->capture_default_str();
  c_eval->add_option("--aggregation", eval.aggregation)->check(CLI::IsMember({"max", "mean"}))
      ->capture_default_str();
  c_eval->add_option("--out", eval_out, "report path (default: stdout)");

  // gradcheck
  GradcheckOptions gc;
  std::vector<std::string> gc_variants;
  std::string gc_fault;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  c_gc->add_option("--grid", gc.grid)->capture_default_str();
  c_gc->add_option("--dim", gc.descriptor_dim)->capture_default_str();
  c_gc->add_option("--hidden", gc.hidden_dim)->capture_default_str();
  c_gc->add_option("--model-classes", gc.model_classes)->capture_default_str();
  c_gc->add_option("--vehicle-classes", gc.vehicle_classes)->capture_default_str();
  c_gc->add_option("--step", gc.step)->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance)->capture_default_str();
  c_gc->add_option("--seed", gc.seed)->capture_default_str();
  c_gc->add_option("--variant", gc_variants, "restrict to these variants");
  c_gc->add_option("--inject-fault", gc_fault)->group("");  // test hook

  // attmap
  std::string am_ckpt, am_manifest, am_split = "test", am_out;
  std::vector<std::size_t> am_ids;
  auto* c_att = app.add_subcommand("attmap", "export attention maps as PGM and CSV");
  c_att->add_option("--checkpoint", am_ckpt)->required();
  c_att->add_option("--manifest", am_manifest)->required();
  c_att->add_option("--split", am_split)->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  c_att->add_option("--ids", am_ids, "sample indices within the split")->required();
  c_att->add_option("--out", am_out, "output directory")->required();

  // ablate
  AblateOptions ab;
  std::string ab_unused_variant;
  auto* c_ab = app.add_subcommand("ablate", "train, extract and evaluate all three variants");
  c_ab->add_option("--manifest", ab.train.manifest)->required();
  c_ab->add_option("--signatures", ab.signatures, "ground-truth signature cells (CSV)");
  c_ab->add_option("--out", ab.out_dir, "directory for reports and the comparison table");
  c_ab->add_option("--seeds", ab.seeds)->capture_default_str();
  c_ab->add_option("--repeats", ab.repeats)->capture_default_str();
  add_model_options(c_ab, ab.train, ab_unused_variant);

  try {
    const std::string path = config_path_from(argc, argv);
    if (!path.empty()) apply_defaults(app, read_config(path));
    else apply_defaults(app, {});
  } catch (const rnnha::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) {
      const SynthDataset data = cmd_synth(synth_out, synth, synth_seed);
      std::cout << "wrote " << data.split.train.size() << " train and " << data.split.test.size()
                << " test samples to " << synth_out << '\n';
    } else if (c_train->parsed()) {
      train_opts.variant = parse_variant(train_variant);
      if (!resume.empty()) train_opts.resume = resume;
      const TrainState state = cmd_train(train_opts, &std::cerr);
      std::cout << "trained to epoch " << state.epoch << ", checkpoint " << train_opts.checkpoint_out
                << '\n';
    } else if (c_extract->parsed()) {
      const std::size_t n = cmd_extract(ex_ckpt, ex_manifest, ex_split, ex_out);
      std::cout << "wrote " << n << " features to " << ex_out << '\n';
    } else if (c_eval->parsed()) {
      const std::string json = cmd_eval(eval).to_json() + "\n";
      if (eval_out.empty()) std::cout << json;
      else binio::write_file(eval_out, json);
    } else if (c_gc->parsed()) {
      if (!gc_variants.empty()) {
        gc.variants.clear();
        for (const auto& v : gc_variants) gc.variants.push_back(parse_variant(v));
      }
      if (!gc_fault.empty()) {
        bool found = false;
        for (int k = 0; k <= static_cast<int>(ad::Op::max_pool); ++k) {
          if (gc_fault == ad::op_name(static_cast<ad::Op>(k))) {
            gc.inject_fault = static_cast<ad::Op>(k);
            found = true;
          }
        }
        if (!found) throw ConfigError("unknown op '" + gc_fault + "'");
      }
      const GradcheckReport report = cmd_gradcheck(gc);
      std::cout << report.to_text();
      std::cout << (report.passed() ? "PASS" : "FAIL") << ": " << report.groups.size()
                << " groups, tolerance " << report.tolerance << '\n';
      return report.passed() ? 0 : 3;
    } else if (c_att->parsed()) {
      const auto written = cmd_attmap(am_ckpt, am_manifest, am_split, am_ids, am_out);
      std::cout << "wrote " << join(written) << '\n';
    } else if (c_ab->parsed()) {
      const AblationSummary summary = cmd_ablate(ab, &std::cerr);
      std::cout << summary.table();
    }
  } catch (const rnnha::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
