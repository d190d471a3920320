#include "rnnha/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rnnha/desc_io.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/rng.hpp"

namespace rnnha {

void SynthConfig::validate() const {
  if (models == 0 || train_vehicles_per_model == 0 || test_vehicles_per_model == 0 ||
      images_per_vehicle == 0 || dim == 0 || cameras == 0) {
    throw ConfigError("synthetic counts must all be positive");
  }
  const std::size_t cells = grid_height * grid_width;
  const std::size_t needed = std::max(train_vehicles_per_model, test_vehicles_per_model);
  if (cells < 2 || cells < needed) {
    throw ConfigError("grid " + std::to_string(grid_height) + "x" + std::to_string(grid_width) +
                      " has " + std::to_string(cells) + " cells; need at least " +
                      std::to_string(std::max<std::size_t>(2, needed)) +
                      " so each vehicle of a model gets its own signature cell");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  if (signature_active_dims == 0 || signature_active_dims > dim) {
    throw ConfigError("signature_active_dims must be in [1, dim]");
  }
}

const SignatureCell& SynthDataset::signature_of(const std::string& vehicle_id) const {
  for (const auto& s : signatures) {
    if (s.vehicle_id == vehicle_id) return s;
  }
  throw IndexError("no signature recorded for vehicle '" + vehicle_id + "'");
}

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

struct VehicleSpec {
  std::string id;
  std::size_t model = 0;
  std::size_t cell = 0;
  std::vector<double> signature;
};

}  // namespace

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.dim, cells = config.grid_height * config.grid_width;
  Rng rng(derive_seed(seed, 0));

  // Coarse patterns: i.i.d. N(0, amplitude^2) per element, spread over every cell.
  std::vector<std::vector<double>> patterns(config.models, std::vector<double>(d));
  for (auto& p : patterns) {
    for (double& v : p) v = config.coarse_amplitude * rng.normal();
  }

  // Signatures are sparse non-negative codes: a few random dimensions set to
  // the signature amplitude. Non-negativity lets one guidance direction score
  // every signature cell above the background.
  auto make_signature = [&]() {
    std::vector<double> s(d, 0.0);
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    for (std::size_t q = 0; q < config.signature_active_dims; ++q) {
      s[idx[q]] = config.signature_amplitude;
    }
    return s;
  };

  std::vector<VehicleSpec> train_vehicles, test_vehicles;
  std::size_t next_id = 0;
  auto add_vehicles = [&](std::vector<VehicleSpec>& out, std::size_t per_model) {
    for (std::size_t m = 0; m < config.models; ++m) {
      std::vector<std::size_t> free_cells(cells);
      std::iota(free_cells.begin(), free_cells.end(), std::size_t{0});
      rng.shuffle(free_cells);
      for (std::size_t k = 0; k < per_model; ++k) {
        out.push_back(VehicleSpec{numbered("v", next_id++, 4), m, free_cells[k], make_signature()});
      }
    }
  };
  add_vehicles(train_vehicles, config.train_vehicles_per_model);
  add_vehicles(test_vehicles, config.test_vehicles_per_model);

  SynthDataset data;
  data.split.base_dir = ".";
  auto render = [&](const std::vector<VehicleSpec>& vehicles, std::vector<ActivationMap>& maps,
                    std::vector<LabeledSample>& samples, const char* file,
                    std::uint64_t stream) {
    Rng noise(derive_seed(seed, stream));
    for (const VehicleSpec& v : vehicles) {
      data.signatures.push_back(
          SignatureCell{v.id, v.cell / config.grid_width, v.cell % config.grid_width});
      for (std::size_t img = 0; img < config.images_per_vehicle; ++img) {
        Tensor t({config.grid_height, config.grid_width, d});
        for (std::size_t c = 0; c < cells; ++c) {
          for (std::size_t k = 0; k < d; ++k) {
            double value = patterns[v.model][k];
            if (c == v.cell) value += v.signature[k];
            t[c * d + k] = value + config.noise_sigma * noise.normal();
          }
        }
        const std::string camera = numbered("c", img % config.cameras, 1);
        samples.push_back(LabeledSample{std::string(file) + ":" + std::to_string(maps.size()),
                                        v.id, numbered("m", v.model, 2), camera,
                                        v.id + "_" + camera});
        maps.push_back(make_activation_map(std::move(t), Provenance::ingested));
      }
    }
  };
  render(train_vehicles, data.train_maps, data.split.train, "train.desc", 1);
  render(test_vehicles, data.test_maps, data.split.test, "test.desc", 2);
  finalize_split(data.split);
  return data;
}

void write_synth(const std::string& dir, const SynthDataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path root(dir);
  {
    std::ofstream out(root / "manifest.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (root / "manifest.csv").string());
    out << manifest_csv(data.split);
  }
  write_descriptors((root / "train.desc").string(), data.train_maps);
  write_descriptors((root / "test.desc").string(), data.test_maps);
  std::ofstream sig(root / "signatures.csv", std::ios::binary | std::ios::trunc);
  if (!sig) throw IoError("cannot write " + (root / "signatures.csv").string());
  sig << "vehicle_id,signature_row,signature_col\n";
  for (const auto& s : data.signatures) sig << s.vehicle_id << ',' << s.row << ',' << s.col << '\n';
}

std::vector<SignatureCell> load_signatures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("vehicle_id,signature_row,signature_col", 0) != 0) {
    throw FormatError(path + ": missing signature header");
  }
  std::vector<SignatureCell> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    SignatureCell s;
    std::string row, col;
    if (!std::getline(is, s.vehicle_id, ',') || !std::getline(is, row, ',') ||
        !std::getline(is, col)) {
      throw FormatError(path + ": malformed line '" + line + "'");
    }
    s.row = std::stoul(row);
    s.col = std::stoul(col);
    out.push_back(s);
  }
  return out;
}

}  // namespace rnnha
