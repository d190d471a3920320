#include "rnnha/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rnnha/backbone.hpp"
#include "rnnha/desc_io.hpp"
#include "rnnha/errors.hpp"
#include "rnnha/rng.hpp"

namespace rnnha {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void finalize_split(DatasetSplit& split) {
  std::map<std::string, std::string> vehicle_model;
  auto check = [&](const LabeledSample& s) {
    if (s.vehicle_id.empty() || s.model_id.empty()) {
      throw ValidationError("sample '" + s.source + "' has an empty vehicle_id or model_id");
    }
    auto [it, inserted] = vehicle_model.emplace(s.vehicle_id, s.model_id);
    if (!inserted && it->second != s.model_id) {
      throw ValidationError("vehicle_id '" + s.vehicle_id + "' appears under models '" +
                            it->second + "' and '" + s.model_id + "'");
    }
  };
  for (const auto& s : split.train) check(s);
  for (const auto& s : split.test) check(s);

  std::set<std::string> train_vehicles, train_models;
  for (const auto& s : split.train) {
    train_vehicles.insert(s.vehicle_id);
    train_models.insert(s.model_id);
  }
  for (const auto& s : split.test) {
    if (train_vehicles.count(s.vehicle_id)) {
      throw ValidationError("vehicle_id '" + s.vehicle_id + "' occurs in both train and test");
    }
  }
  split.model_labels.clear();
  split.vehicle_labels.clear();
  for (const auto& m : train_models) split.model_labels.emplace(m, split.model_labels.size());
  for (const auto& v : train_vehicles) split.vehicle_labels.emplace(v, split.vehicle_labels.size());
}

DatasetSplit parse_manifest(const std::string& text, const std::string& base_dir) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("manifest is empty");
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "split" || header[1] != "source" ||
      header[2] != "vehicle_id" || header[3] != "model_id") {
    throw FormatError("manifest header must start with split,source,vehicle_id,model_id");
  }
  DatasetSplit split;
  split.base_dir = base_dir;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() < 4 || f.size() > 6) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has " +
                        std::to_string(f.size()) + " fields, expected 4 to 6");
    }
    LabeledSample s{f[1], f[2], f[3], std::nullopt, std::nullopt};
    if (f.size() > 4 && !f[4].empty()) s.camera_id = f[4];
    if (f.size() > 5 && !f[5].empty()) s.track_id = f[5];
    if (f[0] == "train") {
      split.train.push_back(std::move(s));
    } else if (f[0] == "test") {
      split.test.push_back(std::move(s));
    } else {
      throw FormatError("manifest line " + std::to_string(line_no) + ": unknown split '" + f[0] +
                        "'");
    }
  }
  finalize_split(split);
  return split;
}

DatasetSplit load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  return parse_manifest(ss.str(), dir.empty() ? "." : dir.string());
}

std::string manifest_csv(const DatasetSplit& split) {
  std::string out = "split,source,vehicle_id,model_id,camera_id,track_id\n";
  auto emit = [&](const char* name, const LabeledSample& s) {
    out += name;
    out += ',' + s.source + ',' + s.vehicle_id + ',' + s.model_id + ',' + s.camera_id.value_or("") +
           ',' + s.track_id.value_or("") + '\n';
  };
  for (const auto& s : split.train) emit("train", s);
  for (const auto& s : split.test) emit("test", s);
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  const std::vector<std::size_t> order = permutation(n, shuffle_seed);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<Tensor> load_inputs(const std::vector<LabeledSample>& samples,
                                const std::string& base_dir) {
  std::map<std::string, std::vector<ActivationMap>> cache;
  std::vector<Tensor> inputs;
  inputs.reserve(samples.size());
  for (const LabeledSample& s : samples) {
    const auto colon = s.source.rfind(':');
    const bool is_descriptor =
        colon != std::string::npos && colon + 1 < s.source.size() &&
        s.source.find_first_not_of("0123456789", colon + 1) == std::string::npos;
    if (is_descriptor) {
      const std::string file = (std::filesystem::path(base_dir) / s.source.substr(0, colon)).string();
      const std::size_t index = std::stoull(s.source.substr(colon + 1));
      auto it = cache.find(file);
      if (it == cache.end()) it = cache.emplace(file, load_descriptors(file)).first;
      if (index >= it->second.size()) {
        throw IndexError("descriptor index " + std::to_string(index) + " out of range for " +
                         file + " with " + std::to_string(it->second.size()) + " maps");
      }
      inputs.push_back(it->second[index].tensor);
    } else {
      inputs.push_back(load_pnm((std::filesystem::path(base_dir) / s.source).string()));
    }
  }
  return inputs;
}

TrainingSet make_training_set(const DatasetSplit& split) {
  TrainingSet set;
  set.inputs = load_inputs(split.train, split.base_dir);
  for (const auto& s : split.train) {
    set.model_labels.push_back(split.model_labels.at(s.model_id));
    set.vehicle_labels.push_back(split.vehicle_labels.at(s.vehicle_id));
  }
  return set;
}

}  // namespace rnnha
