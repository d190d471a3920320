#include "rnnha/desc_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "rnnha/binary_io.hpp"
#include "rnnha/errors.hpp"

namespace rnnha {

namespace binio {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace binio

void write_block_file(const std::string& path, std::string_view magic, const BlockFile& file) {
  const std::uint64_t expected =
      std::uint64_t{file.count} * file.height * file.width * file.depth;
  if (file.values.size() != expected) {
    throw ShapeError("block payload has " + std::to_string(file.values.size()) +
                     " values, header declares " + std::to_string(expected));
  }
  std::string bytes(magic);
  binio::put_u32(bytes, file.count);
  binio::put_u32(bytes, file.height);
  binio::put_u32(bytes, file.width);
  binio::put_u32(bytes, file.depth);
  bytes.reserve(bytes.size() + 4 * file.values.size());
  for (float v : file.values) binio::put_f32(bytes, v);
  binio::write_file(path, bytes);
}

BlockFile read_block_file(const std::string& path, std::string_view magic) {
  const std::string bytes = binio::read_file(path);
  if (bytes.size() < magic.size() || std::string_view(bytes).substr(0, magic.size()) != magic) {
    throw FormatError(path + ": bad magic, expected \"" +
                      std::string(magic.substr(0, magic.size() - 1)) + "\\n\"");
  }
  binio::Reader reader(std::string_view(bytes).substr(magic.size()), path);
  BlockFile file;
  file.count = reader.u32();
  file.height = reader.u32();
  file.width = reader.u32();
  file.depth = reader.u32();
  if (file.height == 0 || file.width == 0 || file.depth == 0) {
    throw FormatError(path + ": h, w and d must be positive");
  }
  const std::uint64_t n = std::uint64_t{file.count} * file.height * file.width * file.depth;
  const std::uint64_t expected_bytes = 4 * n;
  if (reader.remaining() != expected_bytes) {
    throw FormatError(path + ": payload expected " + std::to_string(expected_bytes) +
                      " bytes, got " + std::to_string(reader.remaining()));
  }
  file.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) file.values[i] = reader.f32();
  return file;
}

void write_descriptors(const std::string& path, std::span<const ActivationMap> maps) {
  BlockFile file;
  file.count = static_cast<std::uint32_t>(maps.size());
  if (!maps.empty()) {
    file.height = static_cast<std::uint32_t>(maps.front().height());
    file.width = static_cast<std::uint32_t>(maps.front().width());
    file.depth = static_cast<std::uint32_t>(maps.front().depth());
  } else {
    file.height = file.width = file.depth = 1;
  }
  for (const ActivationMap& m : maps) {
    if (m.tensor.shape() != maps.front().tensor.shape()) {
      throw ShapeError("all maps in a descriptor file must share one shape");
    }
    for (double v : m.tensor.data()) file.values.push_back(static_cast<float>(v));
  }
  write_block_file(path, kDescriptorMagic, file);
}

std::vector<ActivationMap> load_descriptors(const std::string& path) {
  BlockFile file = read_block_file(path, kDescriptorMagic);
  const std::size_t per = std::size_t{file.height} * file.width * file.depth;
  std::vector<ActivationMap> maps;
  maps.reserve(file.count);
  for (std::size_t i = 0; i < file.count; ++i) {
    std::vector<double> data(file.values.begin() + i * per, file.values.begin() + (i + 1) * per);
    maps.push_back(make_activation_map(Tensor({file.height, file.width, file.depth}, std::move(data)),
                                       Provenance::ingested));
  }
  return maps;
}

void write_features(const std::string& path, const std::vector<std::vector<double>>& features) {
  BlockFile file;
  file.count = static_cast<std::uint32_t>(features.size());
  file.height = file.width = 1;
  file.depth = features.empty() ? 1 : static_cast<std::uint32_t>(features.front().size());
  for (const auto& f : features) {
    if (f.size() != file.depth) throw ShapeError("features have unequal dimensions");
    for (double v : f) file.values.push_back(static_cast<float>(v));
  }
  write_block_file(path, kFeatureMagic, file);
}

std::vector<std::vector<double>> load_features(const std::string& path) {
  BlockFile file = read_block_file(path, kFeatureMagic);
  if (file.height != 1 || file.width != 1) {
    throw FormatError(path + ": feature files must have h = w = 1");
  }
  std::vector<std::vector<double>> out(file.count);
  for (std::size_t i = 0; i < file.count; ++i) {
    out[i].assign(file.values.begin() + i * file.depth, file.values.begin() + (i + 1) * file.depth);
  }
  return out;
}

}  // namespace rnnha
