#ifndef RNNHA_DESC_IO_HPP_
#define RNNHA_DESC_IO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rnnha/backbone.hpp"

namespace rnnha {

inline constexpr std::string_view kDescriptorMagic = "DESC1\n";
inline constexpr std::string_view kFeatureMagic = "FEAT1\n";

/**
 * Contents of a DESC1/FEAT1 file: 6-byte magic, little-endian u32 n,h,w,d,
 * then n·h·w·d little-endian float32 values, row-major, channel fastest.
 */
struct BlockFile {
  std::uint32_t count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t depth = 0;
  std::vector<float> values;
};

void write_block_file(const std::string& path, std::string_view magic, const BlockFile& file);
BlockFile read_block_file(const std::string& path, std::string_view magic);

void write_descriptors(const std::string& path, std::span<const ActivationMap> maps);
/// Ingested maps are constants: requires_grad is false.
std::vector<ActivationMap> load_descriptors(const std::string& path);

/// FEAT1 with h = w = 1.
void write_features(const std::string& path, const std::vector<std::vector<double>>& features);
std::vector<std::vector<double>> load_features(const std::string& path);

}  // namespace rnnha

#endif  // RNNHA_DESC_IO_HPP_
