#ifndef RNNHA_PARAMS_HPP_
#define RNNHA_PARAMS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rnnha/tensor.hpp"

namespace rnnha {

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from a stream keyed
/// by (seed, name) so every tensor is independent of construction order.
Tensor init_uniform(const Shape& shape, std::size_t fan_in, std::uint64_t seed,
                    const std::string& name);

std::size_t count_elements(const std::vector<NamedParam>& params);
void zero_grads(const std::vector<NamedParam>& params);

}  // namespace rnnha

#endif  // RNNHA_PARAMS_HPP_
