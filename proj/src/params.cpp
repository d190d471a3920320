#include "rnnha/params.hpp"

#include <cmath>

#include "rnnha/rng.hpp"

namespace rnnha {

Tensor init_uniform(const Shape& shape, std::size_t fan_in, std::uint64_t seed,
                    const std::string& name) {
  Tensor t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng(derive_seed(seed, hash_name(name)));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

std::size_t count_elements(const std::vector<NamedParam>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor->size();
  return n;
}

void zero_grads(const std::vector<NamedParam>& params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace rnnha
