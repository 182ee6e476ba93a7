#pragma once

// Shared datasets for unit and acceptance tests.

#include "acpc/rng.hpp"
#include "acpc/train.hpp"

namespace fixtures {

// Random features in [-1, 1); the label is the sign of one hash-code
// component of the newest access, so it is linearly separable.
inline acpc::Dataset separable_dataset(std::size_t n, std::uint64_t seed) {
  acpc::Rng rng(seed);
  acpc::Dataset d;
  d.features.resize(n);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : d.features[i]) v = 2.0 * rng.uniform() - 1.0;
    d.labels[i] = d.features[i][acpc::feature::kHashBegin] > 0.0 ? 1 : 0;
  }
  return d;
}

}  // namespace fixtures
