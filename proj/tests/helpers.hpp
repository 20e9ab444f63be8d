#pragma once

#include "dgan/stmap.hpp"
#include "dgan/tensor.hpp"

#include <filesystem>
#include <string>

namespace testutil {

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::path(DGAN_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline dgan::GridMatrix<double> random_map(dgan::Index r, dgan::Index c, dgan::Rng& rng, double lo = 0.0,
                                           double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  dgan::GridMatrix<double> m(r, c);
  for (dgan::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace testutil
