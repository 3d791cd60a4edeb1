#pragma once

#include <string>
#include <vector>

#include "smile/losses.hpp"

namespace smile::gradcheck {

struct Entry {
  std::string name;
  double max_rel_err = 0.0;
};

/// Central finite-difference checks (step h) of every objective component at
/// B=4, N=3, d=8, plus the full model-through-loss composite. All entries
/// are expected below 1e-4.
std::vector<Entry> run_suite(std::uint64_t seed, double h = 1e-5);

}  // namespace smile::gradcheck
