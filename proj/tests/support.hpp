#pragma once
// Small drivers shared by the unit and acceptance tests.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "attnes/cmaes.hpp"

namespace support {

struct MinimizeResult {
  double best = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
};

// Runs CMA-ES on -f until best f < target or the evaluation budget runs out.
inline MinimizeResult minimize(const std::function<double(const std::vector<double>&)>& f,
                               std::vector<double> x0, attnes::CmaConfig cfg, double target,
                               std::size_t budget) {
  attnes::CmaEs es(std::move(x0), cfg);
  MinimizeResult r;
  while (r.evaluations < budget && r.best >= target) {
    const auto pop = es.ask();
    std::vector<double> fit(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const double v = f(pop[i]);
      fit[i] = -v;
      if (v < r.best) r.best = v;
    }
    r.evaluations += pop.size();
    es.tell(pop, fit);
  }
  return r;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("attnes_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace support
