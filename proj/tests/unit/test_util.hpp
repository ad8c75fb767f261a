#pragma once

#include <Eigen/Core>

#include <random>
#include <string>
#include <vector>

namespace demotraj::test {

inline std::string source_path(const std::string& rel) { return std::string(DEMOTRAJ_SOURCE_DIR) + "/" + rel; }

inline std::vector<Eigen::VectorXd> random_points(std::mt19937& rng, int count, int dim, double lo = -1.0,
                                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd p(dim);
    for (int j = 0; j < dim; ++j) p[j] = u(rng);
    out.push_back(p);
  }
  return out;
}

}  // namespace demotraj::test
