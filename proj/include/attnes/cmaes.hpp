#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace attnes {

class ByteWriter;
class ByteReader;

struct CmaConfig {
  std::size_t population = 0;  // lambda; 0 selects 4 + floor(3 ln P)
  std::size_t parents = 0;     // mu; 0 selects floor(lambda / 2)
  double sigma0 = 0.1;
  std::uint64_t seed = 0;
};

/// Strategy constants of the canonical (mu/mu_w, lambda) CMA-ES with log-linear weights.
struct CmaParameters {
  std::size_t dim = 0;
  std::size_t lambda = 0;
  std::size_t mu = 0;
  std::vector<double> weights;
  double mueff = 0.0;
  double cs = 0.0;
  double ds = 0.0;
  double cc = 0.0;
  double c1 = 0.0;
  double cmu = 0.0;
  double chi_n = 0.0;
  /// Generations between eigendecompositions: ceil(1 / (10 P (c1 + cmu))).
  std::size_t eigen_interval = 1;

  static CmaParameters make(std::size_t dim, const CmaConfig& config);
};

struct CmaState {
  Eigen::VectorXd mean;
  double sigma = 0.0;
  Eigen::MatrixXd cov;
  Eigen::VectorXd path_sigma;
  Eigen::VectorXd path_c;
  Eigen::MatrixXd basis;   // B, eigenvectors of cov at the last decomposition
  Eigen::VectorXd scales;  // D, sqrt of the eigenvalues
  std::uint64_t generation = 0;
  std::uint64_t eigen_generation = 0;
  std::uint64_t evaluations = 0;
  std::uint64_t nan_fitnesses = 0;
  std::uint64_t eigen_repairs = 0;
};

struct Incumbent {
  std::vector<double> x;
  double fitness = 0.0;
};

/// Maximizing CMA-ES. Fitness is reward-like (higher is better); ranking negates internally.
class CmaEs {
 public:
  CmaEs(std::vector<double> initial_mean, const CmaConfig& config);

  /// Draws lambda candidates mean + sigma * B D z. Refreshes the eigen cache when stale.
  std::vector<std::vector<double>> ask();

  /// Rank-mu/rank-one covariance, cumulative step-size and mean update. NaN fitness ranks
  /// last and is counted in state().nan_fitnesses. Ties keep candidate order.
  void tell(std::span<const std::vector<double>> candidates, std::span<const double> fitness);

  /// Best candidate seen by tell so far. Throws std::logic_error before the first tell.
  const Incumbent& best() const;
  bool has_best() const { return has_best_; }

  const CmaState& state() const { return state_; }
  const CmaParameters& parameters() const { return params_; }
  const CmaConfig& config() const { return config_; }
  std::size_t dim() const { return params_.dim; }

  void save(ByteWriter& out) const;
  static CmaEs load(ByteReader& in);

  bool operator==(const CmaEs& other) const;

 private:
  CmaEs() = default;
  void decompose();

  CmaConfig config_;
  CmaParameters params_;
  CmaState state_;
  std::mt19937_64 rng_;
  Incumbent best_;
  bool has_best_ = false;
};

/// Ordering used by tell: indices by fitness descending, NaN last, stable on ties.
std::vector<std::size_t> rank_descending(std::span<const double> fitness);

namespace serial {

/// Reference for the parallel covariance update: returns
/// (1 - c1 - cmu) C + c1 (pc pc^T + delta C) + cmu sum_k w_k y_k y_k^T.
Eigen::MatrixXd covariance_update(const Eigen::MatrixXd& cov, const Eigen::VectorXd& path_c,
                                  double delta, std::span<const Eigen::VectorXd> steps,
                                  std::span<const double> weights, double c1, double cmu);

}  // namespace serial

/// Parallel version of serial::covariance_update (row-parallel, symmetric by construction).
Eigen::MatrixXd covariance_update(const Eigen::MatrixXd& cov, const Eigen::VectorXd& path_c,
                                  double delta, std::span<const Eigen::VectorXd> steps,
                                  std::span<const double> weights, double c1, double cmu);

}  // namespace attnes
