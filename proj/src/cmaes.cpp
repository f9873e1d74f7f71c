#include "attnes/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "attnes/binary_io.hpp"
#include "attnes/core.hpp"

namespace attnes {

namespace {

constexpr char kCmaMagic[] = "ATNSCMA\x01";
constexpr std::uint32_t kCmaFormatVersion = 1;
constexpr double kMinEigenvalue = 1e-20;

void write_vec(ByteWriter& w, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Eigen::VectorXd read_vec(ByteReader& r, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f64();
  return v;
}

}  // namespace

CmaParameters CmaParameters::make(std::size_t dim, const CmaConfig& config) {
  if (dim < 1) throw ConfigError("cmaes: dimension must be >= 1");
  CmaParameters p;
  const double n = static_cast<double>(dim);
  p.dim = dim;
  p.lambda = config.population != 0
                 ? config.population
                 : 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(n)));
  if (p.lambda < 2) throw ConfigError("cmaes: population must be >= 2");
  p.mu = config.parents != 0 ? config.parents : p.lambda / 2;
  if (p.mu < 1 || p.mu > p.lambda) throw ConfigError("cmaes: parent count must be in [1, lambda]");

  p.weights.resize(p.mu);
  const double base = std::log((static_cast<double>(p.lambda) + 1.0) / 2.0);
  for (std::size_t i = 0; i < p.mu; ++i) p.weights[i] = base - std::log(static_cast<double>(i + 1));
  // lambda == 2 with mu == 1 gives a zero weight; fall back to equal weights.
  if (p.weights.back() <= 0.0) std::fill(p.weights.begin(), p.weights.end(), 1.0);
  const double wsum = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  double sq = 0.0;
  for (double& w : p.weights) {
    w /= wsum;
    sq += w * w;
  }
  p.mueff = 1.0 / sq;

  p.cs = (p.mueff + 2.0) / (n + p.mueff + 5.0);
  p.ds = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mueff - 1.0) / (n + 1.0)) - 1.0) + p.cs;
  p.cc = (4.0 + p.mueff / n) / (n + 4.0 + 2.0 * p.mueff / n);
  p.c1 = 2.0 / ((n + 1.3) * (n + 1.3) + p.mueff);
  p.cmu = std::min(1.0 - p.c1,
                   2.0 * (p.mueff - 2.0 + 1.0 / p.mueff) / ((n + 2.0) * (n + 2.0) + p.mueff));
  p.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  p.eigen_interval = static_cast<std::size_t>(
      std::max(1.0, std::ceil(1.0 / (10.0 * n * (p.c1 + p.cmu)))));
  return p;
}

CmaEs::CmaEs(std::vector<double> initial_mean, const CmaConfig& config)
    : config_(config), params_(CmaParameters::make(initial_mean.size(), config)) {
  if (!(config.sigma0 > 0.0) || !std::isfinite(config.sigma0))
    throw ConfigError("cmaes: initial sigma must be positive");
  config_.population = params_.lambda;
  config_.parents = params_.mu;
  const auto n = static_cast<Eigen::Index>(params_.dim);
  state_.mean = Eigen::Map<const Eigen::VectorXd>(initial_mean.data(), n);
  state_.sigma = config.sigma0;
  state_.cov = Eigen::MatrixXd::Identity(n, n);
  state_.path_sigma = Eigen::VectorXd::Zero(n);
  state_.path_c = Eigen::VectorXd::Zero(n);
  state_.basis = Eigen::MatrixXd::Identity(n, n);
  state_.scales = Eigen::VectorXd::Ones(n);
  rng_.seed(config.seed);
}

void CmaEs::decompose() {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(state_.cov);
  if (solver.info() != Eigen::Success) throw NumericError("cmaes: eigendecomposition failed");
  Eigen::VectorXd eig = solver.eigenvalues();
  bool repaired = false;
  for (Eigen::Index i = 0; i < eig.size(); ++i)
    if (!(eig[i] >= kMinEigenvalue)) {
      eig[i] = kMinEigenvalue;
      repaired = true;
    }
  if (repaired) {
    ++state_.eigen_repairs;
    std::cerr << "cmaes: covariance not positive definite at generation " << state_.generation
              << ", clamped eigenvalues to " << kMinEigenvalue << "\n";
  }
  state_.basis = solver.eigenvectors();
  state_.scales = eig.cwiseSqrt();
  state_.eigen_generation = state_.generation;
}

std::vector<std::vector<double>> CmaEs::ask() {
  if (state_.generation - state_.eigen_generation >= params_.eigen_interval) decompose();
  const auto n = static_cast<Eigen::Index>(params_.dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(params_.lambda, std::vector<double>(params_.dim));
  Eigen::VectorXd z(n);
  for (auto& x : out) {
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng_);
    const Eigen::VectorXd y = state_.basis * state_.scales.cwiseProduct(z);
    Eigen::Map<Eigen::VectorXd>(x.data(), n) = state_.mean + state_.sigma * y;
  }
  return out;
}

std::vector<std::size_t> rank_descending(std::span<const double> fitness) {
  std::vector<std::size_t> order(fitness.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na = std::isnan(fitness[a]), nb = std::isnan(fitness[b]);
    if (na || nb) return !na && nb;
    return fitness[a] > fitness[b];
  });
  return order;
}

void CmaEs::tell(std::span<const std::vector<double>> candidates, std::span<const double> fitness) {
  if (candidates.size() != params_.lambda || fitness.size() != params_.lambda)
    throw ConfigError("cmaes: tell expects exactly lambda=" + std::to_string(params_.lambda) +
                      " candidates and fitnesses");
  const auto n = static_cast<Eigen::Index>(params_.dim);
  for (const auto& c : candidates)
    if (c.size() != params_.dim) throw ConfigError("cmaes: candidate has wrong dimension");

  for (std::size_t i = 0; i < fitness.size(); ++i) {
    if (std::isnan(fitness[i])) {
      ++state_.nan_fitnesses;
      continue;
    }
    if (!has_best_ || fitness[i] > best_.fitness) {
      best_.x = candidates[i];
      best_.fitness = fitness[i];
      has_best_ = true;
    }
  }

  const auto order = rank_descending(fitness);
  const Eigen::VectorXd old_mean = state_.mean;
  std::vector<Eigen::VectorXd> steps(params_.mu);
  Eigen::VectorXd ymean = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < params_.mu; ++k) {
    steps[k] = (Eigen::Map<const Eigen::VectorXd>(candidates[order[k]].data(), n) - old_mean) /
               state_.sigma;
    ymean += params_.weights[k] * steps[k];
  }
  state_.mean = old_mean + state_.sigma * ymean;

  // C^{-1/2} ymean through the cached eigenbasis.
  const Eigen::VectorXd white =
      state_.basis * (state_.basis.transpose() * ymean).cwiseQuotient(state_.scales);
  const double cs = params_.cs, cc = params_.cc;
  state_.path_sigma = (1.0 - cs) * state_.path_sigma + std::sqrt(cs * (2.0 - cs) * params_.mueff) * white;

  ++state_.generation;
  const double ps_norm = state_.path_sigma.norm();
  const double ps_bias =
      std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * static_cast<double>(state_.generation)));
  const double n_d = static_cast<double>(params_.dim);
  const bool hsig = ps_norm / ps_bias / params_.chi_n < 1.4 + 2.0 / (n_d + 1.0);

  state_.path_c = (1.0 - cc) * state_.path_c;
  if (hsig) state_.path_c += std::sqrt(cc * (2.0 - cc) * params_.mueff) * ymean;
  const double delta = hsig ? 0.0 : cc * (2.0 - cc);

  state_.cov = covariance_update(state_.cov, state_.path_c, delta, steps, params_.weights,
                                 params_.c1, params_.cmu);
  state_.sigma *= std::exp((cs / params_.ds) * (ps_norm / params_.chi_n - 1.0));
  if (!(state_.sigma > 0.0) || !std::isfinite(state_.sigma))
    throw NumericError("cmaes: step size left (0, inf)");
  state_.evaluations += params_.lambda;
}

const Incumbent& CmaEs::best() const {
  if (!has_best_) throw std::logic_error("cmaes: no evaluated candidate yet (call tell first)");
  return best_;
}

Eigen::MatrixXd covariance_update(const Eigen::MatrixXd& cov, const Eigen::VectorXd& path_c,
                                  double delta, std::span<const Eigen::VectorXd> steps,
                                  std::span<const double> weights, double c1, double cmu) {
  const Eigen::Index n = cov.rows();
  const double keep = 1.0 - c1 - cmu + c1 * delta;
  Eigen::MatrixXd out(n, n);
#pragma omp parallel for schedule(dynamic, 16) if (n >= 128)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double rank_mu = 0.0;
      for (std::size_t k = 0; k < steps.size(); ++k) rank_mu += weights[k] * steps[k][i] * steps[k][j];
      out(i, j) = keep * cov(i, j) + c1 * path_c[i] * path_c[j] + cmu * rank_mu;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out(i, j) = out(j, i);
  return out;
}

namespace serial {

Eigen::MatrixXd covariance_update(const Eigen::MatrixXd& cov, const Eigen::VectorXd& path_c,
                                  double delta, std::span<const Eigen::VectorXd> steps,
                                  std::span<const double> weights, double c1, double cmu) {
  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  for (std::size_t k = 0; k < steps.size(); ++k)
    rank_mu += weights[k] * steps[k] * steps[k].transpose();
  return (1.0 - c1 - cmu) * cov + c1 * (path_c * path_c.transpose() + delta * cov) + cmu * rank_mu;
}

}  // namespace serial

void CmaEs::save(ByteWriter& w) const {
  const auto n = static_cast<Eigen::Index>(params_.dim);
  w.raw(std::string_view(kCmaMagic, 8));
  w.u32(kCmaFormatVersion);
  w.u64(params_.dim);
  w.u64(config_.population);
  w.u64(config_.parents);
  w.f64(config_.sigma0);
  w.u64(config_.seed);
  w.u64(state_.generation);
  w.u64(state_.eigen_generation);
  w.u64(state_.evaluations);
  w.u64(state_.nan_fitnesses);
  w.u64(state_.eigen_repairs);
  w.f64(state_.sigma);
  write_vec(w, state_.mean);
  write_vec(w, state_.path_sigma);
  write_vec(w, state_.path_c);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) w.f64(state_.cov(i, j));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) w.f64(state_.basis(i, j));
  write_vec(w, state_.scales);
  std::ostringstream rng_text;
  rng_text << rng_;
  w.str(rng_text.str());
  w.u8(has_best_ ? 1 : 0);
  if (has_best_) {
    w.f64(best_.fitness);
    for (double v : best_.x) w.f64(v);
  }
}

CmaEs CmaEs::load(ByteReader& r) {
  if (r.raw(8) != std::string_view(kCmaMagic, 8)) throw CodecError("not an optimizer checkpoint");
  if (const auto v = r.u32(); v != kCmaFormatVersion)
    throw CodecError("unsupported optimizer format version " + std::to_string(v));
  CmaEs es;
  const std::size_t dim = r.u64();
  es.config_.population = r.u64();
  es.config_.parents = r.u64();
  es.config_.sigma0 = r.f64();
  es.config_.seed = r.u64();
  es.params_ = CmaParameters::make(dim, es.config_);
  const auto n = static_cast<Eigen::Index>(dim);
  CmaState& s = es.state_;
  s.generation = r.u64();
  s.eigen_generation = r.u64();
  s.evaluations = r.u64();
  s.nan_fitnesses = r.u64();
  s.eigen_repairs = r.u64();
  s.sigma = r.f64();
  s.mean = read_vec(r, dim);
  s.path_sigma = read_vec(r, dim);
  s.path_c = read_vec(r, dim);
  s.cov.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) s.cov(i, j) = s.cov(j, i) = r.f64();
  s.basis.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s.basis(i, j) = r.f64();
  s.scales = read_vec(r, dim);
  std::istringstream rng_text(r.str());
  rng_text >> es.rng_;
  if (!rng_text) throw CodecError("optimizer checkpoint: corrupt generator state");
  es.has_best_ = r.u8() != 0;
  if (es.has_best_) {
    es.best_.fitness = r.f64();
    es.best_.x.resize(dim);
    for (double& v : es.best_.x) v = r.f64();
  }
  return es;
}

bool CmaEs::operator==(const CmaEs& o) const {
  const CmaState &a = state_, &b = o.state_;
  return params_.dim == o.params_.dim && config_.population == o.config_.population &&
         config_.parents == o.config_.parents && config_.sigma0 == o.config_.sigma0 &&
         config_.seed == o.config_.seed && a.mean == b.mean && a.sigma == b.sigma &&
         a.cov == b.cov && a.path_sigma == b.path_sigma && a.path_c == b.path_c &&
         a.basis == b.basis && a.scales == b.scales && a.generation == b.generation &&
         a.eigen_generation == b.eigen_generation && a.evaluations == b.evaluations &&
         a.nan_fitnesses == b.nan_fitnesses && rng_ == o.rng_ && has_best_ == o.has_best_ &&
         (!has_best_ || (best_.x == o.best_.x && best_.fitness == o.best_.fitness));
}

}  // namespace attnes
