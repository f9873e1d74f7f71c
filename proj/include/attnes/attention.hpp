#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "attnes/core.hpp"

namespace attnes {

/// Sliding-window geometry over a square input of side L.
struct PatchGrid {
  int input_size = 0;  // L
  int window = 0;      // M
  int stride = 0;      // S
  int rows = 0;
  int cols = 0;

  /// Validates M <= L, S >= 1 and derives rows = cols = floor((L - M) / S) + 1.
  static PatchGrid make(int input_size, int window, int stride);

  std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
  std::size_t patch_dim() const { return static_cast<std::size_t>(window) * window * 3; }

  bool operator==(const PatchGrid&) const = default;
};

/// Query and Key projections, d_in x d each, with one bias vector per projection.
struct AttentionParams {
  Matrix query_weight;
  std::vector<double> query_bias;
  Matrix key_weight;
  std::vector<double> key_bias;

  static AttentionParams zeros(std::size_t input_dim, std::size_t dim);

  std::size_t input_dim() const { return query_weight.rows(); }
  std::size_t dim() const { return query_weight.cols(); }
  /// d_in * d + d
  std::size_t params_per_projection() const { return input_dim() * dim() + dim(); }

  bool operator==(const AttentionParams&) const = default;
};

struct PatchCenter {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const PatchCenter&) const = default;
};

struct AttentionOutcome {
  Matrix attention;                 // N x N, row-stochastic
  std::vector<double> importance;   // column sums of attention
  std::vector<int> selected;        // K indices, importance-descending
  std::vector<PatchCenter> centers; // normalized, same order as selected
};

/// Row i is the row-major (y, x, channel) flattening of window i; windows are
/// enumerated row-major over the grid.
Matrix patchify(const Frame& frame, const PatchGrid& grid);

/// A = rowSoftmax((X Wk + bk)(X Wq + bq)^T / sqrt(d_in)) with per-row max subtraction.
/// Rows are computed in parallel; throws NumericError naming the first non-finite entry.
Matrix attention_matrix(const Matrix& x, const AttentionParams& params);

/// Y = A X.
Matrix weighted_output(const Matrix& attention, const Matrix& x);

/// importance[j] = sum_i A[i][j]: the votes patch j receives.
std::vector<double> importance_vector(const Matrix& attention);

/// The k highest-importance indices, importance-descending, ties by ascending index.
std::vector<int> select_top_k(std::span<const double> importance, std::size_t k);

/// Pixel centre (r*S + (M-1)/2, c*S + (M-1)/2) of each patch divided by the largest
/// attainable centre coordinate. A grid with a single patch per axis maps to 0.
std::vector<PatchCenter> patch_centers(std::span<const int> indices, const PatchGrid& grid);

/// Full perception step: patchify, vote, select, and retrieve centres.
AttentionOutcome attend(const Frame& frame, const PatchGrid& grid, const AttentionParams& params,
                        std::size_t top_k);

/// Flattens centres as (row0, col0, row1, col1, ...), the controller's input layout.
std::vector<double> flatten_centers(std::span<const PatchCenter> centers);

namespace serial {

// Single-threaded reference kernels, kept for testing and benchmarking.
Matrix attention_matrix(const Matrix& x, const AttentionParams& params);
Matrix weighted_output(const Matrix& attention, const Matrix& x);
std::vector<double> importance_vector(const Matrix& attention);

}  // namespace serial

}  // namespace attnes
