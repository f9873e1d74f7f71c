#include "attnes/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace attnes {

namespace {

// Below this many patches the OpenMP fork costs more than the work.
constexpr std::size_t kParallelRows = 64;

void check_finite(const Matrix& m, const char* name) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c)))
        throw NumericError(std::string("non-finite value in ") + name + "(" + std::to_string(r) +
                           "," + std::to_string(c) + ")");
}

void check_finite(std::span<const double> v, const char* name) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw NumericError(std::string("non-finite value in ") + name + "[" + std::to_string(i) +
                         "]");
}

void check_inputs(const Matrix& x, const AttentionParams& p) {
  if (p.dim() == 0) throw ConfigError("attention: projection dimension d must be >= 1");
  if (x.cols() != p.input_dim() || p.key_weight.rows() != p.input_dim() ||
      p.key_weight.cols() != p.dim() || p.query_bias.size() != p.dim() ||
      p.key_bias.size() != p.dim())
    throw ConfigError("attention: shape mismatch between X (" + std::to_string(x.rows()) + "x" +
                      std::to_string(x.cols()) + ") and projections (" +
                      std::to_string(p.input_dim()) + "x" + std::to_string(p.dim()) + ")");
  check_finite(x, "X");
  check_finite(p.query_weight, "W_q");
  check_finite(p.query_bias, "b_q");
  check_finite(p.key_weight, "W_k");
  check_finite(p.key_bias, "b_k");
}

Matrix project(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  const std::size_t n = x.rows(), din = x.cols(), d = w.cols();
  Matrix out(n, d);
#pragma omp parallel for schedule(static) if (n >= kParallelRows)
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    for (std::size_t c = 0; c < d; ++c) o[c] = b[c];
    const double* xi = x.row(i).data();
    for (std::size_t k = 0; k < din; ++k) {
      const double xv = xi[k];
      const double* wk = w.row(k).data();
      for (std::size_t c = 0; c < d; ++c) o[c] += xv * wk[c];
    }
  }
  return out;
}

void softmax_inplace(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : row) v *= inv;
}

}  // namespace

PatchGrid PatchGrid::make(int input_size, int window, int stride) {
  if (input_size < 1 || window < 1) throw ConfigError("PatchGrid: L and M must be >= 1");
  if (window > input_size)
    throw ConfigError("PatchGrid: window M=" + std::to_string(window) + " exceeds input L=" +
                      std::to_string(input_size));
  if (stride < 1) throw ConfigError("PatchGrid: stride S must be >= 1");
  PatchGrid g;
  g.input_size = input_size;
  g.window = window;
  g.stride = stride;
  g.rows = g.cols = (input_size - window) / stride + 1;
  return g;
}

AttentionParams AttentionParams::zeros(std::size_t input_dim, std::size_t dim) {
  return {Matrix(input_dim, dim), std::vector<double>(dim), Matrix(input_dim, dim),
          std::vector<double>(dim)};
}

Matrix patchify(const Frame& frame, const PatchGrid& grid) {
  if (frame.height != grid.input_size || frame.width != grid.input_size)
    throw ConfigError("patchify: frame is " + std::to_string(frame.height) + "x" +
                      std::to_string(frame.width) + ", grid expects " +
                      std::to_string(grid.input_size) + "x" + std::to_string(grid.input_size));
  const int m = grid.window;
  Matrix x(grid.count(), grid.patch_dim());
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      double* out = x.row(static_cast<std::size_t>(r) * grid.cols + c).data();
      const int y0 = r * grid.stride, x0 = c * grid.stride;
      for (int dy = 0; dy < m; ++dy) {
        const float* src = &frame.pixels[(static_cast<std::size_t>(y0 + dy) * frame.width + x0) * 3];
        for (int k = 0; k < m * 3; ++k) *out++ = src[k];
      }
    }
  }
  return x;
}

Matrix attention_matrix(const Matrix& x, const AttentionParams& params) {
  check_inputs(x, params);
  const std::size_t n = x.rows(), d = params.dim();
  const Matrix keys = project(x, params.key_weight, params.key_bias);
  const Matrix queries = project(x, params.query_weight, params.query_bias);
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  Matrix a(n, n);
#pragma omp parallel for schedule(static) if (n >= kParallelRows)
  for (std::size_t i = 0; i < n; ++i) {
    const double* ki = keys.row(i).data();
    std::span<double> out = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* qj = queries.row(j).data();
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += ki[c] * qj[c];
      out[j] = scale * s;
    }
    softmax_inplace(out);
  }
  return a;
}

Matrix weighted_output(const Matrix& attention, const Matrix& x) {
  if (attention.rows() != attention.cols() || attention.cols() != x.rows())
    throw ConfigError("weighted_output: A must be N x N with N = rows of X");
  const std::size_t n = x.rows(), din = x.cols();
  Matrix y(n, din);
#pragma omp parallel for schedule(static) if (n >= kParallelRows)
  for (std::size_t i = 0; i < n; ++i) {
    double* yi = y.row(i).data();
    for (std::size_t k = 0; k < n; ++k) {
      const double w = attention(i, k);
      const double* xk = x.row(k).data();
      for (std::size_t c = 0; c < din; ++c) yi[c] += w * xk[c];
    }
  }
  return y;
}

std::vector<double> importance_vector(const Matrix& attention) {
  if (attention.rows() != attention.cols())
    throw ConfigError("importance_vector: attention matrix must be square");
  const std::size_t n = attention.rows();
  std::vector<double> votes(n, 0.0);
  // Row-order accumulation keeps the result identical to the serial kernel.
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = attention.row(i).data();
    for (std::size_t j = 0; j < n; ++j) votes[j] += ai[j];
  }
  return votes;
}

std::vector<int> select_top_k(std::span<const double> importance, std::size_t k) {
  const std::size_t n = importance.size();
  if (k < 1 || k > n)
    throw ConfigError("select_top_k: K=" + std::to_string(k) + " must be in [1, " +
                      std::to_string(n) + "]");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](int a, int b) {
                      if (importance[a] != importance[b]) return importance[a] > importance[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

std::vector<PatchCenter> patch_centers(std::span<const int> indices, const PatchGrid& grid) {
  const double half = (grid.window - 1) / 2.0;
  const double row_max = (grid.rows - 1) * grid.stride + half;
  const double col_max = (grid.cols - 1) * grid.stride + half;
  const auto n = static_cast<int>(grid.count());
  std::vector<PatchCenter> out;
  out.reserve(indices.size());
  for (int k : indices) {
    if (k < 0 || k >= n)
      throw ConfigError("patch_centers: index " + std::to_string(k) + " outside [0, " +
                        std::to_string(n) + ")");
    const int r = k / grid.cols, c = k % grid.cols;
    PatchCenter p;
    p.row = grid.rows > 1 ? (r * grid.stride + half) / row_max : 0.0;
    p.col = grid.cols > 1 ? (c * grid.stride + half) / col_max : 0.0;
    out.push_back(p);
  }
  return out;
}

AttentionOutcome attend(const Frame& frame, const PatchGrid& grid, const AttentionParams& params,
                        std::size_t top_k) {
  AttentionOutcome out;
  out.attention = attention_matrix(patchify(frame, grid), params);
  out.importance = importance_vector(out.attention);
  out.selected = select_top_k(out.importance, top_k);
  out.centers = patch_centers(out.selected, grid);
  return out;
}

std::vector<double> flatten_centers(std::span<const PatchCenter> centers) {
  std::vector<double> f;
  f.reserve(centers.size() * 2);
  for (const auto& p : centers) {
    f.push_back(p.row);
    f.push_back(p.col);
  }
  return f;
}

namespace serial {

Matrix attention_matrix(const Matrix& x, const AttentionParams& params) {
  check_inputs(x, params);
  const std::size_t n = x.rows(), din = x.cols(), d = params.dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(din));
  Matrix keys(n, d), queries(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double kv = params.key_bias[c], qv = params.query_bias[c];
      for (std::size_t k = 0; k < din; ++k) {
        kv += x(i, k) * params.key_weight(k, c);
        qv += x(i, k) * params.query_weight(k, c);
      }
      keys(i, c) = kv;
      queries(i, c) = qv;
    }
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += keys(i, c) * queries(j, c);
      a(i, j) = scale * s;
    }
    softmax_inplace(a.row(i));
  }
  return a;
}

Matrix weighted_output(const Matrix& attention, const Matrix& x) {
  if (attention.rows() != attention.cols() || attention.cols() != x.rows())
    throw ConfigError("weighted_output: A must be N x N with N = rows of X");
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.rows(); ++k) s += attention(i, k) * x(k, c);
      y(i, c) = s;
    }
  return y;
}

std::vector<double> importance_vector(const Matrix& attention) {
  if (attention.rows() != attention.cols())
    throw ConfigError("importance_vector: attention matrix must be square");
  std::vector<double> votes(attention.cols(), 0.0);
  for (std::size_t i = 0; i < attention.rows(); ++i)
    for (std::size_t j = 0; j < attention.cols(); ++j) votes[j] += attention(i, j);
  return votes;
}

}  // namespace serial

}  // namespace attnes
