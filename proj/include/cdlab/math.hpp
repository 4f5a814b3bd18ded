// Dense 64-bit vector/matrix primitives and activations.
//
// Kernels are plain loops over contiguous row-major storage; the compiler is
// left to vectorize them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdlab {

using Vec64 = std::vector<double>;

/// Row-major dense matrix.
struct Mat64 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat64() = default;
  Mat64(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  static Mat64 identity(std::size_t n) {
    Mat64 m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool operator==(const Mat64&) const = default;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double tanh_act(double x) { return std::tanh(x); }

enum class Activation { Sigmoid, Tanh };

inline double activate(Activation act, double x) {
  return act == Activation::Sigmoid ? sigmoid(x) : tanh_act(x);
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Max-subtracted softmax. Throws on empty or non-finite input.
inline Vec64 softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  if (!all_finite(v)) throw std::invalid_argument("softmax: non-finite input");
  const double mx = *std::max_element(v.begin(), v.end());
  Vec64 out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

/// log(sum(exp(v))) with max subtraction.
inline double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

namespace detail {

// Dot product over eight interleaved partial sums combined in a fixed order.
// The lanes are independent, so the compiler can vectorize without changing
// the result, which stays the same on every target.
inline double dot_lanes(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) + tail;
}

}  // namespace detail

// out = m * v (out is overwritten)
inline void matvec_into(const Mat64& m, std::span<const double> v, std::span<double> out) {
  const double* a = m.data.data();
  const std::size_t cols = m.cols;
  for (std::size_t r = 0; r < m.rows; ++r, a += cols) out[r] = detail::dot_lanes(a, v.data(), cols);
}

// out += m * v
inline void matvec_add(const Mat64& m, std::span<const double> v, std::span<double> out) {
  const double* a = m.data.data();
  const std::size_t cols = m.cols;
  for (std::size_t r = 0; r < m.rows; ++r, a += cols) out[r] += detail::dot_lanes(a, v.data(), cols);
}

// out += m^T * v
inline void matvec_t_add(const Mat64& m, std::span<const double> v, std::span<double> out) {
  const double* a = m.data.data();
  const std::size_t cols = m.cols;
  for (std::size_t r = 0; r < m.rows; ++r, a += cols) {
    const double s = v[r];
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += a[c] * s;
  }
}

// m += u v^T
inline void outer_add(Mat64& m, std::span<const double> u, std::span<const double> v) {
  double* a = m.data.data();
  const std::size_t cols = m.cols;
  for (std::size_t r = 0; r < m.rows; ++r, a += cols) {
    const double s = u[r];
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) a[c] += s * v[c];
  }
}

inline Vec64 matvec(const Mat64& m, std::span<const double> v) {
  if (v.size() != m.cols)
    throw std::invalid_argument("matvec: vector length " + std::to_string(v.size()) +
                                " does not match matrix cols " + std::to_string(m.cols));
  Vec64 out(m.rows);
  matvec_into(m, v, out);
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return detail::dot_lanes(a.data(), b.data(), std::min(a.size(), b.size()));
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline Vec64 add(std::span<const double> a, std::span<const double> b) {
  Vec64 out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec64 sub(std::span<const double> a, std::span<const double> b) {
  Vec64 out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace cdlab
