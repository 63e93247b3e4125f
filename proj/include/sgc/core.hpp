#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sgc/error.hpp"

namespace sgc {

/// Dense vector of 64-bit floats. Dimension is the length.
using Vec = std::vector<double>;

/// Dense row-major matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }

  Vec row(std::size_t r) const {
    return Vec(data.begin() + static_cast<std::ptrdiff_t>(r * cols),
               data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
};

inline bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline bool all_finite(const Mat& m) { return all_finite(m.data); }

inline void require_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size())
    throw Error(Errc::DimMismatch, std::string(where) + ": " +
                                       std::to_string(a.size()) + " vs " +
                                       std::to_string(b.size()));
}

inline double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

inline Vec l2_normalize(const Vec& v) {
  const double n = norm(v);
  if (n < 1e-12) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

/// Cosine similarity as the dot product of the L2-normalized inputs,
/// clamped into [-1, 1] against round-off.
inline double cosine_sim(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine_sim");
  const double s = dot(l2_normalize(a), l2_normalize(b));
  return std::clamp(s, -1.0, 1.0);
}

inline Vec matvec(const Mat& m, const Vec& v) {
  if (m.cols != v.size())
    throw Error(Errc::DimMismatch, "matvec: " + std::to_string(m.rows) + "x" +
                                       std::to_string(m.cols) + " with vector of dim " +
                                       std::to_string(v.size()));
  Vec out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += m(r, c) * v[c];
    out[r] = s;
  }
  return out;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows)
    throw Error(Errc::DimMismatch, "matmul: " + std::to_string(a.rows) + "x" +
                                       std::to_string(a.cols) + " times " +
                                       std::to_string(b.rows) + "x" +
                                       std::to_string(b.cols));
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

inline Mat transpose(const Mat& m) {
  Mat out(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(c, r) = m(r, c);
  return out;
}

inline Vec mean_of(const std::vector<Vec>& vs) {
  if (vs.empty()) throw Error(Errc::EmptyInput, "mean of no vectors");
  Vec out(vs.front().size(), 0.0);
  for (const Vec& v : vs) {
    require_same_dim(out, v, "mean_of");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  }
  for (double& x : out) x /= static_cast<double>(vs.size());
  return out;
}

}  // namespace sgc
