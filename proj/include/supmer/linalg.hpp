#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "supmer/rng.hpp"

namespace supmer {

using Vec = std::vector<double>;

/// Dense row-major matrix. Every shape in this project is tens of rows and
/// columns, so plain loops over contiguous storage are all we need.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  Vec row(int r) const {
    return Vec(data.begin() + static_cast<std::size_t>(r) * cols,
               data.begin() + static_cast<std::size_t>(r + 1) * cols);
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("squared_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// y = M x  (M.rows outputs).
inline Vec matvec(const Mat& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.cols) throw std::invalid_argument("matvec: shape mismatch");
  Vec y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

/// y = M^T x  (M.cols outputs).
inline Vec matvec_tr(const Mat& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.rows) throw std::invalid_argument("matvec_tr: shape mismatch");
  Vec y(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
  }
  return y;
}

inline void axpy(double a, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void axpy(double a, const Mat& x, Mat& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] += a * x.data[i];
}

inline double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

/// Cosine of two matrices viewed as flat vectors; 0 if either is ~zero.
inline double cosine_flat(const Mat& a, const Mat& b, double eps = 1e-12) {
  if (!a.same_shape(b)) throw std::invalid_argument("cosine_flat: shape mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ab += a.data[i] * b.data[i];
    aa += a.data[i] * a.data[i];
    bb += b.data[i] * b.data[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na < eps || nb < eps) return 0.0;
  return ab / (na * nb);
}

inline void fill_gaussian(Mat& m, RngStream& rng, double stddev) {
  for (double& v : m.data) v = stddev * rng.gaussian();
}

inline void fill_gaussian(Vec& v, RngStream& rng, double stddev) {
  for (double& x : v) x = stddev * rng.gaussian();
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace supmer
