#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tzsl/errors.hpp"

namespace tzsl {

// Dense row-major matrix. Row vectors are 1 x n, column vectors n x 1.
template <class T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
  Mat(std::size_t r, std::size_t c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw Error("Mat: payload size does not match shape");
  }

  static Mat zeros(std::size_t r, std::size_t c) { return Mat(r, c, T(0)); }
  static Mat full(std::size_t r, std::size_t c, T v) { return Mat(r, c, v); }
  static Mat row_vector(std::vector<T> v) {
    const std::size_t n = v.size();
    return Mat(1, n, std::move(v));
  }

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows) throw Error("matmul: inner dimensions differ");
  Mat<T> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.data.data() + i * a.cols;
    T* orow = out.data.data() + i * b.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = arow[k];
      const T* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <class T>
Mat<T> transpose(const Mat<T>& a) {
  Mat<T> out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

template <class T>
T l2_norm(std::span<const T> v) {
  T s = T(0);
  for (T x : v) s += x * x;
  return std::sqrt(s);
}

template <class T>
T l2_norm(std::span<T> v) {
  return l2_norm(std::span<const T>(v));
}

template <class T>
T squared_distance(std::span<const T> a, std::span<const T> b) {
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

template <class A, class B>
auto squared_distance(A&& a, B&& b) {
  using T = std::remove_const_t<typename std::remove_cvref_t<A>::element_type>;
  return squared_distance(std::span<const T>(a), std::span<const T>(b));
}

// Stack rows of `b` below `a` (column counts must agree).
template <class T>
Mat<T> vstack(const Mat<T>& a, const Mat<T>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols != b.cols) throw Error("vstack: column counts differ");
  Mat<T> out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

template <class T>
Mat<T> hstack(const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows) throw Error("hstack: row counts differ");
  Mat<T> out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
    std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + a.cols);
  }
  return out;
}

template <class T>
Mat<T> take_rows(const Mat<T>& a, std::span<const std::size_t> idx) {
  Mat<T> out(idx.size(), a.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = a.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <class S, class T>
Mat<S> cast_mat(const Mat<T>& a) {
  Mat<S> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = static_cast<S>(a.data[i]);
  return out;
}

}  // namespace tzsl
