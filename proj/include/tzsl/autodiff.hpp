#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"

namespace tzsl {

// Handle into a Graph. Only meaningful together with the graph that issued it.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Eager reverse-mode tape over matrices.
//
// Every operation computes its value immediately and records how to push a
// cotangent back to its parents. Backward passes emit ordinary graph nodes,
// so the result of gradients() is itself differentiable; that is what makes
// the WGAN gradient penalty (a function of an input gradient) trainable.
// Piecewise-constant factors (leaky-rectifier masks, abs signs) are recorded
// as constants, i.e. second derivatives through them are zero almost
// everywhere.
template <class T>
class Graph {
  enum class Op : unsigned char {
    kLeaf,
    kConst,
    kMatmul,
    kTranspose,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kScale,      // scalar * a
    kAddScalar,  // a + scalar
    kExp,
    kLog,
    kSqrt,
    kAbs,
    kLeakyRelu,
    kSum,            // all entries -> 1x1
    kSumRows,        // sum over row index -> 1 x cols
    kSumCols,        // sum over col index -> rows x 1
    kBroadcastRows,  // 1 x c -> n x c
    kBroadcastCols,  // r x 1 -> r x n
    kConcatCols,
    kSliceCols,
    kPadCols,  // place a into zero matrix of `extent` cols at offset j0
  };

  struct Node {
    Mat<T> value;
    Op op = Op::kConst;
    int a = -1;
    int b = -1;
    T scalar = T(0);
    std::size_t j0 = 0;
    std::size_t extent = 0;
    bool requires_grad = false;
  };

 public:
  Var leaf(Mat<T> v) { return push(std::move(v), Op::kLeaf, -1, -1, true); }
  Var constant(Mat<T> v) { return push(std::move(v), Op::kConst, -1, -1, false); }
  Var scalar_const(T v) { return constant(Mat<T>::full(1, 1, v)); }

  const Mat<T>& value(Var v) const { return nodes_[check(v)].value; }
  std::size_t num_nodes() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  Var matmul(Var a, Var b) {
    return push(tzsl::matmul(value(a), value(b)), Op::kMatmul, a.idx, b.idx, grad2(a, b));
  }

  Var transpose(Var a) {
    return push(tzsl::transpose(value(a)), Op::kTranspose, a.idx, -1, grad1(a));
  }

  Var add(Var a, Var b) { return ew(a, b, Op::kAdd); }
  Var sub(Var a, Var b) { return ew(a, b, Op::kSub); }
  Var mul(Var a, Var b) { return ew(a, b, Op::kMul); }
  Var div(Var a, Var b) { return ew(a, b, Op::kDiv); }

  Var scale(Var a, T s) {
    Mat<T> out = value(a);
    for (auto& v : out.data) v *= s;
    return push(std::move(out), Op::kScale, a.idx, -1, grad1(a), s);
  }

  Var add_scalar(Var a, T s) {
    Mat<T> out = value(a);
    for (auto& v : out.data) v += s;
    return push(std::move(out), Op::kAddScalar, a.idx, -1, grad1(a), s);
  }

  Var neg(Var a) { return scale(a, T(-1)); }

  Var exp(Var a) {
    Mat<T> out = value(a);
    for (auto& v : out.data) v = std::exp(v);
    return push(std::move(out), Op::kExp, a.idx, -1, grad1(a));
  }

  Var log(Var a) {
    Mat<T> out = value(a);
    for (auto& v : out.data) v = std::log(v);
    return push(std::move(out), Op::kLog, a.idx, -1, grad1(a));
  }

  Var sqrt(Var a) {
    Mat<T> out = value(a);
    for (auto& v : out.data) v = std::sqrt(v);
    return push(std::move(out), Op::kSqrt, a.idx, -1, grad1(a));
  }

  Var abs(Var a) {
    Mat<T> out = value(a);
    for (auto& v : out.data) v = std::abs(v);
    return push(std::move(out), Op::kAbs, a.idx, -1, grad1(a));
  }

  Var leaky_relu(Var a, T slope) {
    Mat<T> out = value(a);
    for (auto& v : out.data)
      if (v < T(0)) v *= slope;
    return push(std::move(out), Op::kLeakyRelu, a.idx, -1, grad1(a), slope);
  }

  Var sum(Var a) {
    T s = T(0);
    for (const T& v : value(a).data) s += v;
    return push(Mat<T>::full(1, 1, s), Op::kSum, a.idx, -1, grad1(a));
  }

  Var sum_rows(Var a) {
    const Mat<T>& m = value(a);
    Mat<T> out(1, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) out(0, j) += m(i, j);
    return push(std::move(out), Op::kSumRows, a.idx, -1, grad1(a));
  }

  Var sum_cols(Var a) {
    const Mat<T>& m = value(a);
    Mat<T> out(m.rows, 1);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) out(i, 0) += m(i, j);
    return push(std::move(out), Op::kSumCols, a.idx, -1, grad1(a));
  }

  Var broadcast_rows(Var a, std::size_t n) {
    const Mat<T>& m = value(a);
    if (m.rows != 1) throw Error("broadcast_rows: expected a 1 x c input");
    Mat<T> out(n, m.cols);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(m.data.begin(), m.data.end(), out.row(i).begin());
    return push(std::move(out), Op::kBroadcastRows, a.idx, -1, grad1(a));
  }

  Var broadcast_cols(Var a, std::size_t n) {
    const Mat<T>& m = value(a);
    if (m.cols != 1) throw Error("broadcast_cols: expected an r x 1 input");
    Mat<T> out(m.rows, n);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) = m(i, 0);
    return push(std::move(out), Op::kBroadcastCols, a.idx, -1, grad1(a));
  }

  Var concat_cols(Var a, Var b) {
    return push(hstack(value(a), value(b)), Op::kConcatCols, a.idx, b.idx, grad2(a, b));
  }

  Var slice_cols(Var a, std::size_t j0, std::size_t j1) {
    const Mat<T>& m = value(a);
    if (j1 > m.cols || j0 >= j1) throw Error("slice_cols: bad range");
    Mat<T> out(m.rows, j1 - j0);
    for (std::size_t i = 0; i < m.rows; ++i)
      std::copy(m.row(i).begin() + j0, m.row(i).begin() + j1, out.row(i).begin());
    Var v = push(std::move(out), Op::kSliceCols, a.idx, -1, grad1(a));
    nodes_[v.idx].j0 = j0;
    nodes_[v.idx].extent = m.cols;
    return v;
  }

  Var pad_cols(Var a, std::size_t j0, std::size_t total_cols) {
    const Mat<T>& m = value(a);
    if (j0 + m.cols > total_cols) throw Error("pad_cols: range exceeds extent");
    Mat<T> out(m.rows, total_cols);
    for (std::size_t i = 0; i < m.rows; ++i)
      std::copy(m.row(i).begin(), m.row(i).end(), out.row(i).begin() + j0);
    Var v = push(std::move(out), Op::kPadCols, a.idx, -1, grad1(a));
    nodes_[v.idx].j0 = j0;
    nodes_[v.idx].extent = total_cols;
    return v;
  }

  // ---- composites -------------------------------------------------------

  Var square(Var a) { return mul(a, a); }

  Var mean_all(Var a) {
    const std::size_t n = value(a).size();
    return scale(sum(a), T(1) / static_cast<T>(n));
  }

  // Per-row euclidean norms as an r x 1 column.
  Var row_norms(Var a) { return sqrt(sum_cols(square(a))); }

  // Rescale every row to euclidean norm `radius`. Degenerate rows are a
  // modeling failure, not a numeric accident, so they raise.
  Var rows_l2_normalize(Var a, T radius) {
    Var norms = row_norms(a);
    const Mat<T>& n = value(norms);
    for (const T& v : n.data)
      if (!(static_cast<double>(v) > 1e-20))
        throw NumericError("l2 normalization hit a (near-)zero-norm row");
    return scale(div(a, broadcast_cols(norms, value(a).cols)), radius);
  }

  Var sigmoid(Var a) {
    // 1 / (1 + exp(-a))
    return div(constant(Mat<T>::full(value(a).rows, value(a).cols, T(1))),
               add_scalar(exp(neg(a)), T(1)));
  }

  // d(out)/d(each wrt): emits graph nodes, so results stay differentiable.
  std::vector<Var> gradients(Var out, const std::vector<Var>& wrt) {
    const Node& yn = nodes_[check(out)];
    if (yn.value.rows != 1 || yn.value.cols != 1)
      throw Error("gradients: output must be a 1x1 scalar");
    std::unordered_map<int, Var> cot;
    cot.emplace(out.idx, scalar_const(T(1)));
    for (int i = out.idx; i >= 0; --i) {
      auto it = cot.find(i);
      if (it == cot.end()) continue;
      // Copy: pushes below may reallocate the node pool.
      const Op op = nodes_[i].op;
      if (op == Op::kLeaf || op == Op::kConst) continue;
      if (!nodes_[i].requires_grad) continue;
      backward_one(i, it->second, cot);
    }
    std::vector<Var> result;
    result.reserve(wrt.size());
    for (Var x : wrt) {
      auto it = cot.find(check(x));
      if (it != cot.end()) {
        result.push_back(it->second);
      } else {
        result.push_back(constant(Mat<T>::zeros(value(x).rows, value(x).cols)));
      }
    }
    return result;
  }

  Var gradient(Var out, Var wrt) { return gradients(out, {wrt})[0]; }

 private:
  std::vector<Node> nodes_;

  int check(Var v) const {
    if (!v.valid() || v.idx >= static_cast<int>(nodes_.size())) throw Error("Var: bad handle");
    return v.idx;
  }

  bool grad1(Var a) { return nodes_[check(a)].requires_grad; }
  bool grad2(Var a, Var b) { return grad1(a) || grad1(b); }

  Var push(Mat<T> v, Op op, int a, int b, bool rg, T scalar = T(0)) {
    Node n;
    n.value = std::move(v);
    n.op = op;
    n.a = a;
    n.b = b;
    n.scalar = scalar;
    n.requires_grad = rg;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var ew(Var a, Var b, Op op) {
    const Mat<T>& x = value(a);
    const Mat<T>& y = value(b);
    if (!x.same_shape(y)) throw Error("elementwise op: shape mismatch");
    Mat<T> out(x.rows, x.cols);
    switch (op) {
      case Op::kAdd:
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] + y.data[i];
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] - y.data[i];
        break;
      case Op::kMul:
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * y.data[i];
        break;
      case Op::kDiv:
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] / y.data[i];
        break;
      default:
        throw Error("ew: not an elementwise op");
    }
    return push(std::move(out), op, a.idx, b.idx, grad2(a, b));
  }

  void accumulate(std::unordered_map<int, Var>& cot, int parent, Var contribution) {
    if (parent < 0 || !nodes_[parent].requires_grad) return;
    auto it = cot.find(parent);
    if (it == cot.end()) {
      cot.emplace(parent, contribution);
    } else {
      it->second = add(it->second, contribution);
    }
  }

  void backward_one(int i, Var g, std::unordered_map<int, Var>& cot) {
    // Snapshot node metadata; node pool may grow below.
    const Op op = nodes_[i].op;
    const int pa = nodes_[i].a;
    const int pb = nodes_[i].b;
    const T sc = nodes_[i].scalar;
    const std::size_t j0 = nodes_[i].j0;
    const std::size_t extent = nodes_[i].extent;
    const Var va{pa}, vb{pb}, self{i};

    switch (op) {
      case Op::kMatmul:
        accumulate(cot, pa, matmul(g, transpose(vb)));
        accumulate(cot, pb, matmul(transpose(va), g));
        break;
      case Op::kTranspose:
        accumulate(cot, pa, transpose(g));
        break;
      case Op::kAdd:
        accumulate(cot, pa, g);
        accumulate(cot, pb, g);
        break;
      case Op::kSub:
        accumulate(cot, pa, g);
        accumulate(cot, pb, neg(g));
        break;
      case Op::kMul:
        accumulate(cot, pa, mul(g, vb));
        accumulate(cot, pb, mul(g, va));
        break;
      case Op::kDiv:
        accumulate(cot, pa, div(g, vb));
        accumulate(cot, pb, neg(div(mul(g, va), mul(vb, vb))));
        break;
      case Op::kScale:
        accumulate(cot, pa, scale(g, sc));
        break;
      case Op::kAddScalar:
        accumulate(cot, pa, g);
        break;
      case Op::kExp:
        accumulate(cot, pa, mul(g, self));
        break;
      case Op::kLog:
        accumulate(cot, pa, div(g, va));
        break;
      case Op::kSqrt:
        accumulate(cot, pa, scale(div(g, self), T(0.5)));
        break;
      case Op::kAbs: {
        Mat<T> sign = nodes_[pa].value;
        for (auto& v : sign.data) v = v < T(0) ? T(-1) : T(1);
        accumulate(cot, pa, mul(g, constant(std::move(sign))));
        break;
      }
      case Op::kLeakyRelu: {
        Mat<T> mask = nodes_[pa].value;
        for (auto& v : mask.data) v = v < T(0) ? sc : T(1);
        accumulate(cot, pa, mul(g, constant(std::move(mask))));
        break;
      }
      case Op::kSum: {
        const std::size_t r = nodes_[pa].value.rows, c = nodes_[pa].value.cols;
        accumulate(cot, pa, broadcast_rows(broadcast_cols(g, c), r));
        break;
      }
      case Op::kSumRows:
        accumulate(cot, pa, broadcast_rows(g, nodes_[pa].value.rows));
        break;
      case Op::kSumCols:
        accumulate(cot, pa, broadcast_cols(g, nodes_[pa].value.cols));
        break;
      case Op::kBroadcastRows:
        accumulate(cot, pa, sum_rows(g));
        break;
      case Op::kBroadcastCols:
        accumulate(cot, pa, sum_cols(g));
        break;
      case Op::kConcatCols: {
        const std::size_t ca = nodes_[pa].value.cols;
        const std::size_t cb = nodes_[pb].value.cols;
        accumulate(cot, pa, slice_cols(g, 0, ca));
        accumulate(cot, pb, slice_cols(g, ca, ca + cb));
        break;
      }
      case Op::kSliceCols:
        accumulate(cot, pa, pad_cols(g, j0, extent));
        break;
      case Op::kPadCols:
        accumulate(cot, pa, slice_cols(g, j0, j0 + nodes_[pa].value.cols));
        break;
      case Op::kLeaf:
      case Op::kConst:
        break;
    }
  }
};

}  // namespace tzsl
