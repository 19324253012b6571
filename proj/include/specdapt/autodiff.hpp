/*
 * Copyright 2026 The specdapt Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Tape-based reverse-mode automatic differentiation over dense double tensors.
//
// A Graph records every op in creation order, which is also a topological
// order, so backward() is a single reverse sweep. Only the layer set needed by
// the spectral classifiers is provided. Matrix products go through Eigen.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "specdapt/core.hpp"

namespace specdapt::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), values(numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    require(values.size() == numel(shape), "tensor value count does not match shape " +
                                               shape_str(shape));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }

  bool operator==(const Tensor&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

// Named parameters in insertion order. Frozen (non-trainable) parameters are
// never differentiated and never updated.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other) : params_(other.params_), index_(other.index_) {}
  ParamStore& operator=(const ParamStore& other) {
    params_ = other.params_;
    index_ = other.index_;
    return *this;
  }
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter& add(const std::string& name, Tensor value, bool trainable = true) {
    require(!name.empty(), "parameter name must not be empty");
    require(!index_.contains(name), "duplicate parameter name '" + name + "'");
    index_[name] = params_.size();
    Tensor grad(value.shape, 0.0);
    params_.push_back({name, std::move(value), std::move(grad), trainable});
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter& at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '" + name + "'");
    return params_[it->second];
  }

  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.values.begin(), p.grad.values.end(), 0.0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  bool values_equal(const ParamStore& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name != other.params_[i].name || params_[i].value != other.params_[i].value)
        return false;
    return true;
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  std::size_t id() const { return id_; }

 private:
  friend class Graph;
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = static_cast<std::size_t>(-1);
};

enum class Padding { kValid, kSame };

inline constexpr double kInvSqrt2 = 0.7071067811865476;
enum class Reduction { kMean, kSum };

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values)
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value produced by ") + op);
}
}  // namespace detail

class Graph {
 public:
  // Leaf holding data. Set requires_grad to request d(loss)/d(input).
  Var input(Tensor t, bool requires_grad = false) {
    detail::check_finite(t, "input");
    return push(std::move(t), requires_grad, {});
  }

  // Leaf bound to a parameter; its gradient is accumulated into p.grad by
  // backward() when the parameter is trainable.
  Var param(Parameter& p) {
    Var v = push(p.value, p.trainable, {});
    nodes_[v.id_].param = &p;
    return v;
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  const Tensor& grad(Var v) const {
    const Node& n = nodes_.at(v.id_);
    require(!n.grad.values.empty() || n.value.values.empty(),
            "no gradient recorded for this node");
    return n.grad;
  }
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Parameter gradients are added to the
  // bound Parameter::grad (callers zero them between steps).
  double backward(Var loss) {
    Node& root = nodes_.at(loss.id_);
    require(root.value.size() == 1, "backward() needs a scalar loss, got shape " +
                                         shape_str(root.value.shape));
    if (!std::isfinite(root.value[0])) throw NonFiniteError("non-finite loss");
    for (auto& n : nodes_)
      if (n.requires_grad) n.grad = Tensor(n.value.shape, 0.0);
    if (!root.requires_grad) return root.value[0];
    root.grad.values[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (n.backward) n.backward();
      if (n.param != nullptr) {
        detail::check_finite(n.grad, "backward");
        auto& g = n.param->grad.values;
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad.values[k];
      }
    }
    return root.value[0];
  }

  // ---- layer set -------------------------------------------------------

  // y = x W + b over the last axis. x [..., in], W [in, out], b [out].
  Var dense(Var x, Var w, Var b) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    const Tensor& Bv = value(b);
    require(W.rank() == 2 && X.rank() >= 1 && X.shape.back() == W.dim(0),
            "dense: shape mismatch " + shape_str(X.shape) + " x " + shape_str(W.shape));
    require(Bv.rank() == 1 && Bv.dim(0) == W.dim(1), "dense: bias shape mismatch");
    const std::size_t in = W.dim(0), out = W.dim(1), rows = X.size() / in;
    Shape ys = X.shape;
    ys.back() = out;
    Tensor Y(ys);
    detail::MapMat ym(Y.data(), rows, out);
    ym.noalias() = detail::CMapMat(X.data(), rows, in) * detail::CMapMat(W.data(), in, out);
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(Bv.data(), out);
    Var y = push(std::move(Y), any_grad({x, w, b}), {x, w, b}, "dense");
    set_backward(y, [this, x, w, b, y, rows, in, out] {
      detail::CMapMat dy(nodes_[y.id_].grad.data(), rows, out);
      if (needs(x))
        detail::MapMat(gdata(x), rows, in).noalias() +=
            dy * detail::CMapMat(value(w).data(), in, out).transpose();
      if (needs(w))
        detail::MapMat(gdata(w), in, out).noalias() +=
            detail::CMapMat(value(x).data(), rows, in).transpose() * dy;
      if (needs(b))
        Eigen::Map<Eigen::RowVectorXd>(gdata(b), out) += dy.colwise().sum();
    });
    return y;
  }

  // 1-D convolution (cross-correlation), stride 1.
  // x [B, C_in, L], W [C_out, C_in, K], b [C_out] -> [B, C_out, L_out].
  Var conv1d(Var x, Var w, Var b, Padding padding) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    require(X.rank() == 3 && W.rank() == 3 && X.dim(1) == W.dim(1),
            "conv1d: shape mismatch " + shape_str(X.shape) + " * " + shape_str(W.shape));
    require(value(b).rank() == 1 && value(b).dim(0) == W.dim(0), "conv1d: bias shape mismatch");
    const std::size_t B = X.dim(0), Cin = X.dim(1), L = X.dim(2);
    const std::size_t Cout = W.dim(0), K = W.dim(2);
    long pad_left = 0;
    std::size_t Lout = 0;
    if (padding == Padding::kSame) {
      pad_left = static_cast<long>((K - 1) / 2);
      Lout = L;
    } else {
      require(L >= K, "conv1d: input shorter than kernel");
      Lout = L - K + 1;
    }
    Tensor Y({B, Cout, Lout});
    const double* xd = X.data();
    const double* wd = W.data();
    const double* bd = value(b).data();
    double* yd = Y.data();
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t co = 0; co < Cout; ++co) {
        double* yrow = yd + (n * Cout + co) * Lout;
        std::fill(yrow, yrow + Lout, bd[co]);
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const double* xrow = xd + (n * Cin + ci) * L;
          const double* wrow = wd + (co * Cin + ci) * K;
          for (std::size_t k = 0; k < K; ++k) {
            const double wk = wrow[k];
            const long shift = static_cast<long>(k) - pad_left;
            std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
            std::size_t t1 = std::min<long>(static_cast<long>(Lout), static_cast<long>(L) - shift);
            for (std::size_t t = t0; t < t1; ++t) yrow[t] += wk * xrow[t + shift];
          }
        }
      }
    Var y = push(std::move(Y), any_grad({x, w, b}), {x, w, b}, "conv1d");
    set_backward(y, [=, this] {
      const double* dy = nodes_[y.id_].grad.data();
      const double* xv = value(x).data();
      const double* wv = value(w).data();
      double* dx = needs(x) ? gdata(x) : nullptr;
      double* dw = needs(w) ? gdata(w) : nullptr;
      double* db = needs(b) ? gdata(b) : nullptr;
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* dyrow = dy + (n * Cout + co) * Lout;
          if (db)
            for (std::size_t t = 0; t < Lout; ++t) db[co] += dyrow[t];
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const std::size_t xoff = (n * Cin + ci) * L;
            const std::size_t woff = (co * Cin + ci) * K;
            for (std::size_t k = 0; k < K; ++k) {
              const long shift = static_cast<long>(k) - pad_left;
              std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
              std::size_t t1 =
                  std::min<long>(static_cast<long>(Lout), static_cast<long>(L) - shift);
              if (dw) {
                double acc = 0.0;
                for (std::size_t t = t0; t < t1; ++t) acc += dyrow[t] * xv[xoff + t + shift];
                dw[woff + k] += acc;
              }
              if (dx) {
                const double wk = wv[woff + k];
                for (std::size_t t = t0; t < t1; ++t) dx[xoff + t + shift] += wk * dyrow[t];
              }
            }
          }
        }
    });
    return y;
  }

  Var relu(Var x) {
    Tensor Y = value(x);
    for (auto& v : Y.values) v = v > 0.0 ? v : 0.0;
    Var y = push(std::move(Y), any_grad({x}), {x}, "relu");
    set_backward(y, [this, x, y] {
      const auto& xv = value(x).values;
      const auto& dy = nodes_[y.id_].grad.values;
      double* dx = gdata(x);
      for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv[i] > 0.0) dx[i] += dy[i];
    });
    return y;
  }

  // Exact GELU, x * Phi(x).
  Var gelu(Var x) {
    Tensor Y = value(x);
    for (auto& v : Y.values) v = 0.5 * v * std::erfc(-v * kInvSqrt2);
    Var y = push(std::move(Y), any_grad({x}), {x}, "gelu");
    set_backward(y, [this, x, y] {
      const auto& xv = value(x).values;
      const auto& dy = nodes_[y.id_].grad.values;
      double* dx = gdata(x);
      constexpr double kInvSqrt2Pi = 0.3989422804014327;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        const double d = 0.5 * std::erfc(-v * kInvSqrt2) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] += dy[i] * d;
      }
    });
    return y;
  }

  // Inverted dropout: kept units are scaled by 1/(1-rate) in training mode.
  // Identity in eval mode or when rate == 0.
  Var dropout(Var x, double rate, bool training, Rng& rng) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    const Tensor& X = value(x);
    std::vector<double> mask(X.size());
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = keep(rng.engine()) ? scale : 0.0;
    Tensor Y = X;
    for (std::size_t i = 0; i < Y.size(); ++i) Y.values[i] *= mask[i];
    Var y = push(std::move(Y), any_grad({x}), {x}, "dropout");
    set_backward(y, [this, x, y, mask = std::move(mask)] {
      const auto& dy = nodes_[y.id_].grad.values;
      double* dx = gdata(x);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
    });
    return y;
  }

  // Normalizes over the last axis, then applies gamma/beta [D].
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Tensor& X = value(x);
    const std::size_t D = X.shape.back(), rows = X.size() / D;
    require(value(gamma).size() == D && value(beta).size() == D,
            "layer_norm: gamma/beta must match the last axis");
    Tensor Y(X.shape);
    std::vector<double> xhat(X.size()), inv_std(rows);
    const double* g = value(gamma).data();
    const double* bt = value(beta).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = X.data() + r * D;
      double mean = 0.0;
      for (std::size_t j = 0; j < D; ++j) mean += xr[j];
      mean /= static_cast<double>(D);
      double var = 0.0;
      for (std::size_t j = 0; j < D; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<double>(D);
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < D; ++j) {
        xhat[r * D + j] = (xr[j] - mean) * inv_std[r];
        Y.values[r * D + j] = xhat[r * D + j] * g[j] + bt[j];
      }
    }
    Var y = push(std::move(Y), any_grad({x, gamma, beta}), {x, gamma, beta}, "layer_norm");
    set_backward(y, [this, x, gamma, beta, y, D, rows, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)] {
      const double* dy = nodes_[y.id_].grad.data();
      const double* g = value(gamma).data();
      double* dg = needs(gamma) ? gdata(gamma) : nullptr;
      double* db = needs(beta) ? gdata(beta) : nullptr;
      double* dx = needs(x) ? gdata(x) : nullptr;
      const double inv_d = 1.0 / static_cast<double>(D);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dyr = dy + r * D;
        const double* xh = xhat.data() + r * D;
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
          if (dg) dg[j] += dyr[j] * xh[j];
          if (db) db[j] += dyr[j];
          const double dxh = dyr[j] * g[j];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh[j];
        }
        if (dx)
          for (std::size_t j = 0; j < D; ++j) {
            const double dxh = dyr[j] * g[j];
            dx[r * D + j] += inv_std[r] * (dxh - inv_d * sum_dxh - xh[j] * inv_d * sum_dxh_xh);
          }
      }
    });
    return y;
  }

  // Softmax over the last axis with max subtraction.
  Var softmax(Var x) {
    Tensor Y = value(x);
    const std::size_t D = Y.shape.back(), rows = Y.size() / D;
    for (std::size_t r = 0; r < rows; ++r) softmax_row(Y.data() + r * D, D);
    Var y = push(std::move(Y), any_grad({x}), {x}, "softmax");
    set_backward(y, [this, x, y, D, rows] {
      const double* p = value(y).data();
      const double* dy = nodes_[y.id_].grad.data();
      double* dx = gdata(x);
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < D; ++j) dot += dy[r * D + j] * p[r * D + j];
        for (std::size_t j = 0; j < D; ++j)
          dx[r * D + j] += p[r * D + j] * (dy[r * D + j] - dot);
      }
    });
    return y;
  }

  // Scaled dot-product attention over heads. q, k, v [B, T, D] with head h in
  // columns [h*D/H, (h+1)*D/H); output [B, T, D]. Scale 1/sqrt(D/H).
  Var attention(Var q, Var k, Var v, std::size_t heads) {
    const Tensor& Q = value(q);
    require(Q.rank() == 3 && value(k).shape == Q.shape && value(v).shape == Q.shape,
            "attention: q, k, v must share shape [B, T, D]");
    const std::size_t B = Q.dim(0), T = Q.dim(1), D = Q.dim(2);
    require(heads >= 1 && D % heads == 0, "attention: embedding dim not divisible by heads");
    const std::size_t dh = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor O(Q.shape);
    std::vector<double> probs(B * heads * T * T);
    using namespace detail;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = n * T * D + h * dh;
        CStridedMat qm(value(q).data() + off, T, dh, Eigen::OuterStride<>(D));
        CStridedMat km(value(k).data() + off, T, dh, Eigen::OuterStride<>(D));
        CStridedMat vm(value(v).data() + off, T, dh, Eigen::OuterStride<>(D));
        MapMat pm(probs.data() + (n * heads + h) * T * T, T, T);
        pm.noalias() = (qm * km.transpose()) * scale;
        for (std::size_t r = 0; r < T; ++r) softmax_row(&pm(r, 0), T);
        StridedMat om(O.data() + off, T, dh, Eigen::OuterStride<>(D));
        om.noalias() = pm * vm;
      }
    Var y = push(std::move(O), any_grad({q, k, v}), {q, k, v}, "attention");
    set_backward(y, [=, this, probs = std::move(probs)] {
      using namespace detail;
      RowMat dp(T, T), ds(T, T);
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = n * T * D + h * dh;
          CStridedMat qm(value(q).data() + off, T, dh, Eigen::OuterStride<>(D));
          CStridedMat km(value(k).data() + off, T, dh, Eigen::OuterStride<>(D));
          CStridedMat vm(value(v).data() + off, T, dh, Eigen::OuterStride<>(D));
          CStridedMat dom(nodes_[y.id_].grad.data() + off, T, dh, Eigen::OuterStride<>(D));
          CMapMat pm(probs.data() + (n * heads + h) * T * T, T, T);
          if (needs(v)) {
            StridedMat dv(gdata(v) + off, T, dh, Eigen::OuterStride<>(D));
            dv.noalias() += pm.transpose() * dom;
          }
          dp.noalias() = dom * vm.transpose();
          for (std::size_t r = 0; r < T; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < T; ++c) dot += dp(r, c) * pm(r, c);
            for (std::size_t c = 0; c < T; ++c) ds(r, c) = pm(r, c) * (dp(r, c) - dot) * scale;
          }
          if (needs(q)) {
            StridedMat dq(gdata(q) + off, T, dh, Eigen::OuterStride<>(D));
            dq.noalias() += ds * km;
          }
          if (needs(k)) {
            StridedMat dk(gdata(k) + off, T, dh, Eigen::OuterStride<>(D));
            dk.noalias() += ds.transpose() * qm;
          }
        }
    });
    return y;
  }

  // Elementwise a + b where b's shape equals a trailing suffix of a's shape
  // (b is broadcast over the leading axes). Used for residuals and for
  // adding positional embeddings.
  Var add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& Bt = value(b);
    require(Bt.rank() <= A.rank() &&
                std::equal(Bt.shape.rbegin(), Bt.shape.rend(), A.shape.rbegin()),
            "add: shape " + shape_str(Bt.shape) + " does not broadcast to " + shape_str(A.shape));
    const std::size_t inner = Bt.size(), outer = A.size() / inner;
    Tensor Y = A;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) Y.values[o * inner + i] += Bt.values[i];
    Var y = push(std::move(Y), any_grad({a, b}), {a, b}, "add");
    set_backward(y, [this, a, b, y, inner, outer] {
      const double* dy = nodes_[y.id_].grad.data();
      if (needs(a)) {
        double* da = gdata(a);
        for (std::size_t i = 0; i < inner * outer; ++i) da[i] += dy[i];
      }
      if (needs(b)) {
        double* db = gdata(b);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) db[i] += dy[o * inner + i];
      }
    });
    return y;
  }

  // Prepends a token [D] to every sequence of x [B, T, D] -> [B, T+1, D].
  Var prepend_token(Var token, Var x) {
    const Tensor& X = value(x);
    const Tensor& C = value(token);
    require(X.rank() == 3 && C.size() == X.dim(2), "prepend_token: token width mismatch");
    const std::size_t B = X.dim(0), T = X.dim(1), D = X.dim(2);
    Tensor Y({B, T + 1, D});
    for (std::size_t n = 0; n < B; ++n) {
      std::copy(C.values.begin(), C.values.end(), Y.values.begin() + n * (T + 1) * D);
      std::copy(X.values.begin() + n * T * D, X.values.begin() + (n + 1) * T * D,
                Y.values.begin() + n * (T + 1) * D + D);
    }
    Var y = push(std::move(Y), any_grad({token, x}), {token, x}, "prepend_token");
    set_backward(y, [this, token, x, y, B, T, D] {
      const double* dy = nodes_[y.id_].grad.data();
      for (std::size_t n = 0; n < B; ++n) {
        const double* row = dy + n * (T + 1) * D;
        if (needs(token)) {
          double* dt = gdata(token);
          for (std::size_t j = 0; j < D; ++j) dt[j] += row[j];
        }
        if (needs(x)) {
          double* dx = gdata(x) + n * T * D;
          for (std::size_t j = 0; j < T * D; ++j) dx[j] += row[D + j];
        }
      }
    });
    return y;
  }

  // Selects token t of x [B, T, D] -> [B, D].
  Var take_token(Var x, std::size_t t) {
    const Tensor& X = value(x);
    require(X.rank() == 3 && t < X.dim(1), "take_token: index out of range");
    const std::size_t B = X.dim(0), T = X.dim(1), D = X.dim(2);
    Tensor Y({B, D});
    for (std::size_t n = 0; n < B; ++n)
      std::copy_n(X.values.begin() + (n * T + t) * D, D, Y.values.begin() + n * D);
    Var y = push(std::move(Y), any_grad({x}), {x}, "take_token");
    set_backward(y, [this, x, y, B, T, D, t] {
      const double* dy = nodes_[y.id_].grad.data();
      double* dx = gdata(x);
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t j = 0; j < D; ++j) dx[(n * T + t) * D + j] += dy[n * D + j];
    });
    return y;
  }

  Var reshape(Var x, Shape shape) {
    require(numel(shape) == value(x).size(), "reshape: element count mismatch " +
                                                 shape_str(value(x).shape) + " -> " +
                                                 shape_str(shape));
    Tensor Y(std::move(shape), value(x).values);
    Var y = push(std::move(Y), any_grad({x}), {x}, "reshape");
    set_backward(y, [this, x, y] {
      const auto& dy = nodes_[y.id_].grad.values;
      double* dx = gdata(x);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
    return y;
  }

  // Soft-label cross entropy, -sum_j y_j log softmax(z)_j per row; rows of
  // `labels` must lie on the simplex within 1e-6.
  Var cross_entropy(Var logits, const Tensor& labels, Reduction reduction = Reduction::kMean) {
    const Tensor& Z = value(logits);
    require(Z.rank() == 2 && labels.shape == Z.shape,
            "cross_entropy: logits " + shape_str(Z.shape) + " vs labels " +
                shape_str(labels.shape));
    const std::size_t N = Z.dim(0), M = Z.dim(1);
    for (std::size_t r = 0; r < N; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        const double yv = labels.values[r * M + j];
        require(yv >= -1e-6, "cross_entropy: negative label entry");
        s += yv;
      }
      require(std::abs(s - 1.0) <= 1e-6, "cross_entropy: label row off the simplex");
    }
    std::vector<double> probs(Z.values);
    double total = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
      const double* z = Z.data() + r * M;
      const double mx = *std::max_element(z, z + M);
      double lse = 0.0;
      for (std::size_t j = 0; j < M; ++j) lse += std::exp(z[j] - mx);
      lse = mx + std::log(lse);
      for (std::size_t j = 0; j < M; ++j) {
        const double yv = labels.values[r * M + j];
        if (yv != 0.0) total -= yv * (z[j] - lse);
        probs[r * M + j] = std::exp(z[j] - lse);
      }
    }
    const double denom = reduction == Reduction::kMean ? static_cast<double>(N) : 1.0;
    Tensor L({1}, {total / denom});
    Var y = push(std::move(L), any_grad({logits}), {logits}, "cross_entropy");
    set_backward(y, [this, logits, y, labels, probs = std::move(probs), N, M, denom] {
      const double g = nodes_[y.id_].grad.values[0] / denom;
      double* dz = gdata(logits);
      for (std::size_t r = 0; r < N; ++r) {
        double ysum = 0.0;
        for (std::size_t j = 0; j < M; ++j) ysum += labels.values[r * M + j];
        for (std::size_t j = 0; j < M; ++j)
          dz[r * M + j] += g * (probs[r * M + j] * ysum - labels.values[r * M + j]);
      }
    });
    return y;
  }

  Var sum(Var x) {
    const auto& v = value(x).values;
    Tensor Y({1}, {std::accumulate(v.begin(), v.end(), 0.0)});
    Var y = push(std::move(Y), any_grad({x}), {x}, "sum");
    set_backward(y, [this, x, y] {
      const double g = nodes_[y.id_].grad.values[0];
      double* dx = gdata(x);
      for (std::size_t i = 0; i < value(x).size(); ++i) dx[i] += g;
    });
    return y;
  }

  Var sum_squares(Var x) {
    double s = 0.0;
    for (double v : value(x).values) s += v * v;
    Var y = push(Tensor({1}, {s}), any_grad({x}), {x}, "sum_squares");
    set_backward(y, [this, x, y] {
      const double g = nodes_[y.id_].grad.values[0];
      const auto& xv = value(x).values;
      double* dx = gdata(x);
      for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += 2.0 * g * xv[i];
    });
    return y;
  }

  static void softmax_row(double* z, std::size_t n) {
    const double mx = *std::max_element(z, z + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      z[j] = std::exp(z[j] - mx);
      s += z[j];
    }
    for (std::size_t j = 0; j < n; ++j) z[j] /= s;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> backward;
    Parameter* param = nullptr;
  };

  Var push(Tensor value, bool requires_grad, std::initializer_list<Var> /*inputs*/,
           const char* op = nullptr) {
    if (op != nullptr) detail::check_finite(value, op);
    nodes_.push_back({std::move(value), Tensor(), requires_grad, nullptr, nullptr});
    return Var(nodes_.size() - 1);
  }

  void set_backward(Var y, std::function<void()> fn) {
    if (nodes_[y.id_].requires_grad) nodes_[y.id_].backward = std::move(fn);
  }

  bool any_grad(std::initializer_list<Var> vs) const {
    for (auto v : vs)
      if (nodes_.at(v.id_).requires_grad) return true;
    return false;
  }
  bool needs(Var v) const { return nodes_[v.id_].requires_grad; }
  double* gdata(Var v) { return nodes_[v.id_].grad.data(); }

  std::vector<Node> nodes_;
};

// Fixed sinusoidal position table [seq_len, dim]: even columns sin, odd cos,
// frequency 1/10000^(2i/dim).
inline Tensor sinusoidal_encoding(std::size_t seq_len, std::size_t dim) {
  require(dim > 0 && dim % 2 == 0, "sinusoidal encoding needs an even dimension");
  Tensor t({seq_len, dim});
  for (std::size_t pos = 0; pos < seq_len; ++pos)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      t.values[pos * dim + 2 * i] = std::sin(angle);
      t.values[pos * dim + 2 * i + 1] = std::cos(angle);
    }
  return t;
}

}  // namespace specdapt::ad
