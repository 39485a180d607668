#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>

#include "avc/tensor.hpp"

// Reverse-mode autodiff on a dynamic tape. Every op builds a Node whose
// backprop closure scatters the output gradient into its parents.
namespace avc::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value, allocated lazily on backward
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape);
  }
};

inline Var leaf(Tensor t, bool requires_grad = true) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  return n;
}

inline Var constant(Tensor t) { return leaf(std::move(t), false); }

inline Var make_node(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  bool rg = false;
  for (const auto& p : n->parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) n->backprop = std::move(backprop);
  return n;
}

// Topological order by DFS, then a single reverse sweep.
inline void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
}

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Node* p = n.parents[k].get();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i)
        pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i)
        pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  return make_node(std::move(out), {a}, [c](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += c * n.grad[i];
  });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var add_scalar(const Var& a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v += c;
  return make_node(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

template <class F, class DF>
Var unary_elementwise(const Var& a, F f, DF df) {
  Tensor out = a->value;
  for (double& v : out.data) v = f(v);
  return make_node(std::move(out), {a}, [df](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      p->grad[i] += n.grad[i] * df(p->value[i], n.value[i]);
  });
}

inline double softplus_scalar(double x) {
  // overflow-safe ln(1+e^x)
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline Var relu(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& a, double slope = 0.2) {
  return unary_elementwise(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Var sigmoid(const Var& a) {
  return unary_elementwise(
      a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                   : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh_op(const Var& a) {
  return unary_elementwise(a, [](double x) { return std::tanh(x); },
                           [](double, double y) { return 1.0 - y * y; });
}

inline Var softplus(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return softplus_scalar(x); },
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                           : std::exp(x) / (1.0 + std::exp(x)); });
}

inline Var abs_op(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var square(const Var& a) {
  return unary_elementwise(a, [](double x) { return x * x; },
                           [](double x, double) { return 2.0 * x; });
}

// log with the argument clamped to [eps, inf); the gradient is passed
// through only where the argument was not clamped.
inline Var log_clamped(const Var& a, double eps = 1e-7) {
  return unary_elementwise(
      a, [eps](double x) { return std::log(std::max(x, eps)); },
      [eps](double x, double) { return x > eps ? 1.0 / x : 0.0; });
}

// ---- reductions ----

inline Var sum_all(const Var& a) {
  double s = std::accumulate(a->value.data.begin(), a->value.data.end(), 0.0);
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    double g = n.grad.data[0];
    for (double& v : p->grad.data) v += g;
  });
}

inline Var mean_all(const Var& a) {
  std::size_t m = a->value.numel();
  double s = std::accumulate(a->value.data.begin(), a->value.data.end(), 0.0) / double(m);
  return make_node(Tensor::scalar(s), {a}, [m](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    double g = n.grad.data[0] / double(m);
    for (double& v : p->grad.data) v += g;
  });
}

// ln(mean(exp(x))) with max-shift stabilization.
inline Var log_mean_exp(const Var& a) {
  const auto& x = a->value.data;
  double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  double out = mx + std::log(s / double(x.size()));
  return make_node(Tensor::scalar(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    const auto& x = p->value.data;
    double mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    double g = n.grad.data[0];
    for (std::size_t i = 0; i < x.size(); ++i)
      p->grad[i] += g * std::exp(x[i] - mx) / s;
  });
}

// ---- shape ----

inline Var reshape(const Var& a, Shape s) {
  Tensor out = a->value.reshaped(std::move(s));
  return make_node(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
  });
}

// Concatenate along dim 1 ([N,*] or [N,C,H,W] channel concat).
inline Var concat_dim1(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty");
  Shape s = parts[0]->value.shape;
  std::size_t n = s[0];
  std::size_t inner = 1;
  for (std::size_t d = 2; d < s.size(); ++d) inner *= s[d];
  std::size_t ctot = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& ps = p->value.shape;
    if (ps[0] != n || ps.size() != s.size())
      throw std::invalid_argument("concat: incompatible shapes");
    widths.push_back(ps[1]);
    ctot += ps[1];
  }
  Shape os = s;
  os[1] = ctot;
  Tensor out(os);
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Tensor& pv = parts[k]->value;
      std::size_t blk = widths[k] * inner;
      std::copy_n(pv.data.begin() + b * blk, blk,
                  out.data.begin() + (b * ctot + off) * inner);
      off += widths[k];
    }
  }
  return make_node(std::move(out), parts, [widths, inner, ctot, n](Node& nd) {
    for (std::size_t b = 0; b < n; ++b) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < nd.parents.size(); ++k) {
        Node* p = nd.parents[k].get();
        std::size_t blk = widths[k] * inner;
        if (p->requires_grad) {
          p->ensure_grad();
          const double* src = nd.grad.data.data() + (b * ctot + off) * inner;
          double* dst = p->grad.data.data() + b * blk;
          for (std::size_t i = 0; i < blk; ++i) dst[i] += src[i];
        }
        off += widths[k];
      }
    }
  });
}

// Spatial crop of [N,C,H,W] to rows [y0,y1) cols [x0,x1).
inline Var crop(const Var& a, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
  const Shape& s = a->value.shape;
  if (s.size() != 4) throw std::invalid_argument("crop: expects [N,C,H,W]");
  if (y1 > s[2] || x1 > s[3] || y0 >= y1 || x0 >= x1)
    throw std::out_of_range("crop: region out of bounds");
  std::size_t N = s[0], C = s[1];
  Tensor out({N, C, y1 - y0, x1 - x0});
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          out.at4(b, c, y - y0, x - x0) = a->value.at4(b, c, y, x);
  return make_node(std::move(out), {a}, [y0, x0](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    const Shape& os = n.value.shape;
    for (std::size_t b = 0; b < os[0]; ++b)
      for (std::size_t c = 0; c < os[1]; ++c)
        for (std::size_t y = 0; y < os[2]; ++y)
          for (std::size_t x = 0; x < os[3]; ++x)
            p->grad.at4(b, c, y + y0, x + x0) += n.grad.at4(b, c, y, x);
  });
}

// Broadcast [N,d] spatially to [N,d,H,W].
inline Var tile_spatial(const Var& a, std::size_t H, std::size_t W) {
  const Shape& s = a->value.shape;
  if (s.size() != 2) throw std::invalid_argument("tile_spatial: expects [N,d]");
  std::size_t N = s[0], D = s[1];
  Tensor out({N, D, H, W});
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t d = 0; d < D; ++d) {
      double v = a->value.at2(b, d);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) out.at4(b, d, y, x) = v;
    }
  return make_node(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->ensure_grad();
    const Shape& os = n.value.shape;
    for (std::size_t b = 0; b < os[0]; ++b)
      for (std::size_t d = 0; d < os[1]; ++d) {
        double s = 0.0;
        for (std::size_t y = 0; y < os[2]; ++y)
          for (std::size_t x = 0; x < os[3]; ++x) s += n.grad.at4(b, d, y, x);
        p->grad.at2(b, d) += s;
      }
  });
}

// Multiply [N,C,H,W] by a per-pixel map [N,1,H,W], broadcast over channels.
inline Var mul_pixelmap(const Var& x, const Var& m) {
  const Shape& xs = x->value.shape;
  const Shape& ms = m->value.shape;
  if (xs.size() != 4 || ms.size() != 4 || ms[1] != 1 || ms[0] != xs[0] ||
      ms[2] != xs[2] || ms[3] != xs[3])
    throw std::invalid_argument("mul_pixelmap: shape mismatch");
  Tensor out(xs);
  for (std::size_t b = 0; b < xs[0]; ++b)
    for (std::size_t c = 0; c < xs[1]; ++c)
      for (std::size_t y = 0; y < xs[2]; ++y)
        for (std::size_t w = 0; w < xs[3]; ++w)
          out.at4(b, c, y, w) = x->value.at4(b, c, y, w) * m->value.at4(b, 0, y, w);
  return make_node(std::move(out), {x, m}, [](Node& n) {
    Node* px = n.parents[0].get();
    Node* pm = n.parents[1].get();
    const Shape& xs = px->value.shape;
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t b = 0; b < xs[0]; ++b)
        for (std::size_t c = 0; c < xs[1]; ++c)
          for (std::size_t y = 0; y < xs[2]; ++y)
            for (std::size_t w = 0; w < xs[3]; ++w)
              px->grad.at4(b, c, y, w) += n.grad.at4(b, c, y, w) * pm->value.at4(b, 0, y, w);
    }
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (std::size_t b = 0; b < xs[0]; ++b)
        for (std::size_t y = 0; y < xs[2]; ++y)
          for (std::size_t w = 0; w < xs[3]; ++w) {
            double s = 0.0;
            for (std::size_t c = 0; c < xs[1]; ++c)
              s += n.grad.at4(b, c, y, w) * px->value.at4(b, c, y, w);
            pm->grad.at4(b, 0, y, w) += s;
          }
    }
  });
}

// ---- linear algebra ----

inline Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw std::invalid_argument("matmul: bad shapes " + shape_str(sa) + " x " + shape_str(sb));
  std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n});
  CMatMap A(a->value.data.data(), m, k);
  CMatMap B(b->value.data.data(), k, n);
  MatMap O(out.data.data(), m, n);
  O.noalias() = A * B;
  return make_node(std::move(out), {a, b}, [m, k, n](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    CMatMap G(nd.grad.data.data(), m, n);
    if (pa->requires_grad) {
      pa->ensure_grad();
      CMatMap B(pb->value.data.data(), k, n);
      MatMap GA(pa->grad.data.data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      CMatMap A(pa->value.data.data(), m, k);
      MatMap GB(pb->grad.data.data(), k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

// x [N,d] + b [d] broadcast over rows.
inline Var add_rowvec(const Var& x, const Var& b) {
  const Shape& xs = x->value.shape;
  const Shape& bs = b->value.shape;
  if (xs.size() != 2 || bs.size() != 1 || bs[0] != xs[1])
    throw std::invalid_argument("add_rowvec: shape mismatch");
  Tensor out = x->value;
  for (std::size_t r = 0; r < xs[0]; ++r)
    for (std::size_t c = 0; c < xs[1]; ++c) out.at2(r, c) += b->value[c];
  return make_node(std::move(out), {x, b}, [](Node& n) {
    Node* px = n.parents[0].get();
    Node* pb = n.parents[1].get();
    const Shape& xs = px->value.shape;
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) px->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t r = 0; r < xs[0]; ++r)
        for (std::size_t c = 0; c < xs[1]; ++c) pb->grad[c] += n.grad.at2(r, c);
    }
  });
}

inline Var dense(const Var& x, const Var& w, const Var& b) {
  return add_rowvec(matmul(x, w), b);
}

// ---- convolution (im2col + GEMM) ----

namespace detail {

struct ConvDims {
  std::size_t N, Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo;
};

inline ConvDims conv_dims(const Shape& xs, const Shape& ws, std::size_t stride, std::size_t pad) {
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1])
    throw std::invalid_argument("conv2d: bad shapes x=" + shape_str(xs) + " w=" + shape_str(ws));
  ConvDims d;
  d.N = xs[0]; d.Ci = xs[1]; d.H = xs[2]; d.W = xs[3];
  d.Co = ws[0]; d.kh = ws[2]; d.kw = ws[3];
  d.stride = stride; d.pad = pad;
  d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
  return d;
}

// columns: [Ci*kh*kw, Ho*Wo] for one sample
inline void im2col(const double* x, const ConvDims& d, double* col) {
  std::size_t idx = 0;
  for (std::size_t c = 0; c < d.Ci; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx)
        for (std::size_t oy = 0; oy < d.Ho; ++oy) {
          long iy = long(oy * d.stride + ky) - long(d.pad);
          for (std::size_t ox = 0; ox < d.Wo; ++ox) {
            long ix = long(ox * d.stride + kx) - long(d.pad);
            col[idx++] = (iy >= 0 && iy < long(d.H) && ix >= 0 && ix < long(d.W))
                             ? x[(c * d.H + iy) * d.W + ix]
                             : 0.0;
          }
        }
}

inline void col2im_accum(const double* col, const ConvDims& d, double* x) {
  std::size_t idx = 0;
  for (std::size_t c = 0; c < d.Ci; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx)
        for (std::size_t oy = 0; oy < d.Ho; ++oy) {
          long iy = long(oy * d.stride + ky) - long(d.pad);
          for (std::size_t ox = 0; ox < d.Wo; ++ox) {
            long ix = long(ox * d.stride + kx) - long(d.pad);
            if (iy >= 0 && iy < long(d.H) && ix >= 0 && ix < long(d.W))
              x[(c * d.H + iy) * d.W + ix] += col[idx];
            ++idx;
          }
        }
}

}  // namespace detail

// x [N,Ci,H,W], w [Co,Ci,kh,kw], b [Co]
inline Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1,
                  std::size_t pad = 0) {
  auto d = detail::conv_dims(x->value.shape, w->value.shape, stride, pad);
  if (b->value.shape != Shape{d.Co}) throw std::invalid_argument("conv2d: bad bias shape");
  std::size_t K = d.Ci * d.kh * d.kw, P = d.Ho * d.Wo;
  Tensor out({d.N, d.Co, d.Ho, d.Wo});
  std::vector<double> col(K * P);
  CMatMap Wm(w->value.data.data(), d.Co, K);
  for (std::size_t n = 0; n < d.N; ++n) {
    detail::im2col(x->value.data.data() + n * d.Ci * d.H * d.W, d, col.data());
    CMatMap C(col.data(), K, P);
    MatMap O(out.data.data() + n * d.Co * P, d.Co, P);
    O.noalias() = Wm * C;
    for (std::size_t c = 0; c < d.Co; ++c)
      O.row(c).array() += b->value[c];
  }
  return make_node(std::move(out), {x, w, b}, [d, K, P](Node& nd) {
    Node* px = nd.parents[0].get();
    Node* pw = nd.parents[1].get();
    Node* pb = nd.parents[2].get();
    std::vector<double> col(K * P);
    for (std::size_t n = 0; n < d.N; ++n) {
      CMatMap G(nd.grad.data.data() + n * d.Co * P, d.Co, P);
      if (pw->requires_grad || pb->requires_grad) {
        if (pw->requires_grad) {
          pw->ensure_grad();
          detail::im2col(px->value.data.data() + n * d.Ci * d.H * d.W, d, col.data());
          CMatMap C(col.data(), K, P);
          MatMap GW(pw->grad.data.data(), d.Co, K);
          GW.noalias() += G * C.transpose();
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t c = 0; c < d.Co; ++c) pb->grad[c] += G.row(c).sum();
        }
      }
      if (px->requires_grad) {
        px->ensure_grad();
        CMatMap Wm(pw->value.data.data(), d.Co, K);
        MatMap C(col.data(), K, P);
        C.noalias() = Wm.transpose() * G;
        detail::col2im_accum(col.data(), d, px->grad.data.data() + n * d.Ci * d.H * d.W);
      }
    }
  });
}

// Transposed convolution: the adjoint of conv2d's forward map.
// x [N,Ci,Hi,Wi], w [Ci,Co,kh,kw], b [Co]; output [N,Co,Ho,Wo] with
// Ho = (Hi-1)*stride - 2*pad + kh.
inline Var conv2d_transpose(const Var& x, const Var& w, const Var& b,
                            std::size_t stride = 1, std::size_t pad = 0) {
  const Shape& xs = x->value.shape;
  const Shape& ws = w->value.shape;
  if (xs.size() != 4 || ws.size() != 4 || ws[0] != xs[1])
    throw std::invalid_argument("conv2d_transpose: bad shapes");
  std::size_t Ci = ws[0], Co = ws[1], kh = ws[2], kw = ws[3];
  std::size_t Hi = xs[2], Wi = xs[3];
  std::size_t Ho = (Hi - 1) * stride + kh - 2 * pad;
  std::size_t Wo = (Wi - 1) * stride + kw - 2 * pad;
  if (b->value.shape != Shape{Co})
    throw std::invalid_argument("conv2d_transpose: bad bias shape");
  // Set up the forward-conv dims for the adjoint: a conv with input
  // [Co,Ho,Wo] and kernel [Ci,Co,kh,kw] producing [Ci,Hi,Wi].
  detail::ConvDims d;
  d.N = xs[0]; d.Ci = Co; d.H = Ho; d.W = Wo;
  d.Co = Ci; d.kh = kh; d.kw = kw;
  d.stride = stride; d.pad = pad; d.Ho = Hi; d.Wo = Wi;
  std::size_t K = Co * kh * kw, P = Hi * Wi;
  Tensor out({d.N, Co, Ho, Wo});
  std::vector<double> col(K * P);
  CMatMap Wm(w->value.data.data(), Ci, K);
  for (std::size_t n = 0; n < d.N; ++n) {
    // col = W^T * x_n  (x_n viewed [Ci, Hi*Wi]); then scatter via col2im
    CMatMap X(x->value.data.data() + n * Ci * P, Ci, P);
    MatMap C(col.data(), K, P);
    C.noalias() = Wm.transpose() * X;
    double* on = out.data.data() + n * Co * Ho * Wo;
    detail::col2im_accum(col.data(), d, on);
    for (std::size_t c = 0; c < Co; ++c)
      for (std::size_t i = 0; i < Ho * Wo; ++i) on[c * Ho * Wo + i] += b->value[c];
  }
  return make_node(std::move(out), {x, w, b}, [d, K, P, Ci, Co, Ho, Wo](Node& nd) {
    Node* px = nd.parents[0].get();
    Node* pw = nd.parents[1].get();
    Node* pb = nd.parents[2].get();
    std::vector<double> col(K * P);
    for (std::size_t n = 0; n < d.N; ++n) {
      const double* gn = nd.grad.data.data() + n * Co * Ho * Wo;
      detail::im2col(gn, d, col.data());  // col of the output gradient
      CMatMap C(col.data(), K, P);
      if (px->requires_grad) {
        px->ensure_grad();
        CMatMap Wm(pw->value.data.data(), Ci, K);
        MatMap GX(px->grad.data.data() + n * Ci * P, Ci, P);
        GX.noalias() += Wm * C;
      }
      if (pw->requires_grad) {
        pw->ensure_grad();
        CMatMap X(px->value.data.data() + n * Ci * P, Ci, P);
        MatMap GW(pw->grad.data.data(), Ci, K);
        GW.noalias() += X * C.transpose();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t c = 0; c < Co; ++c) {
          double s = 0.0;
          for (std::size_t i = 0; i < Ho * Wo; ++i) s += gn[c * Ho * Wo + i];
          pb->grad[c] += s;
        }
      }
    }
  });
}

}  // namespace avc::ag
