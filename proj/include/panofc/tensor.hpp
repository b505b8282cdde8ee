#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "panofc/common.hpp"

namespace panofc {

// Tensor shape: list of extents.  Rank 1..4 is what the ops support.
using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
  long long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Value-semantics handle to a node in the reverse-mode autodiff graph.
// All data is double precision.  Ops build the graph eagerly; calling
// backward() on a scalar accumulates gradients into every reachable
// node that requires them.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    node_->shape = std::move(shape);
    node_->data.assign(static_cast<size_t>(shape_numel(node_->shape)), fill);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->ensure_grad();
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    if (static_cast<long long>(values.size()) != shape_numel(shape))
      throw DimError(str("tensor data size ", values.size(),
                         " does not match shape ", shape_str(shape)));
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->ensure_grad();
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
  long long size() const { return static_cast<long long>(node_->data.size()); }

  std::vector<double>& values() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  double value() const {
    if (size() != 1) throw DimError(str("value() on non-scalar ", shape_str(shape())));
    return node_->data[0];
  }

  double& operator[](long long i) { return node_->data[static_cast<size_t>(i)]; }
  double operator[](long long i) const { return node_->data[static_cast<size_t>(i)]; }

  double& at(int i, int j) {
    return node_->data[static_cast<size_t>(i) * dim(1) + j];
  }
  double at(int i, int j) const {
    return node_->data[static_cast<size_t>(i) * dim(1) + j];
  }
  double& at(int b, int c, int y, int x) {
    return node_->data[((static_cast<size_t>(b) * dim(1) + c) * dim(2) + y) * dim(3) + x];
  }
  double at(int b, int c, int y, int x) const {
    return node_->data[((static_cast<size_t>(b) * dim(1) + c) * dim(2) + y) * dim(3) + x];
  }

  bool requires_grad() const { return node_->requires_grad; }

  void set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    if (rg) node_->ensure_grad();
  }

  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const { return node_->grad; }

  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Reverse-mode sweep from a scalar root.  Gradients accumulate (+=)
  // into every node with requires_grad on the path.
  void backward() {
    if (size() != 1)
      throw DimError(str("backward() requires a scalar, got ", shape_str(shape())));
    std::vector<detail::TensorNode*> order;
    topo_sort(node_.get(), order);
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::TensorNode* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& handle() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4)
      throw DimError(str("tensor rank must be 1..4, got shape ", shape_str(shape)));
    for (int d : shape)
      if (d <= 0) throw DimError(str("non-positive extent in shape ", shape_str(shape)));
  }

  static void topo_sort(detail::TensorNode* root, std::vector<detail::TensorNode*>& out) {
    // Iterative post-order DFS: parents appear before their consumers.
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        detail::TensorNode* p = node->parents[idx++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        out.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.handle());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape(), b.shape()))
    throw DimError(str(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                       shape_str(b.shape())));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](detail::TensorNode& self) {
                               for (auto& p : self.parents) {
                                 if (!p->requires_grad) continue;
                                 p->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   p->grad[i] += self.grad[i];
                               }
                             });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb->grad[i] += self.grad[i] * pa->data[i];
        }
      });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= s;
  return detail::make_result(a.shape(), std::move(out), {a},
                             [s](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 p->grad[i] += s * self.grad[i];
                             });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v += s;
  return detail::make_result(a.shape(), std::move(out), {a},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 p->grad[i] += self.grad[i];
                             });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  return detail::make_result(a.shape(), std::move(out), {a},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i) {
                                 double y = self.data[i];
                                 p->grad[i] += self.grad[i] * y * (1.0 - y);
                               }
                             });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::tanh(v);
  return detail::make_result(a.shape(), std::move(out), {a},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i) {
                                 double y = self.data[i];
                                 p->grad[i] += self.grad[i] * (1.0 - y * y);
                               }
                             });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(a.shape(), std::move(out), {a},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 if (p->data[i] > 0.0) p->grad[i] += self.grad[i];
                             });
}

// 1 - a, elementwise (used by gate recurrences).
inline Tensor one_minus(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = 1.0 - v;
  return detail::make_result(a.shape(), std::move(out), {a},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 p->grad[i] -= self.grad[i];
                             });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// y = x * W + b  with x:[B,I], W:[I,O], b:[O] -> y:[B,O]
inline Tensor matmul_add(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2)
    throw DimError(str("matmul_add: need rank-2 inputs, got ", shape_str(x.shape()),
                       " and ", shape_str(w.shape())));
  if (b.rank() != 1)
    throw DimError(str("matmul_add: bias must be rank 1, got ", shape_str(b.shape())));
  const int B = x.dim(0), I = x.dim(1), O = w.dim(1);
  if (w.dim(0) != I)
    throw DimError(str("matmul_add: inner dimensions differ, ", shape_str(x.shape()),
                       " vs ", shape_str(w.shape())));
  if (b.dim(0) != O)
    throw DimError(str("matmul_add: bias shape ", shape_str(b.shape()),
                       " does not match output width ", O));
  std::vector<double> out(static_cast<size_t>(B) * O);
  for (int r = 0; r < B; ++r) {
    for (int c = 0; c < O; ++c) out[static_cast<size_t>(r) * O + c] = b[c];
    for (int k = 0; k < I; ++k) {
      double xv = x.at(r, k);
      if (xv == 0.0) continue;
      const double* wrow = w.values().data() + static_cast<size_t>(k) * O;
      double* orow = out.data() + static_cast<size_t>(r) * O;
      for (int c = 0; c < O; ++c) orow[c] += xv * wrow[c];
    }
  }
  return detail::make_result(
      Shape{B, O}, std::move(out), {x, w, b},
      [B, I, O](detail::TensorNode& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        if (px->requires_grad) {
          px->ensure_grad();
          for (int r = 0; r < B; ++r)
            for (int k = 0; k < I; ++k) {
              double acc = 0.0;
              const double* wrow = pw->data.data() + static_cast<size_t>(k) * O;
              const double* grow = self.grad.data() + static_cast<size_t>(r) * O;
              for (int c = 0; c < O; ++c) acc += grow[c] * wrow[c];
              px->grad[static_cast<size_t>(r) * I + k] += acc;
            }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (int r = 0; r < B; ++r)
            for (int k = 0; k < I; ++k) {
              double xv = px->data[static_cast<size_t>(r) * I + k];
              if (xv == 0.0) continue;
              double* wgrow = pw->grad.data() + static_cast<size_t>(k) * O;
              const double* grow = self.grad.data() + static_cast<size_t>(r) * O;
              for (int c = 0; c < O; ++c) wgrow[c] += xv * grow[c];
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int r = 0; r < B; ++r) {
            const double* grow = self.grad.data() + static_cast<size_t>(r) * O;
            for (int c = 0; c < O; ++c) pb->grad[c] += grow[c];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Concatenation / slicing along dimension 1 (features or channels)
// ---------------------------------------------------------------------------

namespace detail {
// For rank>=2 tensors treated as [outer, dim1, inner].
inline void dim1_strides(const Shape& s, long long& outer, long long& inner) {
  outer = s[0];
  inner = 1;
  for (size_t i = 2; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

inline Tensor concat_dim1(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank())
    throw DimError(str("concat_dim1: rank mismatch ", shape_str(a.shape()), " vs ",
                       shape_str(b.shape())));
  Shape sa = a.shape(), sb = b.shape();
  for (int i = 0; i < a.rank(); ++i)
    if (i != 1 && sa[i] != sb[i])
      throw DimError(str("concat_dim1: shapes ", shape_str(sa), " and ", shape_str(sb),
                         " differ outside dim 1"));
  Shape out_shape = sa;
  out_shape[1] = sa[1] + sb[1];
  long long outer, inner;
  detail::dim1_strides(sa, outer, inner);
  const long long da = sa[1] * inner, db = sb[1] * inner;
  std::vector<double> out(static_cast<size_t>(outer) * (da + db));
  for (long long o = 0; o < outer; ++o) {
    std::copy_n(a.values().data() + o * da, da, out.data() + o * (da + db));
    std::copy_n(b.values().data() + o * db, db, out.data() + o * (da + db) + da);
  }
  return detail::make_result(
      out_shape, std::move(out), {a, b},
      [outer, da, db](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (long long o = 0; o < outer; ++o)
            for (long long i = 0; i < da; ++i)
              pa->grad[static_cast<size_t>(o * da + i)] +=
                  self.grad[static_cast<size_t>(o * (da + db) + i)];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (long long o = 0; o < outer; ++o)
            for (long long i = 0; i < db; ++i)
              pb->grad[static_cast<size_t>(o * db + i)] +=
                  self.grad[static_cast<size_t>(o * (da + db) + da + i)];
        }
      });
}

// Slice [from, to) along dimension 1.
inline Tensor slice_dim1(const Tensor& a, int from, int to) {
  if (a.rank() < 2)
    throw DimError(str("slice_dim1: need rank >= 2, got ", shape_str(a.shape())));
  if (from < 0 || to > a.dim(1) || from >= to)
    throw DimError(str("slice_dim1: bad range [", from, ",", to, ") for shape ",
                       shape_str(a.shape())));
  Shape out_shape = a.shape();
  out_shape[1] = to - from;
  long long outer, inner;
  detail::dim1_strides(a.shape(), outer, inner);
  const long long dfull = a.dim(1) * inner;
  const long long dout = (to - from) * inner;
  const long long off = from * inner;
  std::vector<double> out(static_cast<size_t>(outer) * dout);
  for (long long o = 0; o < outer; ++o)
    std::copy_n(a.values().data() + o * dfull + off, dout, out.data() + o * dout);
  return detail::make_result(
      out_shape, std::move(out), {a},
      [outer, dfull, dout, off](detail::TensorNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (long long o = 0; o < outer; ++o)
          for (long long i = 0; i < dout; ++i)
            p->grad[static_cast<size_t>(o * dfull + off + i)] +=
                self.grad[static_cast<size_t>(o * dout + i)];
      });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

// 2D convolution (cross-correlation), stride 1, zero padding that keeps
// spatial size ("same").  x:[B,Ci,H,W], k:[Co,Ci,K,K] with K odd, b:[Co].
inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
  if (x.rank() != 4)
    throw DimError(str("conv2d: input must be rank 4, got ", shape_str(x.shape())));
  if (k.rank() != 4)
    throw DimError(str("conv2d: kernel must be rank 4, got ", shape_str(k.shape())));
  if (b.rank() != 1)
    throw DimError(str("conv2d: bias must be rank 1, got ", shape_str(b.shape())));
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = k.dim(0), K = k.dim(2);
  if (k.dim(1) != Ci)
    throw DimError(str("conv2d: kernel channels ", shape_str(k.shape()),
                       " do not match input ", shape_str(x.shape())));
  if (k.dim(3) != K) throw ConfigError(str("conv2d: kernel must be square, got ",
                                           shape_str(k.shape())));
  if (K % 2 == 0)
    throw ConfigError(str("conv2d: kernel size must be odd, got ", K));
  if (b.dim(0) != Co)
    throw DimError(str("conv2d: bias shape ", shape_str(b.shape()),
                       " does not match output channels ", Co));
  const int P = K / 2;
  std::vector<double> out(static_cast<size_t>(B) * Co * H * W);
  auto xat = [&](int bb, int c, int y, int xx) {
    return x.values()[((static_cast<size_t>(bb) * Ci + c) * H + y) * W + xx];
  };
  for (int bb = 0; bb < B; ++bb)
    for (int co = 0; co < Co; ++co) {
      double* oplane = out.data() + (static_cast<size_t>(bb) * Co + co) * H * W;
      double bias = b[co];
      for (int i = 0; i < H * W; ++i) oplane[i] = bias;
      for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            double kv = k.values()[(((static_cast<size_t>(co) * Ci + ci) * K + ky) * K + kx)];
            if (kv == 0.0) continue;
            const int dy = ky - P, dx = kx - P;
            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
            for (int y = y0; y < y1; ++y) {
              double* orow = oplane + static_cast<size_t>(y) * W;
              const double* xrow = &x.values()[((static_cast<size_t>(bb) * Ci + ci) * H +
                                                (y + dy)) * W + dx];
              for (int xx = x0; xx < x1; ++xx) orow[xx] += kv * xrow[xx];
            }
          }
    }
  (void)xat;
  return detail::make_result(
      Shape{B, Co, H, W}, std::move(out), {x, k, b},
      [B, Ci, H, W, Co, K, P](detail::TensorNode& self) {
        auto& px = self.parents[0];
        auto& pk = self.parents[1];
        auto& pb = self.parents[2];
        if (px->requires_grad) px->ensure_grad();
        if (pk->requires_grad) pk->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (int bb = 0; bb < B; ++bb)
          for (int co = 0; co < Co; ++co) {
            const double* gplane =
                self.grad.data() + (static_cast<size_t>(bb) * Co + co) * H * W;
            if (pb->requires_grad) {
              double acc = 0.0;
              for (int i = 0; i < H * W; ++i) acc += gplane[i];
              pb->grad[co] += acc;
            }
            for (int ci = 0; ci < Ci; ++ci)
              for (int ky = 0; ky < K; ++ky)
                for (int kx = 0; kx < K; ++kx) {
                  const int dy = ky - P, dx = kx - P;
                  const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                  const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                  const size_t kidx =
                      ((static_cast<size_t>(co) * Ci + ci) * K + ky) * K + kx;
                  double kv = pk->data[kidx];
                  double kacc = 0.0;
                  for (int y = y0; y < y1; ++y) {
                    const double* grow = gplane + static_cast<size_t>(y) * W;
                    const size_t xoff =
                        ((static_cast<size_t>(bb) * Ci + ci) * H + (y + dy)) * W + dx;
                    if (pk->requires_grad) {
                      const double* xrow = px->data.data() + xoff;
                      for (int xx = x0; xx < x1; ++xx) kacc += grow[xx] * xrow[xx];
                    }
                    if (px->requires_grad && kv != 0.0) {
                      double* xgrow = px->grad.data() + xoff;
                      for (int xx = x0; xx < x1; ++xx) xgrow[xx] += kv * grow[xx];
                    }
                  }
                  if (pk->requires_grad) pk->grad[kidx] += kacc;
                }
          }
      });
}

// ---------------------------------------------------------------------------
// Resampling / broadcasting / reshaping
// ---------------------------------------------------------------------------

// Corner-aligned bilinear resize of the spatial dims of a rank-3 [C,H,W]
// or rank-4 [B,C,H,W] tensor.  A size-1 target dimension samples index 0.
inline Tensor bilinear_resize(const Tensor& x, int oh, int ow) {
  if (x.rank() != 3 && x.rank() != 4)
    throw DimError(str("bilinear_resize: need rank 3 or 4, got ", shape_str(x.shape())));
  if (oh < 1 || ow < 1)
    throw ConfigError(str("bilinear_resize: target size must be >= 1, got ", oh, "x", ow));
  const bool r4 = x.rank() == 4;
  const int B = r4 ? x.dim(0) : 1;
  const int C = r4 ? x.dim(1) : x.dim(0);
  const int H = r4 ? x.dim(2) : x.dim(1);
  const int W = r4 ? x.dim(3) : x.dim(2);
  struct Tap {
    int i0, i1;
    double w0, w1;
  };
  auto make_taps = [](int src, int dst) {
    std::vector<Tap> taps(static_cast<size_t>(dst));
    for (int o = 0; o < dst; ++o) {
      double s = dst == 1 ? 0.0
                          : static_cast<double>(o) * (src - 1) / (dst - 1);
      int i0 = static_cast<int>(std::floor(s));
      if (i0 > src - 1) i0 = src - 1;
      int i1 = std::min(i0 + 1, src - 1);
      double f = s - i0;
      taps[static_cast<size_t>(o)] = {i0, i1, 1.0 - f, f};
    }
    return taps;
  };
  auto ty = make_taps(H, oh);
  auto tx = make_taps(W, ow);
  std::vector<double> out(static_cast<size_t>(B) * C * oh * ow);
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = x.values().data() + static_cast<size_t>(bc) * H * W;
    double* dst = out.data() + static_cast<size_t>(bc) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const Tap& a = ty[static_cast<size_t>(y)];
      for (int xx = 0; xx < ow; ++xx) {
        const Tap& b = tx[static_cast<size_t>(xx)];
        dst[static_cast<size_t>(y) * ow + xx] =
            a.w0 * (b.w0 * src[static_cast<size_t>(a.i0) * W + b.i0] +
                    b.w1 * src[static_cast<size_t>(a.i0) * W + b.i1]) +
            a.w1 * (b.w0 * src[static_cast<size_t>(a.i1) * W + b.i0] +
                    b.w1 * src[static_cast<size_t>(a.i1) * W + b.i1]);
      }
    }
  }
  Shape out_shape = r4 ? Shape{B, C, oh, ow} : Shape{C, oh, ow};
  return detail::make_result(
      out_shape, std::move(out), {x},
      [B, C, H, W, oh, ow, ty, tx](detail::TensorNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
          double* sg = p->grad.data() + static_cast<size_t>(bc) * H * W;
          const double* dg = self.grad.data() + static_cast<size_t>(bc) * oh * ow;
          for (int y = 0; y < oh; ++y) {
            const Tap& a = ty[static_cast<size_t>(y)];
            for (int xx = 0; xx < ow; ++xx) {
              const Tap& b = tx[static_cast<size_t>(xx)];
              double g = dg[static_cast<size_t>(y) * ow + xx];
              sg[static_cast<size_t>(a.i0) * W + b.i0] += a.w0 * b.w0 * g;
              sg[static_cast<size_t>(a.i0) * W + b.i1] += a.w0 * b.w1 * g;
              sg[static_cast<size_t>(a.i1) * W + b.i0] += a.w1 * b.w0 * g;
              sg[static_cast<size_t>(a.i1) * W + b.i1] += a.w1 * b.w1 * g;
            }
          }
        }
      });
}

// [B,C] -> [B,C,H,W], replicating each feature across the spatial grid.
inline Tensor broadcast_spatial(const Tensor& v, int h, int w) {
  if (v.rank() != 2)
    throw DimError(str("broadcast_spatial: need rank 2, got ", shape_str(v.shape())));
  if (h < 1 || w < 1)
    throw ConfigError(str("broadcast_spatial: target size must be >= 1, got ", h, "x", w));
  const int B = v.dim(0), C = v.dim(1);
  std::vector<double> out(static_cast<size_t>(B) * C * h * w);
  for (int bc = 0; bc < B * C; ++bc)
    std::fill_n(out.data() + static_cast<size_t>(bc) * h * w, h * w,
                v.values()[static_cast<size_t>(bc)]);
  return detail::make_result(Shape{B, C, h, w}, std::move(out), {v},
                             [B, C, h, w](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (int bc = 0; bc < B * C; ++bc) {
                                 double acc = 0.0;
                                 const double* g =
                                     self.grad.data() + static_cast<size_t>(bc) * h * w;
                                 for (int i = 0; i < h * w; ++i) acc += g[i];
                                 p->grad[static_cast<size_t>(bc)] += acc;
                               }
                             });
}

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw DimError(str("reshape: ", shape_str(x.shape()), " has ", x.size(),
                       " elements, target ", shape_str(new_shape), " has ",
                       shape_numel(new_shape)));
  std::vector<double> out(x.values());
  return detail::make_result(std::move(new_shape), std::move(out), {x},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 p->grad[i] += self.grad[i];
                             });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return detail::make_result(Shape{1}, {acc}, {x},
                             [](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               double g = self.grad[0];
                               for (double& pg : p->grad) pg += g;
                             });
}

inline Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return detail::make_result(Shape{1}, {acc * inv}, {x},
                             [inv](detail::TensorNode& self) {
                               auto& p = self.parents[0];
                               if (!p->requires_grad) return;
                               p->ensure_grad();
                               double g = self.grad[0] * inv;
                               for (double& pg : p->grad) pg += g;
                             });
}

// Mean squared error over all elements.
inline Tensor mse_loss(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mse_loss");
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (long long i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return detail::make_result(
      Shape{1}, {acc * inv}, {a, b}, [inv](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        double g = self.grad[0] * 2.0 * inv;
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < pa->data.size(); ++i)
            pa->grad[i] += g * (pa->data[i] - pb->data[i]);
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < pb->data.size(); ++i)
            pb->grad[i] -= g * (pa->data[i] - pb->data[i]);
        }
      });
}

// Mean smooth-L1 (Huber with delta 1): 0.5 d^2 for |d| < 1, |d| - 0.5 else.
inline Tensor smooth_l1_loss(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "smooth_l1_loss");
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (long long i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    double ad = std::fabs(d);
    acc += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
  }
  return detail::make_result(
      Shape{1}, {acc * inv}, {a, b}, [inv](detail::TensorNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        double g = self.grad[0] * inv;
        for (size_t i = 0; i < pa->data.size(); ++i) {
          double d = pa->data[i] - pb->data[i];
          double dd = std::fabs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
          if (pa->requires_grad) {
            pa->ensure_grad();
            pa->grad[i] += g * dd;
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            pb->grad[i] -= g * dd;
          }
        }
      });
}

// Mean binary cross-entropy on logits against fixed targets in [0,1].
inline Tensor bce_logits_loss(const Tensor& logits, const std::vector<double>& targets) {
  if (static_cast<long long>(targets.size()) != logits.size())
    throw DimError(str("bce_logits_loss: ", targets.size(), " targets for ",
                       logits.size(), " logits"));
  const double inv = 1.0 / static_cast<double>(logits.size());
  double acc = 0.0;
  for (long long i = 0; i < logits.size(); ++i) {
    double l = logits[i], y = targets[static_cast<size_t>(i)];
    acc += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::fabs(l)));
  }
  return detail::make_result(
      Shape{1}, {acc * inv}, {logits},
      [inv, targets](detail::TensorNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        double g = self.grad[0] * inv;
        for (size_t i = 0; i < p->data.size(); ++i) {
          double s = 1.0 / (1.0 + std::exp(-p->data[i]));
          p->grad[i] += g * (s - targets[i]);
        }
      });
}

// Pixelwise softmax cross-entropy on logits:[C,H,W], averaged over the
// pixels where counted != 0.  Targets hold one class id per pixel
// (row-major).  No counted pixels -> loss 0 with zero gradient.
inline Tensor softmax_ce_masked(const Tensor& logits, const std::vector<int>& targets,
                                const std::vector<uint8_t>& counted) {
  if (logits.rank() != 3)
    throw DimError(str("softmax_ce_masked: logits must be rank 3 [C,H,W], got ",
                       shape_str(logits.shape())));
  const int C = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  const size_t npix = static_cast<size_t>(H) * W;
  if (targets.size() != npix || counted.size() != npix)
    throw DimError(str("softmax_ce_masked: expected ", npix, " targets/mask entries, got ",
                       targets.size(), "/", counted.size()));
  long long count = 0;
  double acc = 0.0;
  for (size_t p = 0; p < npix; ++p) {
    if (!counted[p]) continue;
    int t = targets[p];
    if (t < 0 || t >= C)
      throw LabelError(str("softmax_ce_masked: target class ", t, " at pixel ", p,
                           " outside [0,", C, ")"));
    ++count;
    double mx = logits[static_cast<long long>(p)];
    for (int c = 1; c < C; ++c)
      mx = std::max(mx, logits[static_cast<long long>(c * npix + p)]);
    double se = 0.0;
    for (int c = 0; c < C; ++c)
      se += std::exp(logits[static_cast<long long>(c * npix + p)] - mx);
    acc += mx + std::log(se) - logits[static_cast<long long>(t * npix + p)];
  }
  if (count == 0) return Tensor::scalar(0.0);
  const double inv = 1.0 / static_cast<double>(count);
  return detail::make_result(
      Shape{1}, {acc * inv}, {logits},
      [C, npix, inv, targets, counted](detail::TensorNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        double g = self.grad[0] * inv;
        for (size_t px = 0; px < npix; ++px) {
          if (!counted[px]) continue;
          double mx = p->data[px];
          for (int c = 1; c < C; ++c)
            mx = std::max(mx, p->data[static_cast<size_t>(c) * npix + px]);
          double se = 0.0;
          for (int c = 0; c < C; ++c)
            se += std::exp(p->data[static_cast<size_t>(c) * npix + px] - mx);
          for (int c = 0; c < C; ++c) {
            double soft = std::exp(p->data[static_cast<size_t>(c) * npix + px] - mx) / se;
            double onehot = (c == targets[px]) ? 1.0 : 0.0;
            p->grad[static_cast<size_t>(c) * npix + px] += g * (soft - onehot);
          }
        }
      });
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace panofc
