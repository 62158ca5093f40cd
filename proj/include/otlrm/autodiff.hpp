#pragma once

// Reverse-mode differentiation for the fixed computation graph of the
// generative model, plus the Adam update rule and a finite-difference
// validation harness.
//
// The op vocabulary is closed: leaves/constants, affine combinations,
// masked selection, mode-3 products by a matrix-valued node, face-wise
// products and transposes, f-diagonal embedding, the Householder reflection
// chain, LeakyReLU, CASSI shift-mask-sum, and l1 / squared-Frobenius
// reductions. Values are Tensor3 throughout; matrices travel as single-slice
// tensors. All loops run in a fixed order, so repeated evaluations are
// bit-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "otlrm/ortho.hpp"
#include "otlrm/random.hpp"
#include "otlrm/tensor.hpp"

namespace otlrm::ad {

enum class Op {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kScale,
  kMaskMul,
  kMode3,
  kFacewise,
  kTranspose,
  kDiagEmbed,
  kHouseholderChain,
  kLeakyRelu,
  kSumAbsDiffRows,
  kCassi,
  kSumAbs,
  kSumSq,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kScale: return "scale";
    case Op::kMaskMul: return "mask_mul";
    case Op::kMode3: return "mode3_product";
    case Op::kFacewise: return "facewise_product";
    case Op::kTranspose: return "facewise_transpose";
    case Op::kDiagEmbed: return "diag_embed";
    case Op::kHouseholderChain: return "householder_chain";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kSumAbsDiffRows: return "sum_abs_diff_rows";
    case Op::kCassi: return "cassi_forward";
    case Op::kSumAbs: return "sum_abs";
    case Op::kSumSq: return "sum_sq";
  }
  return "unknown";
}

template <typename T = double>
class Tape {
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    T scalar{};
    bool transpose_m = false;  // kMode3: multiply by M^T
    int shift = 0;             // kCassi
    Tensor3<T> aux;            // kMaskMul / kCassi mask
    Tensor3<T> value;
    Tensor3<T> grad;
  };

 public:
  int leaf(std::size_t s1, std::size_t s2, std::size_t s3) {
    Node n{Op::kLeaf};
    n.value = Tensor3<T>(s1, s2, s3);
    return push(std::move(n));
  }

  int constant(Tensor3<T> v) {
    Node n{Op::kConstant};
    n.value = std::move(v);
    return push(std::move(n));
  }

  int add(int a, int b) { return binary_same_shape(Op::kAdd, a, b); }
  int sub(int a, int b) { return binary_same_shape(Op::kSub, a, b); }

  int scale(int a, T c) {
    Node n{Op::kScale, a};
    n.scalar = c;
    n.value = like(a);
    return push(std::move(n));
  }

  int mask_mul(int a, Tensor3<T> mask) {
    if (!shape_of(a).same_shape(mask)) throw dim_error("mask_mul: mask shape mismatch");
    Node n{Op::kMaskMul, a};
    n.aux = std::move(mask);
    n.value = like(a);
    return push(std::move(n));
  }

  /// x ×_3 M (or M^T): m is a single-slice matrix-valued node.
  int mode3(int x, int m, bool transpose_m = false) {
    const Tensor3<T>& xs = shape_of(x);
    const Tensor3<T>& ms = shape_of(m);
    if (ms.n3() != 1) throw dim_error("mode3: matrix operand must be single-slice");
    const std::size_t in = transpose_m ? ms.n1() : ms.n2();
    const std::size_t out = transpose_m ? ms.n2() : ms.n1();
    if (in != xs.n3()) throw dim_error("mode3: matrix inner dim != tensor n3");
    Node n{Op::kMode3, x, m};
    n.transpose_m = transpose_m;
    n.value = Tensor3<T>(xs.n1(), xs.n2(), out);
    return push(std::move(n));
  }

  int facewise(int a, int b) {
    const Tensor3<T>& as = shape_of(a);
    const Tensor3<T>& bs = shape_of(b);
    if (as.n2() != bs.n1() || as.n3() != bs.n3()) throw dim_error("facewise: shape mismatch");
    Node n{Op::kFacewise, a, b};
    n.value = Tensor3<T>(as.n1(), bs.n2(), as.n3());
    return push(std::move(n));
  }

  int transpose_fw(int a) {
    const Tensor3<T>& as = shape_of(a);
    Node n{Op::kTranspose, a};
    n.value = Tensor3<T>(as.n2(), as.n1(), as.n3());
    return push(std::move(n));
  }

  /// Single-slice [n3, r] -> f-diagonal [r, r, n3].
  int diag_embed(int s) {
    const Tensor3<T>& ss = shape_of(s);
    if (ss.n3() != 1) throw dim_error("diag_embed: single-slice input expected");
    Node n{Op::kDiagEmbed, s};
    n.value = Tensor3<T>(ss.n2(), ss.n2(), ss.n1());
    return push(std::move(n));
  }

  /// Single-slice n x n parameters -> L = F_1 ... F_n, single-slice n x n.
  int householder_chain(int w) {
    const Tensor3<T>& ws = shape_of(w);
    if (ws.n3() != 1 || ws.n1() != ws.n2()) {
      throw dim_error("householder_chain: square single-slice parameters expected");
    }
    Node n{Op::kHouseholderChain, w};
    n.value = Tensor3<T>(ws.n1(), ws.n2(), 1);
    return push(std::move(n));
  }

  int leaky_relu(int a, T slope) {
    Node n{Op::kLeakyRelu, a};
    n.scalar = slope;
    n.value = like(a);
    return push(std::move(n));
  }

  /// Sum of |x(i+1,j,k) - x(i,j,k)| over forward differences along mode 1.
  int sum_abs_diff_rows(int a) {
    Node n{Op::kSumAbsDiffRows, a};
    n.value = Tensor3<T>(1, 1, 1);
    return push(std::move(n));
  }

  /// CASSI shift-mask-sum: [n1,n2,n3] -> single-slice [n1, n2 + d(n3-1)].
  int cassi(int x, Tensor3<T> mask, int shift) {
    const Tensor3<T>& xs = shape_of(x);
    if (shift < 1) throw dim_error("cassi: shift must be >= 1");
    if (mask.n1() != xs.n1() || mask.n2() != xs.n2() || mask.n3() != 1) {
      throw dim_error("cassi: mask shape mismatch");
    }
    Node n{Op::kCassi, x};
    n.shift = shift;
    n.aux = std::move(mask);
    n.value = Tensor3<T>(xs.n1(), xs.n2() + static_cast<std::size_t>(shift) * (xs.n3() - 1), 1);
    return push(std::move(n));
  }

  int sum_abs(int a) { return reduction(Op::kSumAbs, a); }
  int sum_sq(int a) { return reduction(Op::kSumSq, a); }

  void set_leaf(int id, const Tensor3<T>& v) {
    Node& n = node(id);
    if (n.op != Op::kLeaf) throw dim_error("set_leaf: node is not a leaf");
    if (!n.value.same_shape(v)) throw dim_error("set_leaf: shape mismatch");
    n.value = v;
  }

  const Tensor3<T>& value(int id) const { return node(id).value; }
  const Tensor3<T>& grad(int id) const { return node(id).grad; }
  std::size_t size() const { return nodes_.size(); }

  T scalar_at(int id) const {
    const Tensor3<T>& v = node(id).value;
    if (v.size() != 1) throw dim_error("scalar_at: node is not scalar");
    return v.data()[0];
  }

  /// Evaluate every node in construction (topological) order.
  void forward() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      eval(static_cast<int>(i));
      check_finite(static_cast<int>(i));
    }
  }

  /// Accumulate d(out)/d(node) for all nodes; out must be scalar.
  void backward(int out) {
    if (node(out).value.size() != 1) throw dim_error("backward: output must be scalar");
    for (Node& n : nodes_) {
      if (n.grad.size() != n.value.size()) {
        n.grad = Tensor3<T>(n.value.n1(), n.value.n2(), n.value.n3());
      } else {
        std::fill(n.grad.data().begin(), n.grad.data().end(), T{});
      }
    }
    node(out).grad.data()[0] = T(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) propagate(i);
  }

 private:
  std::vector<Node> nodes_;

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor3<T>& shape_of(int id) const { return node(id).value; }
  Tensor3<T> like(int id) const {
    const Tensor3<T>& s = shape_of(id);
    return Tensor3<T>(s.n1(), s.n2(), s.n3());
  }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int binary_same_shape(Op op, int a, int b) {
    if (!shape_of(a).same_shape(shape_of(b))) {
      throw dim_error(std::string(op_name(op)) + ": shape mismatch");
    }
    Node n{op, a, b};
    n.value = like(a);
    return push(std::move(n));
  }

  int reduction(Op op, int a) {
    Node n{op, a};
    n.value = Tensor3<T>(1, 1, 1);
    return push(std::move(n));
  }

  void check_finite(int id) {
    const Node& n = node(id);
    T acc{};
    for (const T v : n.value.data()) acc += v;
    if (!std::isfinite(acc)) {
      throw numeric_error("non-finite value produced by op " +
                          std::string(op_name(n.op)) + " (node " + std::to_string(id) + ")");
    }
  }

  void eval(int id) {
    Node& n = node(id);
    const std::vector<T>* pa = n.a >= 0 ? &node(n.a).value.data() : nullptr;
    const std::vector<T>* pb = n.b >= 0 ? &node(n.b).value.data() : nullptr;
    std::vector<T>& out = n.value.data();
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*pa)[i] + (*pb)[i];
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*pa)[i] - (*pb)[i];
        break;
      case Op::kScale:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.scalar * (*pa)[i];
        break;
      case Op::kMaskMul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.aux.data()[i] * (*pa)[i];
        break;
      case Op::kLeakyRelu:
        for (std::size_t i = 0; i < out.size(); ++i) {
          const T x = (*pa)[i];
          out[i] = x >= T(0) ? x : n.scalar * x;
        }
        break;
      case Op::kMode3:
        eval_mode3(n);
        break;
      case Op::kFacewise:
        eval_facewise(n);
        break;
      case Op::kTranspose: {
        const Tensor3<T>& x = node(n.a).value;
        for (std::size_t k = 0; k < x.n3(); ++k)
          for (std::size_t i = 0; i < x.n1(); ++i)
            for (std::size_t j = 0; j < x.n2(); ++j) n.value(j, i, k) = x(i, j, k);
        break;
      }
      case Op::kDiagEmbed: {
        const Tensor3<T>& s = node(n.a).value;  // [n3, r, 1]
        std::fill(out.begin(), out.end(), T{});
        for (std::size_t k = 0; k < s.n1(); ++k)
          for (std::size_t i = 0; i < s.n2(); ++i) n.value(i, i, k) = s(k, i, 0);
        break;
      }
      case Op::kHouseholderChain: {
        const Tensor3<T>& wt = node(n.a).value;
        Matrix<T> w(wt.n1(), wt.n2());
        for (std::size_t i = 0; i < wt.n1(); ++i)
          for (std::size_t j = 0; j < wt.n2(); ++j) w(i, j) = wt(i, j, 0);
        const Matrix<T> l = otlrm::build_matrix(w);
        for (std::size_t i = 0; i < l.rows(); ++i)
          for (std::size_t j = 0; j < l.cols(); ++j) n.value(i, j, 0) = l(i, j);
        break;
      }
      case Op::kSumAbsDiffRows: {
        const Tensor3<T>& x = node(n.a).value;
        T acc{};
        for (std::size_t k = 0; k < x.n3(); ++k)
          for (std::size_t i = 0; i + 1 < x.n1(); ++i)
            for (std::size_t j = 0; j < x.n2(); ++j)
              acc += std::abs(x(i + 1, j, k) - x(i, j, k));
        out[0] = acc;
        break;
      }
      case Op::kCassi: {
        const Tensor3<T>& x = node(n.a).value;
        std::fill(out.begin(), out.end(), T{});
        const std::size_t d = static_cast<std::size_t>(n.shift);
        for (std::size_t k = 0; k < x.n3(); ++k)
          for (std::size_t i = 0; i < x.n1(); ++i)
            for (std::size_t j = 0; j < x.n2(); ++j)
              n.value(i, j + d * k, 0) += x(i, j, k) * n.aux(i, j, 0);
        break;
      }
      case Op::kSumAbs: {
        T acc{};
        for (const T v : *pa) acc += std::abs(v);
        out[0] = acc;
        break;
      }
      case Op::kSumSq: {
        T acc{};
        for (const T v : *pa) acc += v * v;
        out[0] = acc;
        break;
      }
    }
  }

  void eval_mode3(Node& n) {
    const Tensor3<T>& x = node(n.a).value;
    const Tensor3<T>& m = node(n.b).value;  // [p, q, 1]
    std::fill(n.value.data().begin(), n.value.data().end(), T{});
    const std::size_t slice = x.n1() * x.n2();
    const std::size_t rows = n.value.n3();
    for (std::size_t q = 0; q < rows; ++q) {
      T* dst = n.value.slice(q);
      for (std::size_t k = 0; k < x.n3(); ++k) {
        const T coef = n.transpose_m ? m(k, q, 0) : m(q, k, 0);
        if (coef == T(0)) continue;
        const T* src = x.slice(k);
        for (std::size_t s = 0; s < slice; ++s) dst[s] += coef * src[s];
      }
    }
  }

  void eval_facewise(Node& n) {
    const Tensor3<T>& a = node(n.a).value;
    const Tensor3<T>& b = node(n.b).value;
    std::fill(n.value.data().begin(), n.value.data().end(), T{});
    const std::size_t m = a.n1(), inner = a.n2(), cols = b.n2();
    for (std::size_t k = 0; k < a.n3(); ++k) {
      const T* pa = a.slice(k);
      const T* pb = b.slice(k);
      T* pc = n.value.slice(k);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < inner; ++l) {
          const T ail = pa[i * inner + l];
          if (ail == T(0)) continue;
          const T* brow = pb + l * cols;
          T* crow = pc + i * cols;
          for (std::size_t j = 0; j < cols; ++j) crow[j] += ail * brow[j];
        }
      }
    }
  }

  void propagate(int id) {
    Node& n = node(id);
    const std::vector<T>& g = n.grad.data();
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd: {
        std::vector<T>& ga = node(n.a).grad.data();
        std::vector<T>& gb = node(n.b).grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        std::vector<T>& ga = node(n.a).grad.data();
        std::vector<T>& gb = node(n.b).grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kScale: {
        std::vector<T>& ga = node(n.a).grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
        break;
      }
      case Op::kMaskMul: {
        std::vector<T>& ga = node(n.a).grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.aux.data()[i] * g[i];
        break;
      }
      case Op::kLeakyRelu: {
        const std::vector<T>& x = node(n.a).value.data();
        std::vector<T>& ga = node(n.a).grad.data();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += (x[i] > T(0) ? T(1) : n.scalar) * g[i];
        break;
      }
      case Op::kMode3:
        back_mode3(n);
        break;
      case Op::kFacewise:
        back_facewise(n);
        break;
      case Op::kTranspose: {
        Tensor3<T>& ga = node(n.a).grad;
        for (std::size_t k = 0; k < ga.n3(); ++k)
          for (std::size_t i = 0; i < ga.n1(); ++i)
            for (std::size_t j = 0; j < ga.n2(); ++j) ga(i, j, k) += n.grad(j, i, k);
        break;
      }
      case Op::kDiagEmbed: {
        Tensor3<T>& ga = node(n.a).grad;  // [n3, r, 1]
        for (std::size_t k = 0; k < ga.n1(); ++k)
          for (std::size_t i = 0; i < ga.n2(); ++i) ga(k, i, 0) += n.grad(i, i, k);
        break;
      }
      case Op::kHouseholderChain:
        back_householder(n);
        break;
      case Op::kSumAbsDiffRows: {
        const Tensor3<T>& x = node(n.a).value;
        Tensor3<T>& ga = node(n.a).grad;
        const T seed = g[0];
        for (std::size_t k = 0; k < x.n3(); ++k)
          for (std::size_t i = 0; i + 1 < x.n1(); ++i)
            for (std::size_t j = 0; j < x.n2(); ++j) {
              const T d = x(i + 1, j, k) - x(i, j, k);
              const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
              ga(i + 1, j, k) += seed * s;
              ga(i, j, k) -= seed * s;
            }
        break;
      }
      case Op::kCassi: {
        Tensor3<T>& ga = node(n.a).grad;
        const std::size_t d = static_cast<std::size_t>(n.shift);
        for (std::size_t k = 0; k < ga.n3(); ++k)
          for (std::size_t i = 0; i < ga.n1(); ++i)
            for (std::size_t j = 0; j < ga.n2(); ++j)
              ga(i, j, k) += n.grad(i, j + d * k, 0) * n.aux(i, j, 0);
        break;
      }
      case Op::kSumAbs: {
        const std::vector<T>& x = node(n.a).value.data();
        std::vector<T>& ga = node(n.a).grad.data();
        const T seed = g[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
          ga[i] += seed * s;
        }
        break;
      }
      case Op::kSumSq: {
        const std::vector<T>& x = node(n.a).value.data();
        std::vector<T>& ga = node(n.a).grad.data();
        const T seed = g[0];
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += seed * T(2) * x[i];
        break;
      }
    }
  }

  void back_mode3(Node& n) {
    const Tensor3<T>& x = node(n.a).value;
    const Tensor3<T>& m = node(n.b).value;
    Tensor3<T>& gx = node(n.a).grad;
    Tensor3<T>& gm = node(n.b).grad;
    const std::size_t slice = x.n1() * x.n2();
    const std::size_t rows = n.value.n3();
    // dX = g x_3 A^T
    for (std::size_t k = 0; k < x.n3(); ++k) {
      T* dst = gx.slice(k);
      for (std::size_t q = 0; q < rows; ++q) {
        const T coef = n.transpose_m ? m(k, q, 0) : m(q, k, 0);
        if (coef == T(0)) continue;
        const T* src = n.grad.slice(q);
        for (std::size_t s = 0; s < slice; ++s) dst[s] += coef * src[s];
      }
    }
    // dA(q,k) = <g slice q, X slice k>
    for (std::size_t q = 0; q < rows; ++q) {
      const T* gs = n.grad.slice(q);
      for (std::size_t k = 0; k < x.n3(); ++k) {
        const T* xs = x.slice(k);
        T acc{};
        for (std::size_t s = 0; s < slice; ++s) acc += gs[s] * xs[s];
        if (n.transpose_m) {
          gm(k, q, 0) += acc;
        } else {
          gm(q, k, 0) += acc;
        }
      }
    }
  }

  void back_facewise(Node& n) {
    const Tensor3<T>& a = node(n.a).value;
    const Tensor3<T>& b = node(n.b).value;
    Tensor3<T>& ga = node(n.a).grad;
    Tensor3<T>& gb = node(n.b).grad;
    const std::size_t m = a.n1(), inner = a.n2(), cols = b.n2();
    for (std::size_t k = 0; k < a.n3(); ++k) {
      const T* pa = a.slice(k);
      const T* pb = b.slice(k);
      const T* pg = n.grad.slice(k);
      T* pga = ga.slice(k);
      T* pgb = gb.slice(k);
      // dA = g B^T, dB = A^T g, per slice
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < inner; ++l) {
          T acc{};
          const T* grow = pg + i * cols;
          const T* brow = pb + l * cols;
          for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
          pga[i * inner + l] += acc;
        }
      }
      for (std::size_t l = 0; l < inner; ++l) {
        for (std::size_t i = 0; i < m; ++i) {
          const T ail = pa[i * inner + l];
          if (ail == T(0)) continue;
          const T* grow = pg + i * cols;
          T* brow = pgb + l * cols;
          for (std::size_t j = 0; j < cols; ++j) brow[j] += ail * grow[j];
        }
      }
    }
  }

  // Vector-Jacobian product through L = F_1 ... F_n. For column i with
  // M_i = (F_1...F_{i-1})^T G (F_{i+1}...F_n)^T:
  //   dw_i = -(2/s_i) (M_i + M_i^T) w_i + (4 w_i^T M_i w_i / s_i^2) w_i.
  // Prefix transposes and suffix-multiplied seeds are maintained by rank-1
  // updates, so the whole pass is O(n^3).
  void back_householder(Node& n) {
    const Tensor3<T>& wt = node(n.a).value;
    Tensor3<T>& gw = node(n.a).grad;
    const std::size_t nn = wt.n1();

    std::vector<std::vector<T>> w(nn, std::vector<T>(nn));
    std::vector<T> s(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      T acc{};
      for (std::size_t row = 0; row < nn; ++row) {
        w[i][row] = wt(row, i, 0);
        acc += w[i][row] * w[i][row];
      }
      s[i] = acc;
    }

    // a_mats[i] = F_{i-1} ... F_1 F_0 = (F_0 ... F_{i-1})^T
    std::vector<Matrix<T>> a_mats(nn);
    Matrix<T> acc_a = Matrix<T>::identity(nn);
    std::vector<T> tmp(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      a_mats[i] = acc_a;
      if (i + 1 < nn) {
        // acc_a := F_i acc_a
        const T c = T(2) / s[i];
        for (std::size_t col = 0; col < nn; ++col) {
          T d{};
          for (std::size_t row = 0; row < nn; ++row) d += w[i][row] * acc_a(row, col);
          tmp[col] = c * d;
        }
        for (std::size_t row = 0; row < nn; ++row)
          for (std::size_t col = 0; col < nn; ++col) acc_a(row, col) -= w[i][row] * tmp[col];
      }
    }

    // b = G (F_{i+1} ... F_{n-1})^T, walked from i = n-1 downward.
    Matrix<T> b(nn, nn);
    for (std::size_t r = 0; r < nn; ++r)
      for (std::size_t c = 0; c < nn; ++c) b(r, c) = n.grad(r, c, 0);

    std::vector<T> bw(nn), mw(nn), mtw(nn), atw(nn);
    for (std::size_t step = nn; step-- > 0;) {
      const Matrix<T>& am = a_mats[step];
      const std::vector<T>& wi = w[step];
      // M w = A (B w); M^T w = B^T (A^T w)
      for (std::size_t r = 0; r < nn; ++r) {
        T acc{};
        for (std::size_t c = 0; c < nn; ++c) acc += b(r, c) * wi[c];
        bw[r] = acc;
      }
      for (std::size_t r = 0; r < nn; ++r) {
        T acc{};
        for (std::size_t c = 0; c < nn; ++c) acc += am(r, c) * bw[c];
        mw[r] = acc;
      }
      for (std::size_t c = 0; c < nn; ++c) {
        T acc{};
        for (std::size_t r = 0; r < nn; ++r) acc += am(r, c) * wi[r];
        atw[c] = acc;
      }
      for (std::size_t c = 0; c < nn; ++c) {
        T acc{};
        for (std::size_t r = 0; r < nn; ++r) acc += b(r, c) * atw[r];
        mtw[c] = acc;
      }
      T wmw{};
      for (std::size_t r = 0; r < nn; ++r) wmw += wi[r] * mw[r];

      const T inv_s = T(1) / s[step];
      const T c1 = T(-2) * inv_s;
      const T c2 = T(4) * wmw * inv_s * inv_s;
      for (std::size_t r = 0; r < nn; ++r) {
        gw(r, step, 0) += c1 * (mw[r] + mtw[r]) + c2 * wi[r];
      }

      if (step > 0) {
        // b := b F_step (reusing bw = B w)
        const T c = T(2) * inv_s;
        for (std::size_t r = 0; r < nn; ++r) {
          const T coef = c * bw[r];
          for (std::size_t col = 0; col < nn; ++col) b(r, col) -= coef * wi[col];
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Parameter sets

/// Named learnable leaves, each paired with a same-shaped gradient
/// accumulator. Matrices are stored as single-slice tensors.
template <typename T = double>
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor3<T> value;
    Tensor3<T> grad;
  };

  std::vector<Entry> entries;

  void add(std::string name, Tensor3<T> value) {
    Tensor3<T> grad(value.n1(), value.n2(), value.n3());
    entries.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
  }

  Entry& at(const std::string& name) {
    for (Entry& e : entries)
      if (e.name == name) return e;
    throw dim_error("ParamSet: no parameter named " + name);
  }

  const Entry& at(const std::string& name) const {
    for (const Entry& e : entries)
      if (e.name == name) return e;
    throw dim_error("ParamSet: no parameter named " + name);
  }

  bool has(const std::string& name) const {
    for (const Entry& e : entries)
      if (e.name == name) return true;
    return false;
  }

  void zero_grads() {
    for (Entry& e : entries) std::fill(e.grad.data().begin(), e.grad.data().end(), T{});
  }
};

/// A built objective: the tape, the leaf binding (parameter name -> leaf
/// node), and the scalar output node.
template <typename T = double>
struct Program {
  Tape<T> tape;
  std::vector<std::pair<std::string, int>> leaves;
  int output = -1;
};

template <typename T>
void load_leaves(Program<T>& prog, const ParamSet<T>& params) {
  for (const auto& [name, id] : prog.leaves) prog.tape.set_leaf(id, params.at(name).value);
}

/// Objective value only (no gradients).
template <typename T>
T value_only(Program<T>& prog, const ParamSet<T>& params) {
  load_leaves(prog, params);
  prog.tape.forward();
  return prog.tape.scalar_at(prog.output);
}

/// Objective value and exact gradients for every bound leaf, written into the
/// parameter set's accumulators (reset first).
template <typename T>
T value_and_grad(Program<T>& prog, ParamSet<T>& params) {
  load_leaves(prog, params);
  prog.tape.forward();
  prog.tape.backward(prog.output);
  params.zero_grads();
  for (const auto& [name, id] : prog.leaves) {
    auto& dst = params.at(name).grad.data();
    const auto& src = prog.tape.grad(id).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i];
  }
  return prog.tape.scalar_at(prog.output);
}

// ---------------------------------------------------------------------------
// Adam

template <typename T = double>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T = double>
struct AdamState {
  AdamConfig<T> cfg;
  long t = 0;
  std::vector<Tensor3<T>> m;
  std::vector<Tensor3<T>> v;

  explicit AdamState(const ParamSet<T>& params, AdamConfig<T> config = {}) : cfg(config) {
    if (!(cfg.lr > T(0))) throw precondition_error("AdamState: lr must be positive");
    for (const auto& e : params.entries) {
      m.emplace_back(e.value.n1(), e.value.n2(), e.value.n3());
      v.emplace_back(e.value.n1(), e.value.n2(), e.value.n3());
    }
  }
};

/// Standard bias-corrected Adam recurrence, applied entrywise from the
/// gradients currently held in the parameter set.
template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.entries.size()) throw dim_error("adam_step: state mismatch");
  ++state.t;
  const T b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const T corr1 = T(1) - std::pow(b1, static_cast<T>(state.t));
  const T corr2 = T(1) - std::pow(b2, static_cast<T>(state.t));
  for (std::size_t p = 0; p < params.entries.size(); ++p) {
    auto& value = params.entries[p].value.data();
    const auto& grad = params.entries[p].grad.data();
    auto& m = state.m[p].data();
    auto& v = state.v[p].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T mhat = m[i] / corr1;
      const T vhat = v[i] / corr2;
      value[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference validation

/// Worst relative error between analytic gradients and central differences
/// over randomly probed coordinates. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8).
template <typename T>
T grad_check(Program<T>& prog, ParamSet<T>& params, T h, int probes, Rng& rng) {
  if (!(h > T(0))) throw precondition_error("grad_check: h must be positive");
  value_and_grad(prog, params);
  std::vector<Tensor3<T>> analytic;
  for (const auto& e : params.entries) analytic.push_back(e.grad);

  T worst{};
  for (int p = 0; p < probes; ++p) {
    const std::size_t leaf = rng.index(params.entries.size());
    auto& value = params.entries[leaf].value.data();
    const std::size_t idx = rng.index(value.size());
    const T saved = value[idx];
    value[idx] = saved + h;
    const T fp = value_only(prog, params);
    value[idx] = saved - h;
    const T fm = value_only(prog, params);
    value[idx] = saved;
    const T numeric = (fp - fm) / (T(2) * h);
    const T exact = analytic[leaf].data()[idx];
    const T denom = std::max({std::abs(numeric), std::abs(exact), T(1e-8)});
    worst = std::max(worst, std::abs(numeric - exact) / denom);
  }
  return worst;
}

}  // namespace otlrm::ad
