#include "csirope/autodiff/ops.hpp"

#include <cblas.h>
#include <cmath>
#include <numbers>

#include "csirope/errors.hpp"

namespace csirope::ad {

namespace {

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

bool needs(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

std::vector<double>& gbuf(Node& self, std::size_t i) { return self.inputs[i]->grad_buffer(); }

struct Broadcast {
  enum Kind { kEqual, kColumn, kRow } kind = kEqual;
  std::size_t period = 1;  // inner extent (column) or b size (row)

  std::size_t index(std::size_t i) const {
    switch (kind) {
      case kColumn: return i / period;
      case kRow: return i % period;
      default: return i;
    }
  }
};

Broadcast resolve_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return {};
  if (a.size() == b.size()) {
    std::size_t k = b.size();
    while (k > 0 && b[k - 1] == 1) --k;
    bool prefix_ok = k < b.size();
    for (std::size_t i = 0; i < k && prefix_ok; ++i) prefix_ok = a[i] == b[i];
    if (prefix_ok) {
      std::size_t inner = 1;
      for (std::size_t i = k; i < a.size(); ++i) inner *= a[i];
      return {Broadcast::kColumn, inner};
    }
  }
  if (!b.empty() && b.size() < a.size() &&
      std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    return {Broadcast::kRow, numel(b)};
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " against " +
                   shape_str(a));
}

const char* elem_name(ElemOp op) {
  switch (op) {
    case ElemOp::kAdd: return "add";
    case ElemOp::kSub: return "sub";
    case ElemOp::kMul: return "mul";
    case ElemOp::kNeg: return "neg";
    case ElemOp::kSin: return "sin";
    case ElemOp::kCos: return "cos";
    case ElemOp::kExp: return "exp";
    case ElemOp::kSqr: return "sqr";
  }
  return "?";
}

Tensor binary(ElemOp op, const Tensor& a, const Tensor& b) {
  const char* name = elem_name(op);
  Broadcast bc = resolve_broadcast(a.shape(), b.shape(), name);
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double y = bv[bc.index(i)];
    switch (op) {
      case ElemOp::kAdd: out[i] = av[i] + y; break;
      case ElemOp::kSub: out[i] = av[i] - y; break;
      default: out[i] = av[i] * y; break;
    }
  }
  return make_result(name, a.shape(), std::move(out), {a, b}, [op, bc](Node& self) {
    const auto& g = self.grad;
    const auto& x = self.inputs[0]->value;
    const auto& y = self.inputs[1]->value;
    if (needs(self, 0)) {
      auto& da = gbuf(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i)
        da[i] += op == ElemOp::kMul ? g[i] * y[bc.index(i)] : g[i];
    }
    if (needs(self, 1)) {
      auto& db = gbuf(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        std::size_t j = bc.index(i);
        switch (op) {
          case ElemOp::kAdd: db[j] += g[i]; break;
          case ElemOp::kSub: db[j] -= g[i]; break;
          default: db[j] += g[i] * x[i]; break;
        }
      }
    }
  });
}

template <class F, class D>
Tensor unary(const char* name, const Tensor& a, F f, D dfdx) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_result(name, a.shape(), std::move(out), {a}, [dfdx](Node& self) {
    const auto& x = self.inputs[0]->value;
    auto& da = gbuf(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) da[i] += self.grad[i] * dfdx(x[i], self.value[i]);
  });
}

}  // namespace

Tensor elementwise(ElemOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElemOp::kAdd:
    case ElemOp::kSub:
    case ElemOp::kMul:
      if (!b.defined()) throw ContractError(std::string(elem_name(op)) + " needs two operands");
      return binary(op, a, b);
    case ElemOp::kNeg:
      return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
    case ElemOp::kSin:
      return unary("sin", a, [](double x) { return std::sin(x); },
                   [](double x, double) { return std::cos(x); });
    case ElemOp::kCos:
      return unary("cos", a, [](double x) { return std::cos(x); },
                   [](double x, double) { return -std::sin(x); });
    case ElemOp::kExp:
      return unary("exp", a, [](double x) { return std::exp(x); },
                   [](double, double y) { return y; });
    case ElemOp::kSqr:
      return unary("sqr", a, [](double x) { return x * x; },
                   [](double x, double) { return 2.0 * x; });
  }
  throw ContractError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElemOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElemOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElemOp::kMul, a, b); }
Tensor neg(const Tensor& a) { return elementwise(ElemOp::kNeg, a); }
Tensor sin(const Tensor& a) { return elementwise(ElemOp::kSin, a); }
Tensor cos(const Tensor& a) { return elementwise(ElemOp::kCos, a); }
Tensor exp(const Tensor& a) { return elementwise(ElemOp::kExp, a); }
Tensor sqr(const Tensor& a) { return elementwise(ElemOp::kSqr, a); }

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        double t = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
      });
}

namespace {

// C (m x n) += op(A) * op(B) with row-major storage.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* A,
          const double* B, double* C) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), 1.0, A,
              static_cast<blasint>(ta ? m : k), B, static_cast<blasint>(tb ? k : n), 1.0, C,
              static_cast<blasint>(n));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.inputs[0]->value.data();
    const double* B = self.inputs[1]->value.data();
    // dA = G B^T, dB = A^T G
    if (needs(self, 0)) gemm(false, true, m, k, n, G, B, gbuf(self, 0).data());
    if (needs(self, 1)) gemm(true, false, k, n, m, A, G, gbuf(self, 1).data());
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm(false, true, m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.inputs[0]->value.data();
    const double* B = self.inputs[1]->value.data();
    // dA = G B, dB = G^T A
    if (needs(self, 0)) gemm(false, false, m, k, n, G, B, gbuf(self, 0).data());
    if (needs(self, 1)) gemm(true, false, n, k, m, G, A, gbuf(self, 1).data());
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& da = gbuf(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& da = gbuf(self, 0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (start + len > n) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of " + shape_str(a.shape()));
  }
  auto av = a.data();
  std::vector<double> out(m * len);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = av[i * n + start + j];
  return make_result("slice_cols", {m, len}, std::move(out), {a}, [m, n, start, len](Node& self) {
    auto& da = gbuf(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) da[i * n + start + j] += self.grad[i * len + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    auto pv = parts[q].data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[q]; ++j) out[i * total + off + j] = pv[i * widths[q] + j];
    off += widths[q];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat_cols", {m, total}, std::move(out), std::move(inputs),
                     [m, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t q = 0; q < widths.size(); ++q) {
                         if (needs(self, q)) {
                           auto& d = gbuf(self, q);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[q]; ++j)
                               d[i * widths[q] + j] += self.grad[i * total + off + j];
                         }
                         off += widths[q];
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    rows += p.dim(0);
    sizes.push_back(p.size());
  }
  std::vector<double> out;
  out.reserve(rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result("concat_rows", {rows, n}, std::move(out), std::move(inputs),
                     [sizes](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t q = 0; q < sizes.size(); ++q) {
                         if (needs(self, q)) {
                           auto& d = gbuf(self, q);
                           for (std::size_t i = 0; i < sizes[q]; ++i) d[i] += self.grad[off + i];
                         }
                         off += sizes[q];
                       }
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_rank(a, 2, "gather_rows");
  const std::size_t rows = a.dim(0), n = a.dim(1);
  std::vector<std::size_t> idx(index.begin(), index.end());
  auto av = a.data();
  std::vector<double> out(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("gather_rows: row " + std::to_string(idx[i]) + " out of " +
                       shape_str(a.shape()));
    }
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(idx[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  Shape shape{idx.size(), n};
  return make_result("gather_rows", std::move(shape), std::move(out), {a},
                     [idx = std::move(idx), n](Node& self) {
                       auto& da = gbuf(self, 0);
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           da[idx[i] * n + j] += self.grad[i * n + j];
                     });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::optional<std::size_t> axis) {
  std::size_t outer = 1, len = a.size(), inner = 1;
  Shape out_shape{1};
  if (axis) {
    if (*axis >= a.rank()) {
      throw ShapeError("reduce: axis " + std::to_string(*axis) + " out of range for " +
                       shape_str(a.shape()));
    }
    len = a.shape()[*axis];
    for (std::size_t i = 0; i < *axis; ++i) outer *= a.shape()[i];
    for (std::size_t i = *axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    out_shape.clear();
    for (std::size_t i = 0; i < a.rank(); ++i)
      if (i != *axis) out_shape.push_back(a.shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);
  }
  if (op == ReduceOp::kStd && len < 2) {
    throw ContractError("std: degenerate reduction over " + std::to_string(len) +
                        " element(s) of " + shape_str(a.shape()));
  }
  if (len == 0) throw ContractError("reduce: empty reduction");

  auto av = a.data();
  std::vector<double> out(outer * inner);
  std::vector<double> means;
  if (op == ReduceOp::kStd) means.resize(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double s = 0.0;
      for (std::size_t r = 0; r < len; ++r) s += av[(o * len + r) * inner + in];
      const std::size_t q = o * inner + in;
      if (op == ReduceOp::kSum) {
        out[q] = s;
      } else if (op == ReduceOp::kMean) {
        out[q] = s / static_cast<double>(len);
      } else {
        const double mu = s / static_cast<double>(len);
        double ss = 0.0;
        for (std::size_t r = 0; r < len; ++r) {
          const double d = av[(o * len + r) * inner + in] - mu;
          ss += d * d;
        }
        means[q] = mu;
        out[q] = std::sqrt(ss / static_cast<double>(len));
      }
    }
  }
  const char* name = op == ReduceOp::kSum ? "sum" : op == ReduceOp::kMean ? "mean" : "std";
  return make_result(name, std::move(out_shape), std::move(out), {a},
                     [op, outer, len, inner, means = std::move(means)](Node& self) {
                       auto& da = gbuf(self, 0);
                       const auto& x = self.inputs[0]->value;
                       const double n = static_cast<double>(len);
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t in = 0; in < inner; ++in) {
                           const std::size_t q = o * inner + in;
                           const double g = self.grad[q];
                           for (std::size_t r = 0; r < len; ++r) {
                             const std::size_t i = (o * len + r) * inner + in;
                             if (op == ReduceOp::kSum) {
                               da[i] += g;
                             } else if (op == ReduceOp::kMean) {
                               da[i] += g / n;
                             } else if (self.value[q] > 0.0) {
                               // Undefined at zero spread; that case contributes nothing.
                               da[i] += g * (x[i] - means[q]) / (n * self.value[q]);
                             }
                           }
                         }
                     });
}

Tensor sum(const Tensor& a, std::optional<std::size_t> axis) { return reduce(ReduceOp::kSum, a, axis); }
Tensor mean(const Tensor& a, std::optional<std::size_t> axis) { return reduce(ReduceOp::kMean, a, axis); }
Tensor std_dev(const Tensor& a, std::optional<std::size_t> axis) { return reduce(ReduceOp::kStd, a, axis); }

Tensor softmax_lastaxis(const Tensor& a) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw ShapeError("softmax_lastaxis: empty last axis in " + shape_str(a.shape()));
  }
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  auto av = a.data();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return make_result("softmax", a.shape(), std::move(out), {a}, [rows, n](Node& self) {
    auto& da = gbuf(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) da[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (a.rank() == 0) throw ShapeError("layernorm: scalar input");
  const std::size_t n = a.shape().back();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layernorm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match last axis of " +
                     shape_str(a.shape()));
  }
  const std::size_t rows = a.size() / n;
  auto av = a.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> out(a.size()), xhat(a.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x[j] - mu) * rstd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      "layernorm", a.shape(), std::move(out), {a, gain, bias},
      [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& g = self.grad;
        const auto& gain = self.inputs[1]->value;
        if (needs(self, 0)) {
          auto& da = gbuf(self, 0);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g[r * n + j] * gain[j];
              m1 += dh;
              m2 += dh * xhat[r * n + j];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g[r * n + j] * gain[j];
              da[r * n + j] += rstd[r] * (dh - m1 - xhat[r * n + j] * m2);
            }
          }
        }
        if (needs(self, 1)) {
          auto& dg = gbuf(self, 1);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) dg[j] += g[r * n + j] * xhat[r * n + j];
        }
        if (needs(self, 2)) {
          auto& db = gbuf(self, 2);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) db[j] += g[r * n + j];
        }
      });
}

void set_kernel_threads(std::size_t n) {
  openblas_set_num_threads(static_cast<int>(n < 1 ? 1 : n));
}

}  // namespace csirope::ad
