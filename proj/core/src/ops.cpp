#include "tempora/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tempora/errors.hpp"

namespace tempora {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent i, or nullptr when it does not need one.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

const std::vector<double>& value_of(Node& self, std::size_t i) { return self.parents[i]->value; }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_offsets(const Offsets& offsets, std::size_t rows, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows ||
      !std::is_sorted(offsets.begin(), offsets.end())) {
    throw DimensionError(std::string(op) + ": offsets do not partition " + std::to_string(rows) + " rows");
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D df) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op(x.shape(), std::move(out), {x}, [df](Node& self) {
    const auto& xv = value_of(self, 0);
    double* gx = grad_of(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

}  // namespace

namespace {

#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define TEMPORA_KERNEL_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define TEMPORA_KERNEL_CLONES
#endif

// c[m x n] += a[m x k] * b[k x n]. Four rows share each streamed row of b;
// every output element accumulates in ascending p, so results do not depend
// on the blocking.
TEMPORA_KERNEL_CLONES
void gemm_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* __restrict a,
                     const double* __restrict b, double* __restrict c) {
  constexpr std::size_t kBlock = 128;
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t p1 = std::min(k, p0 + kBlock);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      double* __restrict c0 = c + i * n;
      double* __restrict c1 = c0 + n;
      double* __restrict c2 = c1 + n;
      double* __restrict c3 = c2 + n;
      for (std::size_t p = p0; p < p1; ++p) {
        const double a0 = a[i * k + p], a1 = a[(i + 1) * k + p], a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
        const double* __restrict br = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double bj = br[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    }
    for (; i < m; ++i) {
      double* __restrict row = c + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const double ap = a[i * k + p];
        const double* __restrict br = b + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += ap * br[j];
      }
    }
  }
}

std::vector<double> transposed(const double* x, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_accumulate(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = grad_of(self, 0)) {
      const auto bt = transposed(value_of(self, 1).data(), k, n);
      gemm_accumulate(m, n, k, g, bt.data(), ga);
    }
    if (double* gb = grad_of(self, 1)) {
      const auto at = transposed(value_of(self, 0).data(), m, k);
      gemm_accumulate(k, m, n, at.data(), g, gb);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op({n, m}, std::move(out), {a}, [m, n](Node& self) {
    double* ga = grad_of(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const std::size_t n = a.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias of " + std::to_string(bias.numel()) + " values for " +
                         std::to_string(n) + " columns");
  }
  const std::size_t m = a.numel() / std::max<std::size_t>(n, 1);
  auto av = a.data();
  auto bv = bias.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
  return make_op(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v <= 0.0 ? 0.0 : v; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  constexpr double inv_sqrt2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor cos_elem(const Tensor& x) {
  return unary(
      x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Tensor sin_elem(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op({}, {acc}, {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= std::max<std::size_t>(s.size(), 1)) throw DimensionError("softmax axis out of range");
  if (s.empty()) return make_op({}, {1.0}, {x}, [](Node&) {});
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      if (std::isnan(mx)) {
        for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) z += (out[base + k * inner] = std::exp(xv[base + k * inner] - mx));
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return make_op(s, std::move(out), {x}, [outer, inner, len](Node& self) {
    double* gx = grad_of(self, 0);
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.cols();
  if (n == 0) throw ContractError("layer_norm over an empty axis");
  if (gamma.numel() != n || beta.numel() != n) throw DimensionError("layer_norm: affine size mismatch");
  const std::size_t m = x.numel() / n;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gv[j] * xhat[i * n + j] + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   const auto& gv = value_of(self, 1);
                   const double* g = self.grad.data();
                   if (double* gg = grad_of(self, 1))
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
                   if (double* gb = grad_of(self, 2))
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                   if (double* gx = grad_of(self, 0)) {
                     for (std::size_t i = 0; i < m; ++i) {
                       double mean_d = 0.0, mean_dx = 0.0;
                       for (std::size_t j = 0; j < n; ++j) {
                         const double d = g[i * n + j] * gv[j];
                         mean_d += d;
                         mean_dx += d * xhat[i * n + j];
                       }
                       mean_d /= static_cast<double>(n);
                       mean_dx /= static_cast<double>(n);
                       for (std::size_t j = 0; j < n; ++j) {
                         const double d = g[i * n + j] * gv[j];
                         gx[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                       }
                     }
                   }
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  return make_op(std::move(shape), x.to_vector(), {x}, [](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t col = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto pv = parts[pi].data();
    const std::size_t w = widths[pi];
    for (std::size_t i = 0; i < m; ++i) std::copy_n(pv.data() + i * w, w, out.data() + i * total + col);
    col += w;
  }
  return make_op({m, total}, std::move(out), {parts.begin(), parts.end()},
                 [m, total, widths = std::move(widths)](Node& self) {
                   std::size_t col = 0;
                   for (std::size_t pi = 0; pi < widths.size(); ++pi) {
                     const std::size_t w = widths[pi];
                     if (double* g = grad_of(self, pi))
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + col + j];
                     col += w;
                   }
                 });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    m += p.rows();
  }
  out.reserve(m * n);
  for (const auto& p : parts) {
    auto pv = p.data();
    out.insert(out.end(), pv.begin(), pv.end());
  }
  return make_op({m, n}, std::move(out), {parts.begin(), parts.end()}, [](Node& self) {
    std::size_t at = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      const std::size_t len = self.parents[pi]->value.size();
      if (double* g = grad_of(self, pi))
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[at + i];
      at += len;
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_matrix(x, "gather_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  auto xv = x.data();
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) throw DimensionError("gather_rows: index out of range");
    std::copy_n(xv.data() + idx[r] * n, n, out.data() + r * n);
  }
  const std::size_t rows = idx.size();
  return make_op({rows, n}, std::move(out), {x}, [n, idx = std::move(idx)](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
  });
}

Tensor interleave_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "interleave_cols");
  require_same_shape(a, b, "interleave_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(2 * m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      out[i * 2 * n + 2 * j] = av[i * n + j];
      out[i * 2 * n + 2 * j + 1] = bv[i * n + j];
    }
  return make_op({m, 2 * n}, std::move(out), {a, b}, [m, n](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * 2 * n + 2 * j + p];
  });
}

Tensor segment_mean(const Tensor& x, const Offsets& offsets) {
  require_matrix(x, "segment_mean");
  require_offsets(offsets, x.shape()[0], "segment_mean");
  const std::size_t n = x.shape()[1];
  const std::size_t segs = offsets.size() - 1;
  auto xv = x.data();
  std::vector<double> out(segs * n, 0.0);
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t len = offsets[s + 1] - offsets[s];
    if (len == 0) continue;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
      for (std::size_t j = 0; j < n; ++j) out[s * n + j] += xv[r * n + j];
    for (std::size_t j = 0; j < n; ++j) out[s * n + j] /= static_cast<double>(len);
  }
  return make_op({segs, n}, std::move(out), {x}, [n, offsets](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const std::size_t len = offsets[s + 1] - offsets[s];
      if (len == 0) continue;
      const double w = 1.0 / static_cast<double>(len);
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += w * self.grad[s * n + j];
    }
  });
}

PatchedRows patch_segments(const Tensor& x, const Offsets& offsets, std::size_t patch_size) {
  if (patch_size == 0) throw ContractError("patch size must be at least 1");
  require_matrix(x, "patch_segments");
  require_offsets(offsets, x.shape()[0], "patch_segments");
  const std::size_t d = x.shape()[1];
  const std::size_t width = patch_size * d;
  Offsets out_offsets{0};
  // source row of each (patch row, slot), or npos for padding
  std::vector<std::size_t> source;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t len = offsets[s + 1] - offsets[s];
    const std::size_t patches = (len + patch_size - 1) / patch_size;
    for (std::size_t p = 0; p < patches; ++p)
      for (std::size_t slot = 0; slot < patch_size; ++slot) {
        const std::size_t local = p * patch_size + slot;
        source.push_back(local < len ? offsets[s] + local : static_cast<std::size_t>(-1));
      }
    out_offsets.push_back(out_offsets.back() + patches);
  }
  const std::size_t rows = out_offsets.back();
  auto xv = x.data();
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source[i] != static_cast<std::size_t>(-1)) std::copy_n(xv.data() + source[i] * d, d, out.data() + i * d);
  Tensor result = make_op({rows, width}, std::move(out), {x}, [d, source = std::move(source)](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] == static_cast<std::size_t>(-1)) continue;
      for (std::size_t j = 0; j < d; ++j) g[source[i] * d + j] += self.grad[i * d + j];
    }
  });
  return {std::move(result), std::move(out_offsets)};
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : 0.0;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_op(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels) {
  if (labels.size() != logits.numel()) throw DimensionError("bce_with_logits: label count mismatch");
  if (labels.empty()) throw ContractError("bce_with_logits on an empty batch");
  auto z = logits.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw ContractError("bce_with_logits labels must be 0 or 1");
    acc += std::max(z[i], 0.0) - z[i] * y + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double n = static_cast<double>(z.size());
  std::vector<double> y(labels.begin(), labels.end());
  return make_op({}, {acc / n}, {logits}, [y = std::move(y), n](Node& self) {
    const auto& zv = value_of(self, 0);
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < zv.size(); ++i) g[i] += self.grad[0] * (sigmoid(zv[i]) - y[i]) / n;
  });
}

Tensor segmented_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout,
                           double scale_factor, std::vector<AttentionMap>* probe) {
  require_matrix(q, "segmented_attention");
  require_matrix(k, "segmented_attention");
  require_matrix(v, "segmented_attention");
  const std::size_t dq = q.shape()[1];
  const std::size_t dv = v.shape()[1];
  if (k.shape()[1] != dq) throw DimensionError("segmented_attention: query/key width mismatch");
  if (k.shape()[0] != v.shape()[0]) throw DimensionError("segmented_attention: key/value count mismatch");
  const auto& qo = layout.query_offsets;
  const auto& ko = layout.key_offsets;
  require_offsets(qo, q.shape()[0], "segmented_attention");
  require_offsets(ko, k.shape()[0], "segmented_attention");
  if (qo.size() != ko.size()) throw DimensionError("segmented_attention: segment counts differ");
  const std::size_t segs = qo.size() - 1;
  const bool causal = layout.causal;
  if (causal) {
    for (std::size_t s = 0; s < segs; ++s)
      if (qo[s + 1] - qo[s] != ko[s + 1] - ko[s]) throw DimensionError("causal attention needs square segments");
  }

  auto qv = q.data();
  auto kv = k.data();
  auto vv = v.data();
  // Probabilities per segment, stacked; masked entries hold exact zeros.
  std::vector<std::size_t> prob_offset(segs + 1, 0);
  for (std::size_t s = 0; s < segs; ++s)
    prob_offset[s + 1] = prob_offset[s] + (qo[s + 1] - qo[s]) * (ko[s + 1] - ko[s]);
  std::vector<double> probs(prob_offset.back(), 0.0);
  std::vector<double> out(q.shape()[0] * dv, 0.0);

  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t nq = qo[s + 1] - qo[s];
    const std::size_t nk = ko[s + 1] - ko[s];
    if (nk == 0) continue;
    double* P = probs.data() + prob_offset[s];
    for (std::size_t i = 0; i < nq; ++i) {
      const double* qi = qv.data() + (qo[s] + i) * dq;
      const std::size_t limit = causal ? i + 1 : nk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        const double* kj = kv.data() + (ko[s] + j) * dq;
        double dot = 0.0;
        for (std::size_t c = 0; c < dq; ++c) dot += qi[c] * kj[c];
        P[i * nk + j] = dot * scale_factor;
        mx = std::max(mx, P[i * nk + j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < limit; ++j) z += (P[i * nk + j] = std::exp(P[i * nk + j] - mx));
      double* oi = out.data() + (qo[s] + i) * dv;
      for (std::size_t j = 0; j < limit; ++j) {
        P[i * nk + j] /= z;
        const double* vj = vv.data() + (ko[s] + j) * dv;
        for (std::size_t c = 0; c < dv; ++c) oi[c] += P[i * nk + j] * vj[c];
      }
    }
  }

  if (probe) {
    probe->clear();
    probe->reserve(segs);
    for (std::size_t s = 0; s < segs; ++s) {
      AttentionMap map;
      map.queries = qo[s + 1] - qo[s];
      map.keys = ko[s + 1] - ko[s];
      map.weights.assign(probs.begin() + static_cast<std::ptrdiff_t>(prob_offset[s]),
                         probs.begin() + static_cast<std::ptrdiff_t>(prob_offset[s + 1]));
      probe->push_back(std::move(map));
    }
  }

  return make_op(
      {q.shape()[0], dv}, std::move(out), {q, k, v},
      [layout, segs, dq, dv, scale_factor, causal, probs = std::move(probs),
       prob_offset = std::move(prob_offset)](Node& self) {
        const auto& qv = value_of(self, 0);
        const auto& kv = value_of(self, 1);
        const auto& vv = value_of(self, 2);
        double* gq = grad_of(self, 0);
        double* gk = grad_of(self, 1);
        double* gv = grad_of(self, 2);
        const auto& qo = layout.query_offsets;
        const auto& ko = layout.key_offsets;
        std::vector<double> dp;
        for (std::size_t s = 0; s < segs; ++s) {
          const std::size_t nq = qo[s + 1] - qo[s];
          const std::size_t nk = ko[s + 1] - ko[s];
          if (nk == 0) continue;
          const double* P = probs.data() + prob_offset[s];
          dp.assign(nk, 0.0);
          for (std::size_t i = 0; i < nq; ++i) {
            const double* go = self.grad.data() + (qo[s] + i) * dv;
            const std::size_t limit = causal ? i + 1 : nk;
            double rowdot = 0.0;
            for (std::size_t j = 0; j < limit; ++j) {
              const double* vj = vv.data() + (ko[s] + j) * dv;
              double d = 0.0;
              for (std::size_t c = 0; c < dv; ++c) d += go[c] * vj[c];
              dp[j] = d;
              rowdot += d * P[i * nk + j];
              if (gv) {
                double* gvj = gv + (ko[s] + j) * dv;
                for (std::size_t c = 0; c < dv; ++c) gvj[c] += P[i * nk + j] * go[c];
              }
            }
            const double* qi = qv.data() + (qo[s] + i) * dq;
            for (std::size_t j = 0; j < limit; ++j) {
              const double ds = P[i * nk + j] * (dp[j] - rowdot) * scale_factor;
              if (ds == 0.0) continue;
              const double* kj = kv.data() + (ko[s] + j) * dq;
              if (gq) {
                double* gqi = gq + (qo[s] + i) * dq;
                for (std::size_t c = 0; c < dq; ++c) gqi[c] += ds * kj[c];
              }
              if (gk) {
                double* gkj = gk + (ko[s] + j) * dq;
                for (std::size_t c = 0; c < dq; ++c) gkj[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

}  // namespace tempora
