#include "mdl/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace mdl::ad {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;
template <typename T>
using MapRowV = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

Shape strides_of(const Shape& s) {
  Shape st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Per-output-axis strides into each operand; 0 along broadcast axes.
struct Broadcast {
  Shape out;
  Shape sa;
  Shape sb;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  const std::size_t pa = r - a.size(), pb = r - b.size();
  const Shape sta = strides_of(a), stb = strides_of(b);
  p.out.resize(r);
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < pa ? 1 : a[i - pa];
    const std::size_t db = i < pb ? 1 : b[i - pb];
    if (da != db && da != 1 && db != 1) {
      throw StructuralError("broadcast: incompatible shapes " + to_string(a) + " and " + to_string(b));
    }
    p.out[i] = std::max(da, db);
    if (i >= pa && da != 1) p.sa[i] = sta[i - pa];
    if (i >= pb && db != 1) p.sb[i] = stb[i - pb];
  }
  return p;
}

template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t n = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  Shape idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      ia += p.sa[ax];
      ib += p.sb[ax];
      if (idx[ax] < p.out[ax]) break;
      ia -= p.sa[ax] * p.out[ax];
      ib -= p.sb[ax] * p.out[ax];
      idx[ax] = 0;
    }
  }
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const Broadcast p = plan_broadcast(a.shape(), b.shape());
  Tensor<T> out(p.out);
  {
    const T* x = a.data().data();
    const T* y = b.data().data();
    T* o = out.data().data();
    for_each_broadcast(p, [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = fwd(x[ia], y[ib]); });
  }
  if (should_record<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([an = a.node(), bn = b.node(), on = out.node(), p, grad_a, grad_b] {
      if (on->grad.empty()) return;
      const T* g = on->grad.data();
      const T* x = an->data.data();
      const T* y = bn->data.data();
      T* ga = an->requires_grad ? an->grad_buffer() : nullptr;
      T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
      for_each_broadcast(p, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        if (ga) ga[ia] += grad_a(x[ia], y[ib], g[i]);
        if (gb) gb[ib] += grad_b(x[ia], y[ib], g[i]);
      });
    });
  }
  return out;
}

// Elementwise map; `deriv(x, y)` is dy/dx evaluated at input x / output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  Tensor<T> out(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (should_record<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([an = a.node(), on = out.node(), deriv] {
      if (on->grad.empty()) return;
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < on->data.size(); ++i) ga[i] += on->grad[i] * deriv(an->data[i], on->data[i]);
    });
  }
  return out;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw StructuralError("axis out of range");
  return static_cast<std::size_t>(a);
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; }, [](T x, T, T g) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw StructuralError("matmul: operands need rank >= 2");
  const std::size_t m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw StructuralError("matmul: inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const bool shared = lead_b.empty();
  if (!shared && lead_a != lead_b) {
    throw StructuralError("matmul: batch dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t batch = numel(lead_a);
  Shape out_shape = lead_a;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);

  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
  if (shared) {
    const auto rows = static_cast<Eigen::Index>(batch * m);
    MapM<T>(out.data().data(), rows, ni).noalias() =
        MapCM<T>(a.data().data(), rows, ki) * MapCM<T>(b.data().data(), ki, ni);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      MapM<T>(out.data().data() + i * m * n, mi, ni).noalias() =
          MapCM<T>(a.data().data() + i * m * k, mi, ki) * MapCM<T>(b.data().data() + i * k * n, ki, ni);
    }
  }

  if (should_record<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([an = a.node(), bn = b.node(), on = out.node(), batch, mi, ki, ni, shared] {
      if (on->grad.empty()) return;
      if (shared) {
        const auto rows = static_cast<Eigen::Index>(batch) * mi;
        MapCM<T> g(on->grad.data(), rows, ni);
        if (an->requires_grad) {
          MapM<T>(an->grad_buffer(), rows, ki).noalias() += g * MapCM<T>(bn->data.data(), ki, ni).transpose();
        }
        if (bn->requires_grad) {
          MapM<T>(bn->grad_buffer(), ki, ni).noalias() += MapCM<T>(an->data.data(), rows, ki).transpose() * g;
        }
        return;
      }
      for (std::size_t i = 0; i < batch; ++i) {
        MapCM<T> g(on->grad.data() + i * mi * ni, mi, ni);
        if (an->requires_grad) {
          MapM<T>(an->grad_buffer() + i * mi * ki, mi, ki).noalias() +=
              g * MapCM<T>(bn->data.data() + i * ki * ni, ki, ni).transpose();
        }
        if (bn->requires_grad) {
          MapM<T>(bn->grad_buffer() + i * ki * ni, ki, ni).noalias() +=
              MapCM<T>(an->data.data() + i * mi * ki, mi, ki).transpose() * g;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 2) throw StructuralError("linear: weight must be [out, in]");
  const std::size_t in = w.dim(1), outd = w.dim(0);
  if (x.dim(-1) != in) {
    throw StructuralError("linear: input width " + std::to_string(x.dim(-1)) + " != weight in " + std::to_string(in));
  }
  if (bias.defined() && (bias.numel() != outd)) throw StructuralError("linear: bias length mismatch");
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  Tensor<T> out(out_shape);
  const auto rows = static_cast<Eigen::Index>(x.numel() / in);
  const auto ii = static_cast<Eigen::Index>(in), oi = static_cast<Eigen::Index>(outd);
  MapM<T> y(out.data().data(), rows, oi);
  y.noalias() = MapCM<T>(x.data().data(), rows, ii) * MapCM<T>(w.data().data(), oi, ii).transpose();
  if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), oi);

  if (should_record<T>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    Tape<T>::current().record(
        [xn = x.node(), wn = w.node(), bn = bias.defined() ? bias.node() : nullptr, on = out.node(), rows, ii, oi] {
          if (on->grad.empty()) return;
          MapCM<T> g(on->grad.data(), rows, oi);
          if (xn->requires_grad) {
            MapM<T>(xn->grad_buffer(), rows, ii).noalias() += g * MapCM<T>(wn->data.data(), oi, ii);
          }
          if (wn->requires_grad) {
            MapM<T>(wn->grad_buffer(), oi, ii).noalias() += g.transpose() * MapCM<T>(xn->data.data(), rows, ii);
          }
          if (bn && bn->requires_grad) MapRowV<T>(bn->grad_buffer(), oi) += g.colwise().sum();
        });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw StructuralError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  if (should_record<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([an = a.node(), on = out.node()] {
      if (on->grad.empty()) return;
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw StructuralError("permute: axis count mismatch");
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw StructuralError("permute: invalid axis order");
    seen[ax] = true;
  }
  const Shape in_strides = strides_of(a.shape());
  Shape out_shape(r), src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = a.shape()[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // src[i] maps each output element to its source offset.
  const std::size_t n = a.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  {
    Shape idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      (*src)[i] = off;
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        off += src_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= src_strides[ax] * out_shape[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[(*src)[i]];
  if (should_record<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([an = a.node(), on = out.node(), src] {
      if (on->grad.empty()) return;
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < src->size(); ++i) ga[(*src)[i]] += on->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose_last(const Tensor<T>& a) {
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& a, std::size_t start, std::size_t len) {
  const std::size_t w = a.dim(-1);
  if (len == 0 || start + len > w) throw StructuralError("slice_last: range out of bounds");
  Shape out_shape = a.shape();
  out_shape.back() = len;
  Tensor<T> out(out_shape);
  const std::size_t rows = a.numel() / w;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * w + start, len, out.data().data() + r * len);
  }
  if (should_record<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([an = a.node(), on = out.node(), rows, w, start, len] {
      if (on->grad.empty()) return;
      T* ga = an->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < len; ++j) ga[r * w + start + j] += on->grad[r * len + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis, std::size_t* fully_masked_rows) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const std::size_t len = x.shape()[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  const std::size_t outer = x.numel() / (len * inner);

  Tensor<T> out(x.shape());
  std::size_t masked = 0;
  const T* xv = x.data().data();
  T* yv = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      if (mx == -std::numeric_limits<T>::infinity()) {
        ++masked;
        for (std::size_t j = 0; j < len; ++j) yv[base + j * inner] = T(0);
        continue;
      }
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        yv[base + j * inner] = e;
        total += e;
      }
      const T inv = static_cast<T>(1.0 / total);
      for (std::size_t j = 0; j < len; ++j) yv[base + j * inner] *= inv;
    }
  }
  if (fully_masked_rows) *fully_masked_rows = masked;

  if (should_record<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([xn = x.node(), on = out.node(), outer, inner, len] {
      if (on->grad.empty()) return;
      T* gx = xn->grad_buffer();
      const T* y = on->data.data();
      const T* g = on->grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < len; ++j) dot += static_cast<double>(g[base + j * inner]) * y[base + j * inner];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t i = base + j * inner;
            gx[i] += y[i] * (g[i] - static_cast<T>(dot));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t d = x.dim(-1);
  if (gain.numel() != d || bias.numel() != d) throw StructuralError("layer_norm: gain/bias width mismatch");
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T* xv = x.data().data();
  const T* gv = gain.data().data();
  const T* bv = bias.data().data();
  T* yv = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const T rs = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = static_cast<T>(row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      yv[r * d + j] = h * gv[j] + bv[j];
    }
  }
  if (should_record<T>({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(), xhat, rstd, rows, d] {
      if (on->grad.empty()) return;
      const T* g = on->grad.data();
      const T* gv = gn->data.data();
      T* gg = gn->requires_grad ? gn->grad_buffer() : nullptr;
      T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
      T* gx = xn->requires_grad ? xn->grad_buffer() : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g + r * d;
        const T* h = xhat->data() + r * d;
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (gg) gg[j] += gr[j] * h[j];
          if (gb) gb[j] += gr[j];
          const double dh = static_cast<double>(gr[j]) * gv[j];
          mean_dh += dh;
          mean_dh_h += dh * h[j];
        }
        if (!gx) continue;
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = static_cast<double>(gr[j]) * gv[j];
          gx[r * d + j] += static_cast<T>((*rstd)[r] * (dh - mean_dh - h[j] * mean_dh_h));
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v * sigmoid_scalar(v); },
      [](T v, T) {
        const T s = sigmoid_scalar(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); }, [](T v, T) { return sigmoid_scalar(v); });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::size_t> indices, Shape index_shape) {
  if (table.rank() != 2) throw StructuralError("embedding_lookup: table must be [vocab, dim]");
  if (numel(index_shape) != indices.size()) throw StructuralError("embedding_lookup: index shape mismatch");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (auto i : indices) {
    if (i >= vocab) {
      throw StructuralError("embedding_lookup: index " + std::to_string(i) + " outside vocabulary of " +
                            std::to_string(vocab));
    }
  }
  Shape out_shape = std::move(index_shape);
  out_shape.push_back(d);
  Tensor<T> out(out_shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(table.data().data() + indices[r] * d, d, out.data().data() + r * d);
  }
  if (should_record<T>({&table})) {
    out.set_requires_grad(true);
    auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
    Tape<T>::current().record([tn = table.node(), on = out.node(), idx, d] {
      if (on->grad.empty()) return;
      T* gt = tn->grad_buffer();
      for (std::size_t r = 0; r < idx->size(); ++r) {
        for (std::size_t j = 0; j < d; ++j) gt[(*idx)[r] * d + j] += on->grad[r * d + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, std::mt19937_64* rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw InvariantError("dropout: p must be < 1");
  if (!rng) throw InvariantError("dropout: training mode needs a random generator");
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : *mask) m = uniform01(*rng) >= p ? keep_scale : T(0);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * (*mask)[i];
  if (should_record<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([xn = x.node(), on = out.node(), mask] {
      if (on->grad.empty()) return;
      T* gx = xn->grad_buffer();
      for (std::size_t i = 0; i < mask->size(); ++i) gx[i] += on->grad[i] * (*mask)[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv1d_causal(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
  if (x.rank() != 3) throw StructuralError("conv1d_causal: input must be [B, L, C]");
  const std::size_t nb = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (kernel.rank() != 2 || kernel.dim(0) != ch) throw StructuralError("conv1d_causal: kernel must be [C, W]");
  if (bias.defined() && bias.numel() != ch) throw StructuralError("conv1d_causal: bias must have C entries");
  const std::size_t width = kernel.dim(1);
  Tensor<T> out(x.shape());
  const T* xv = x.data().data();
  const T* kv = kernel.data().data();
  T* yv = out.data().data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      T* y = yv + (b * len + t) * ch;
      for (std::size_t c = 0; c < ch; ++c) y[c] = bias.defined() ? bias[c] : T(0);
      for (std::size_t j = 0; j < width; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(width - 1);
        if (src < 0) continue;
        const T* xs = xv + (b * len + static_cast<std::size_t>(src)) * ch;
        for (std::size_t c = 0; c < ch; ++c) y[c] += kv[c * width + j] * xs[c];
      }
    }
  }
  if (should_record<T>({&x, &kernel, &bias})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([xn = x.node(), kn = kernel.node(), bn = bias.defined() ? bias.node() : nullptr,
                               on = out.node(), nb, len, ch, width] {
      if (on->grad.empty()) return;
      const T* g = on->grad.data();
      T* gx = xn->requires_grad ? xn->grad_buffer() : nullptr;
      T* gk = kn->requires_grad ? kn->grad_buffer() : nullptr;
      T* gb = bn && bn->requires_grad ? bn->grad_buffer() : nullptr;
      const T* xv = xn->data.data();
      const T* kv = kn->data.data();
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
          const T* gy = g + (b * len + t) * ch;
          if (gb) {
            for (std::size_t c = 0; c < ch; ++c) gb[c] += gy[c];
          }
          for (std::size_t j = 0; j < width; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(width - 1);
            if (src < 0) continue;
            const std::size_t so = (b * len + static_cast<std::size_t>(src)) * ch;
            for (std::size_t c = 0; c < ch; ++c) {
              if (gx) gx[so + c] += gy[c] * kv[c * width + j];
              if (gk) gk[c * width + j] += gy[c] * xv[so + c];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (should_record<T>({&x})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([xn = x.node(), on = out.node()] {
      if (on->grad.empty()) return;
      const T g = on->grad[0];
      T* gx = xn->grad_buffer();
      for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x.numel())));
}

#define MDL_INSTANTIATE_OPS(T)                                                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                                          \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                    \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                         \
  template Tensor<T> transpose_last(const Tensor<T>&);                                                    \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> softmax(const Tensor<T>&, std::ptrdiff_t, std::size_t*);                            \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                \
  template Tensor<T> tanh(const Tensor<T>&);                                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                              \
  template Tensor<T> exp(const Tensor<T>&);                                                               \
  template Tensor<T> silu(const Tensor<T>&);                                                              \
  template Tensor<T> softplus(const Tensor<T>&);                                                          \
  template Tensor<T> embedding_lookup(const Tensor<T>&, std::span<const std::size_t>, Shape);            \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::mt19937_64*);                          \
  template Tensor<T> conv1d_causal(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sum(const Tensor<T>&);                                                               \
  template Tensor<T> mean(const Tensor<T>&);

MDL_INSTANTIATE_OPS(float)
MDL_INSTANTIATE_OPS(double)

#undef MDL_INSTANTIATE_OPS

}  // namespace mdl::ad
