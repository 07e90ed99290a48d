#include "mdl/model/ssm.hpp"

#include <cmath>
#include <memory>

namespace mdl::model {

double expm1_ratio(double x) {
  if (std::abs(x) < 1e-4) return 1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0;
  return std::expm1(x) / x;
}

double expm1_ratio_derivative(double x) {
  if (std::abs(x) < 1e-3) return 0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0;
  return (x * std::exp(x) - std::expm1(x)) / (x * x);
}

std::pair<std::vector<double>, std::vector<double>> zoh_discretize(std::span<const double> a,
                                                                   std::span<const double> b, double delta) {
  if (!(delta > 0.0)) throw InvariantError("zoh_discretize: delta must be positive");
  if (a.size() != b.size()) throw StructuralError("zoh_discretize: a and b differ in length");
  std::vector<double> a_bar(a.size()), b_bar(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    a_bar[n] = std::exp(delta * a[n]);
    b_bar[n] = zoh_gain(delta, a[n]) * b[n];
  }
  return {std::move(a_bar), std::move(b_bar)};
}

DiscreteSsm discretize(const DiagonalSsm& ssm, double delta) {
  auto [a_bar, b_bar] = zoh_discretize(ssm.a, ssm.b, delta);
  if (ssm.c.size() != a_bar.size()) throw StructuralError("discretize: c has the wrong length");
  return {std::move(a_bar), std::move(b_bar), ssm.c};
}

std::vector<double> scan_recurrent(const DiscreteSsm& ssm, std::span<const double> x) {
  const std::size_t n_state = ssm.a_bar.size();
  std::vector<double> h(n_state, 0.0), y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t n = 0; n < n_state; ++n) {
      h[n] = ssm.a_bar[n] * h[n] + ssm.b_bar[n] * x[t];
      acc += ssm.c[n] * h[n];
    }
    y[t] = acc;
  }
  return y;
}

std::vector<double> ssm_kernel(const DiscreteSsm& ssm, std::size_t length) {
  std::vector<double> k(length, 0.0);
  std::vector<double> power(ssm.b_bar);  // a_bar^k b_bar
  for (std::size_t i = 0; i < length; ++i) {
    double acc = 0.0;
    for (std::size_t n = 0; n < power.size(); ++n) {
      acc += ssm.c[n] * power[n];
      power[n] *= ssm.a_bar[n];
    }
    k[i] = acc;
  }
  return k;
}

std::vector<double> kernel_convolution(const DiscreteSsm& ssm, std::span<const double> x) {
  const auto k = ssm_kernel(ssm, x.size());
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= t; ++j) acc += k[j] * x[t - j];
    y[t] = acc;
  }
  return y;
}

namespace {

// exp(x) and expm1(x)/x from a single expm1 call; the scan evaluates these for
// every (position, channel, state) triple, so the call count matters.
struct ZohStep {
  double a_bar;
  double ratio;
  double em1;
};

inline ZohStep zoh_step(double x) {
  const double em1 = std::expm1(x);
  const double ratio = std::abs(x) < 1e-4 ? 1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0 : em1 / x;
  return {1.0 + em1, ratio, em1};
}

inline double ratio_derivative(double x, const ZohStep& z) {
  if (std::abs(x) < 1e-3) return 0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0;
  return (x * z.a_bar - z.em1) / (x * x);
}

}  // namespace

template <typename T>
ad::Tensor<T> selective_scan(const ad::Tensor<T>& u, const ad::Tensor<T>& delta, const ad::Tensor<T>& a,
                             const ad::Tensor<T>& b, const ad::Tensor<T>& c, const ad::Tensor<T>& d_skip) {
  if (u.rank() != 3 || u.shape() != delta.shape()) throw StructuralError("selective_scan: u/delta must be [B,L,E]");
  const std::size_t nb = u.dim(0), len = u.dim(1), ch = u.dim(2);
  if (a.rank() != 2 || a.dim(0) != ch) throw StructuralError("selective_scan: A must be [E,N]");
  const std::size_t ns = a.dim(1);
  const ad::Shape bc_shape{nb, len, ns};
  if (b.shape() != bc_shape || c.shape() != bc_shape) throw StructuralError("selective_scan: B/C must be [B,L,N]");
  if (d_skip.defined() && d_skip.numel() != ch) throw StructuralError("selective_scan: D must have E entries");

  ad::Tensor<T> out(u.shape());
  auto hist = std::make_shared<std::vector<T>>(nb * len * ch * ns);
  const T* uv = u.data().data();
  const T* dv = delta.data().data();
  const T* av = a.data().data();
  const T* bv = b.data().data();
  const T* cv = c.data().data();
  std::vector<double> h(ns);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    for (std::size_t e = 0; e < ch; ++e) {
      std::fill(h.begin(), h.end(), 0.0);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = (bi * len + t) * ch + e;
        const double dt = dv[i], x = uv[i];
        const T* bt = bv + (bi * len + t) * ns;
        const T* ct = cv + (bi * len + t) * ns;
        T* ht = hist->data() + i * ns;
        double y = 0.0;
        for (std::size_t n = 0; n < ns; ++n) {
          const auto z = zoh_step(dt * av[e * ns + n]);
          h[n] = z.a_bar * h[n] + dt * z.ratio * bt[n] * x;
          ht[n] = static_cast<T>(h[n]);
          y += ct[n] * h[n];
        }
        if (d_skip.defined()) y += static_cast<double>(d_skip[e]) * x;
        out[i] = static_cast<T>(y);
      }
    }
  }

  if (ad::should_record<T>({&u, &delta, &a, &b, &c, &d_skip})) {
    out.set_requires_grad(true);
    ad::Tape<T>::current().record([un = u.node(), dn = delta.node(), an = a.node(), bn = b.node(), cn = c.node(),
                                   sn = d_skip.defined() ? d_skip.node() : nullptr, on = out.node(), hist, nb, len,
                                   ch, ns] {
      if (on->grad.empty()) return;
      const T* g = on->grad.data();
      const T* uv = un->data.data();
      const T* dv = dn->data.data();
      const T* av = an->data.data();
      const T* bv = bn->data.data();
      const T* cv = cn->data.data();
      T* gu = un->requires_grad ? un->grad_buffer() : nullptr;
      T* gd = dn->requires_grad ? dn->grad_buffer() : nullptr;
      T* ga = an->requires_grad ? an->grad_buffer() : nullptr;
      T* gb = bn->requires_grad ? bn->grad_buffer() : nullptr;
      T* gc = cn->requires_grad ? cn->grad_buffer() : nullptr;
      T* gs = sn && sn->requires_grad ? sn->grad_buffer() : nullptr;
      std::vector<double> gh(ns);
      for (std::size_t bi = 0; bi < nb; ++bi) {
        for (std::size_t e = 0; e < ch; ++e) {
          std::fill(gh.begin(), gh.end(), 0.0);
          for (std::size_t t = len; t-- > 0;) {
            const std::size_t i = (bi * len + t) * ch + e;
            const double gy = g[i], dt = dv[i], x = uv[i];
            const std::size_t bt = (bi * len + t) * ns;
            const T* ht = hist->data() + i * ns;
            const T* hprev = t > 0 ? hist->data() + ((bi * len + t - 1) * ch + e) * ns : nullptr;
            double du = 0.0, ddt = 0.0;
            if (sn) {
              du += gy * sn->data[e];
              if (gs) gs[e] += static_cast<T>(gy * x);
            }
            for (std::size_t n = 0; n < ns; ++n) {
              if (gc) gc[bt + n] += static_cast<T>(gy * ht[n]);
              gh[n] += gy * cv[bt + n];
              const double an_ = av[e * ns + n];
              const double xn = dt * an_;
              const auto z = zoh_step(xn);
              const double abar = z.a_bar;
              const double gain = dt * z.ratio;
              const double hp = hprev ? static_cast<double>(hprev[n]) : 0.0;
              const double gn = gh[n];
              const double bx = bv[bt + n] * x;
              ddt += gn * (hp * an_ * abar + bx * abar);
              if (ga) ga[e * ns + n] += static_cast<T>(gn * (hp * dt * abar + bx * dt * dt * ratio_derivative(xn, z)));
              if (gb) gb[bt + n] += static_cast<T>(gn * gain * x);
              du += gn * gain * bv[bt + n];
              gh[n] = gn * abar;
            }
            if (gu) gu[i] += static_cast<T>(du);
            if (gd) gd[i] += static_cast<T>(ddt);
          }
        }
      }
    });
  }
  return out;
}

template ad::Tensor<float> selective_scan(const ad::Tensor<float>&, const ad::Tensor<float>&,
                                          const ad::Tensor<float>&, const ad::Tensor<float>&,
                                          const ad::Tensor<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> selective_scan(const ad::Tensor<double>&, const ad::Tensor<double>&,
                                           const ad::Tensor<double>&, const ad::Tensor<double>&,
                                           const ad::Tensor<double>&, const ad::Tensor<double>&);

}  // namespace mdl::model
