#include "core/math.hpp"

#include <cmath>

#include "kernels/kernels.hpp"

namespace pd::core {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be positive");
}

}  // namespace

double l2_norm(std::span<const double> v) {
  return std::sqrt(kern::kernels().dot(v.data(), v.data(), static_cast<int>(v.size())));
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Vec l2_normalize(std::span<const double> v, double eps) {
  if (!all_finite(v)) throw DomainError("l2_normalize: non-finite input");
  const double denom = std::max(l2_norm(v), eps);
  Vec out(v.size());
  const double inv = 1.0 / denom;
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
  return out;
}

Vec l2_normalize_backward(std::span<const double> v, std::span<const double> du,
                          double eps) {
  if (v.size() != du.size()) throw ShapeError("l2_normalize_backward: size mismatch");
  const int n = static_cast<int>(v.size());
  const double norm = l2_norm(v);
  Vec dv(n);
  if (norm < eps) {
    // Below the guard the map is v/eps, a plain scaling.
    const double inv = 1.0 / eps;
    for (int i = 0; i < n; ++i) dv[i] = du[i] * inv;
    return dv;
  }
  // u = v/||v||: dv = (du - u (u . du)) / ||v||
  const double inv = 1.0 / norm;
  Vec u(n);
  for (int i = 0; i < n; ++i) u[i] = v[i] * inv;
  const double proj = kern::kernels().dot(u.data(), du.data(), n);
  for (int i = 0; i < n; ++i) dv[i] = (du[i] - u[i] * proj) * inv;
  return dv;
}

Vec similarity_logits(std::span<const double> u, const float* w_rows, int n, int d) {
  if (static_cast<int>(u.size()) != d) {
    throw ShapeError("similarity_logits: feature dim does not match table dim");
  }
  Vec q(n);
  kern::kernels().gemm_nt_wf32(u.data(), w_rows, q.data(), 1, n, d);
  return q;
}

Vec similarity_logits(std::span<const double> u, const double* w_rows, int n, int d) {
  if (static_cast<int>(u.size()) != d) {
    throw ShapeError("similarity_logits: feature dim does not match table dim");
  }
  Vec q(n);
  kern::kernels().gemm_nt(u.data(), w_rows, q.data(), 1, n, d);
  return q;
}

Vec log_softmax(std::span<const double> q, double tau) {
  check_tau(tau);
  if (q.empty()) throw ShapeError("log_softmax: empty logits");
  const int n = static_cast<int>(q.size());
  Vec s(n);
  const double inv_tau = 1.0 / tau;
  double mx = q[0] * inv_tau;
  for (int i = 0; i < n; ++i) {
    s[i] = q[i] * inv_tau;
    if (s[i] > mx) mx = s[i];
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(s[i] - mx);
  const double lse = mx + std::log(sum);
  for (int i = 0; i < n; ++i) s[i] -= lse;
  return s;
}

Vec softmax(std::span<const double> q, double tau) {
  Vec s = log_softmax(q, tau);
  for (double& x : s) x = std::exp(x);
  return s;
}

double cross_entropy(std::span<const double> q, int y, double tau) {
  if (y < 0 || y >= static_cast<int>(q.size())) {
    throw IndexError("cross_entropy: label out of range");
  }
  return -log_softmax(q, tau)[y];
}

Vec cross_entropy_grad(std::span<const double> q, int y, double tau) {
  if (y < 0 || y >= static_cast<int>(q.size())) {
    throw IndexError("cross_entropy_grad: label out of range");
  }
  Vec g = softmax(q, tau);
  g[y] -= 1.0;
  const double inv_tau = 1.0 / tau;
  for (double& x : g) x *= inv_tau;
  return g;
}

double kd_loss(std::span<const double> q_t, std::span<const double> q_s, double tau) {
  if (q_t.size() != q_s.size()) throw ShapeError("kd_loss: logit length mismatch");
  check_tau(tau);
  const int n = static_cast<int>(q_t.size());
  const Vec log_p = log_softmax(q_t, tau);
  const Vec log_q = log_softmax(q_s, tau);
  double kl = 0.0;
  for (int i = 0; i < n; ++i) kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  return tau * tau * kl;
}

Vec kd_loss_grad_student(std::span<const double> q_t, std::span<const double> q_s,
                         double tau) {
  if (q_t.size() != q_s.size()) {
    throw ShapeError("kd_loss_grad_student: logit length mismatch");
  }
  check_tau(tau);
  // d/dq_s [tau^2 KL(P||Q)] = tau (Q - P)
  const Vec p = softmax(q_t, tau);
  Vec g = softmax(q_s, tau);
  for (size_t i = 0; i < g.size(); ++i) g[i] = tau * (g[i] - p[i]);
  return g;
}

double harmonic_mean(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("harmonic_mean: arguments must be positive");
  }
  return 2.0 * a * b / (a + b);
}

double feature_kd_loss(std::span<const double> u_t, std::span<const double> u_s,
                       FeatureLoss kind) {
  if (u_t.size() != u_s.size()) throw ShapeError("feature_kd_loss: dim mismatch");
  const int n = static_cast<int>(u_t.size());
  double acc = 0.0;
  if (kind == FeatureLoss::l1) {
    for (int i = 0; i < n; ++i) acc += std::abs(u_s[i] - u_t[i]);
  } else {
    for (int i = 0; i < n; ++i) {
      const double d = u_s[i] - u_t[i];
      acc += d * d;
    }
  }
  return acc / n;
}

Vec feature_kd_loss_grad_student(std::span<const double> u_t,
                                 std::span<const double> u_s, FeatureLoss kind) {
  if (u_t.size() != u_s.size()) {
    throw ShapeError("feature_kd_loss_grad_student: dim mismatch");
  }
  const int n = static_cast<int>(u_t.size());
  Vec g(n);
  const double inv_n = 1.0 / n;
  if (kind == FeatureLoss::l1) {
    for (int i = 0; i < n; ++i) {
      const double d = u_s[i] - u_t[i];
      g[i] = d > 0.0 ? inv_n : d < 0.0 ? -inv_n : 0.0;
    }
  } else {
    for (int i = 0; i < n; ++i) g[i] = 2.0 * (u_s[i] - u_t[i]) * inv_n;
  }
  return g;
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("argmax: empty input");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace pd::core
