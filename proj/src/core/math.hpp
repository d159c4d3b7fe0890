#pragma once

#include <span>
#include <vector>

#include "util/errors.hpp"

namespace pd::core {

using Vec = std::vector<double>;

// Guard below which a vector normalizes to zero instead of blowing up;
// an untrained projector can legitimately emit near-zero features.
inline constexpr double kNormEps = 1e-12;

// v / max(||v||, eps). Zero vector maps to zero vector.
Vec l2_normalize(std::span<const double> v, double eps = kNormEps);

// Backward through u = v / max(||v||, eps): given du, returns dv.
Vec l2_normalize_backward(std::span<const double> v, std::span<const double> du,
                          double eps = kNormEps);

// logits[i] = dot(u, w_rows[i]); w is row-major n x d. Overloads for the
// float32 class-vector table and for double feature matrices.
Vec similarity_logits(std::span<const double> u, const float* w_rows, int n, int d);
Vec similarity_logits(std::span<const double> u, const double* w_rows, int n, int d);

Vec softmax(std::span<const double> q, double tau);
Vec log_softmax(std::span<const double> q, double tau);

// -log softmax(q, tau)[y], evaluated in log space.
double cross_entropy(std::span<const double> q, int y, double tau);
Vec cross_entropy_grad(std::span<const double> q, int y, double tau);

// tau^2 * KL(softmax(q_t/tau) || softmax(q_s/tau)); teacher is the reference
// distribution and gradients flow only through q_s.
double kd_loss(std::span<const double> q_t, std::span<const double> q_s, double tau);
Vec kd_loss_grad_student(std::span<const double> q_t, std::span<const double> q_s,
                         double tau);

// 2ab/(a+b); both arguments must be positive and on the same scale.
double harmonic_mean(double a, double b);

enum class FeatureLoss { l1, mse };

// Mean absolute / mean squared coordinate difference.
double feature_kd_loss(std::span<const double> u_t, std::span<const double> u_s,
                       FeatureLoss kind);
Vec feature_kd_loss_grad_student(std::span<const double> u_t,
                                 std::span<const double> u_s, FeatureLoss kind);

// Lowest index wins ties.
int argmax(std::span<const double> v);

double l2_norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

}  // namespace pd::core
