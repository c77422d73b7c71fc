#pragma once

// Boundary losses as functions of the mapped radius r = ||A (z - c)||, and
// their analytic gradients with respect to A.
//
// Every loss here depends on A only through r, so with v = z - c
//   dL/dA = L'(r) * (A v v^T) / r.

#include <cmath>
#include <cstddef>

#include "elidecide/ellipsoid.hpp"
#include "elidecide/feature_space.hpp"

namespace elidecide {

/// Loss value and its derivative with respect to r.
struct RadialLoss {
  double value = 0.0;
  double slope = 0.0;
};

/// max(r - delta, 0)
inline RadialLoss expansion_of(double r, double delta) {
  if (r > delta) return {r - delta, 1.0};
  return {0.0, 0.0};
}

/// (delta - r) + beta inside, beta * exp(delta - r) outside; equals beta at r == delta.
inline RadialLoss contraction_of(double r, double delta, double beta) {
  if (r < delta) return {(delta - r) + beta, -1.0};
  const double v = beta * std::exp(delta - r);
  return {v, -v};
}

/// max(delta - r, 0)
inline RadialLoss inner_hinge_of(double r, double delta) {
  if (r < delta) return {delta - r, -1.0};
  return {0.0, 0.0};
}

inline double expansion_loss(const Ellipsoid& e, const Vector& z) { return expansion_of(radius(e, z), e.scale).value; }

inline double contraction_loss(const Ellipsoid& e, const Vector& z_neg, double beta) {
  ELIDECIDE_REQUIRE(beta >= 0.0, ErrorKind::InvalidArgument, "beta must be nonnegative");
  return contraction_of(radius(e, z_neg), e.scale, beta).value;
}

struct GradientDiagnostics {
  /// Active gradient branches skipped because r was below 1e-12.
  std::size_t near_singular_radius = 0;
};

inline constexpr double kMinGradientRadius = 1e-12;

/// grad += slope * (A v v^T) / r, clamped to nothing when r is ~0.
inline void accumulate_radial_gradient(Matrix& grad, const Vector& v, const Vector& mapped,
                                       double r, double slope, GradientDiagnostics* diag) {
  if (slope == 0.0) return;
  if (r < kMinGradientRadius) {
    if (diag) ++diag->near_singular_radius;
    return;
  }
  grad.noalias() += (slope / r) * mapped * v.transpose();
}

enum class SampleKind { Positive, Negative };

/// dL/dA of the expansion (Positive) or contraction (Negative) loss at z.
inline Matrix loss_gradient(const Ellipsoid& e, const Vector& z, SampleKind kind, double beta,
                            GradientDiagnostics* diag = nullptr) {
  detail::check_dim(e, z);
  const Vector v = z - e.centroid;
  const Vector mapped = e.matrix * v;
  const double r = mapped.norm();
  const RadialLoss l = kind == SampleKind::Positive ? expansion_of(r, e.scale) : contraction_of(r, e.scale, beta);
  Matrix grad = Matrix::Zero(e.matrix.rows(), e.matrix.cols());
  accumulate_radial_gradient(grad, v, mapped, r, l.slope, diag);
  return grad;
}

}  // namespace elidecide
