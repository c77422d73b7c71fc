#pragma once

// Comparison boundaries: coverage-fraction balls and the three alternative
// negative losses (ADB, CLAB, ADB with pseudo-open samples).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elidecide/ellipsoid.hpp"
#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"
#include "elidecide/losses.hpp"

namespace elidecide {

struct BallBoundary {
  Vector centroid;
  double radius = 0.0;
};

/// Ball whose radius reaches the floor(cf * |S|)-th nearest training sample
/// (1-indexed; ties in distance broken by sample index).
inline BallBoundary ball_from_cf(const std::vector<Vector>& samples, const Vector& centroid, double cf) {
  ELIDECIDE_REQUIRE(cf > 0.0 && cf <= 1.0, ErrorKind::InvalidArgument, "cf must lie in (0, 1]");
  // the small epsilon keeps e.g. 0.95 * 20 from flooring to 18
  const auto rank = static_cast<std::size_t>(std::floor(cf * static_cast<double>(samples.size()) + 1e-9));
  ELIDECIDE_REQUIRE(rank >= 1, ErrorKind::EmptyQuantile,
                    "floor(" + std::to_string(cf) + " * " + std::to_string(samples.size()) + ") = 0");
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ELIDECIDE_REQUIRE(samples[i].size() == centroid.size(), ErrorKind::DimensionMismatch,
                      "sample dimension mismatch");
    dist.emplace_back((samples[i] - centroid).norm(), i);
  }
  std::sort(dist.begin(), dist.end());
  const double r = dist[rank - 1].first;
  ELIDECIDE_REQUIRE(r > 0.0, ErrorKind::DegenerateClass, "coverage radius is zero");
  return {centroid, r};
}

/// Balls share the ellipsoid inference rule with A = I and delta = radius.
inline BoundarySet balls_to_boundary_set(const std::vector<BallBoundary>& balls, const std::vector<int>& ids) {
  ELIDECIDE_REQUIRE(ids.size() == balls.size(), ErrorKind::SizeMismatch, "ids/balls size mismatch");
  BoundarySet bs;
  for (std::size_t k = 0; k < balls.size(); ++k)
    bs.ellipsoids.push_back(Ellipsoid::ball(ids[k], balls[k].centroid, balls[k].radius));
  return bs;
}

inline double adb_negative_loss(const Ellipsoid& e, const Vector& z) {
  return inner_hinge_of(radius(e, z), e.scale).value;
}

struct ClabParams {
  double eta = 0.1;
  double shrink_threshold = 0.1;  // s
  double expand_threshold = 0.5;  // e
};

/// The two eta-weighted hinges on the other-class sample's radius.
inline RadialLoss clab_partner_of(double r_minus, double delta, const ClabParams& p) {
  RadialLoss out;
  const double low = (delta + p.shrink_threshold) - r_minus;
  if (low > 0.0) {
    out.value += p.eta * low;
    out.slope -= p.eta;
  }
  const double high = r_minus - (delta + p.expand_threshold);
  if (high > 0.0) {
    out.value += p.eta * high;
    out.slope += p.eta;
  }
  return out;
}

inline double clab_negative_loss(const Ellipsoid& e, const Vector& z, int z_label, const Vector& z_minus,
                                 int z_minus_label, const ClabParams& p = {}) {
  ELIDECIDE_REQUIRE(z_label != z_minus_label, ErrorKind::SameClassNegative, "negative shares the anchor's class");
  return adb_negative_loss(e, z) + clab_partner_of(radius(e, z_minus), e.scale, p).value;
}

inline double adbgen_negative_loss(const Ellipsoid& e, const Vector& z_pseudo) {
  return inner_hinge_of(radius(e, z_pseudo), e.scale).value;
}

/// Which negative loss drives contraction during boundary training.
enum class NegativeLoss { EliDecide, Adb, Clab, AdbGen };

inline std::string_view to_string(NegativeLoss n) {
  switch (n) {
    case NegativeLoss::EliDecide: return "elidecide";
    case NegativeLoss::Adb: return "adb";
    case NegativeLoss::Clab: return "clab";
    case NegativeLoss::AdbGen: return "adbgen";
  }
  return "elidecide";
}

inline std::optional<NegativeLoss> parse_negative_loss(std::string_view s) {
  if (s == "elidecide") return NegativeLoss::EliDecide;
  if (s == "adb") return NegativeLoss::Adb;
  if (s == "clab") return NegativeLoss::Clab;
  if (s == "adbgen") return NegativeLoss::AdbGen;
  return std::nullopt;
}

inline bool uses_pseudo_open(NegativeLoss n) { return n == NegativeLoss::EliDecide || n == NegativeLoss::AdbGen; }

}  // namespace elidecide
