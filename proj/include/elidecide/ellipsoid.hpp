#pragma once

// Per-class ellipsoid E = { z : ||A (z - c)|| <= delta }.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"

namespace elidecide {

struct Ellipsoid {
  /// Class id as seen by the data (the original id under a KCR split).
  int id = 0;
  Vector centroid;
  Matrix matrix;
  double scale = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(centroid.size()); }

  static Ellipsoid ball(int id, Vector centroid, double radius) {
    const auto n = centroid.size();
    return {id, std::move(centroid), Matrix::Identity(n, n), radius};
  }

  void validate() const {
    ELIDECIDE_REQUIRE(scale > 0.0, ErrorKind::InvalidArgument, "ellipsoid scale must be positive");
    ELIDECIDE_REQUIRE(matrix.rows() == centroid.size() && matrix.cols() == centroid.size(),
                      ErrorKind::DimensionMismatch, "matrix shape does not match centroid dimension");
  }
};

struct BoundarySet {
  std::vector<Ellipsoid> ellipsoids;

  std::size_t size() const { return ellipsoids.size(); }
  std::size_t dim() const { return ellipsoids.empty() ? 0 : ellipsoids.front().dim(); }

  void validate() const {
    for (const auto& e : ellipsoids) {
      e.validate();
      ELIDECIDE_REQUIRE(e.dim() == dim(), ErrorKind::DimensionMismatch, "ellipsoids disagree on dimension");
    }
  }
};

namespace detail {
inline void check_dim(const Ellipsoid& e, const Vector& z) {
  ELIDECIDE_REQUIRE(static_cast<std::size_t>(z.size()) == e.dim(), ErrorKind::DimensionMismatch,
                    "point dimension " + std::to_string(z.size()) + " != ellipsoid dimension " +
                        std::to_string(e.dim()));
}
}  // namespace detail

/// phi(z) = A (z - c): maps the ellipsoid onto the ball of radius delta.
inline Vector affine_map(const Ellipsoid& e, const Vector& z) {
  detail::check_dim(e, z);
  return e.matrix * (z - e.centroid);
}

inline double radius(const Ellipsoid& e, const Vector& z) { return affine_map(e, z).norm(); }

/// Closed membership test: boundary points belong to the ellipsoid.
inline bool contains(const Ellipsoid& e, const Vector& z) { return radius(e, z) <= e.scale; }

/// Gram matrix A^T A, built entry by entry so the result is exactly symmetric.
inline Matrix gram(const Matrix& a) {
  const auto n = a.cols();
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = a.col(i).dot(a.col(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

struct AxisDecomposition {
  /// Columns are orthonormal axis directions, ordered by ascending eigenvalue.
  Matrix directions;
  Vector eigenvalues;
  /// Semi-axis lengths delta / sqrt(lambda_i).
  Vector lengths;
};

inline AxisDecomposition axis_decomposition(const Ellipsoid& e) {
  e.validate();
  const Matrix g = gram(e.matrix);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(g);
  ELIDECIDE_REQUIRE(solver.info() == Eigen::Success, ErrorKind::SingularMatrix, "eigen-decomposition failed");
  AxisDecomposition out{solver.eigenvectors(), solver.eigenvalues(), Vector(g.rows())};
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    ELIDECIDE_REQUIRE(out.eigenvalues[i] > 1e-12, ErrorKind::SingularMatrix,
                      "eigenvalue " + std::to_string(out.eigenvalues[i]) + " is not positive");
    // sign convention: first nonzero component positive
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double v = out.directions(r, i);
      if (v != 0.0) {
        if (v < 0.0) out.directions.col(i) *= -1.0;
        break;
      }
    }
    out.lengths[i] = e.scale / std::sqrt(out.eigenvalues[i]);
  }
  return out;
}

inline double smallest_singular_value(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  return s.size() ? s[s.size() - 1] : 0.0;
}

}  // namespace elidecide
