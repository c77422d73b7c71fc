#pragma once

// Embedding vectors, labeled datasets, the linear projection head with L2
// normalization, and the supervised contrastive (SCL) objective used to
// refine that head.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "elidecide/error.hpp"
#include "elidecide/rng.hpp"

namespace elidecide {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr int kOpenLabel = -1;

struct LabeledSample {
  Vector embedding;
  int label = 0;
};

struct LabeledDataset {
  std::size_t dim = 0;
  int class_count = 0;
  /// true when embeddings are already in final (projected, normalized) form.
  bool final_form = true;
  std::vector<LabeledSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void add(Vector embedding, int label) {
    if (samples.empty() && dim == 0) dim = static_cast<std::size_t>(embedding.size());
    ELIDECIDE_REQUIRE(static_cast<std::size_t>(embedding.size()) == dim, ErrorKind::DimensionMismatch,
                      "sample dimension " + std::to_string(embedding.size()) + " != dataset dimension " +
                          std::to_string(dim));
    if (label >= class_count) class_count = label + 1;
    samples.push_back({std::move(embedding), label});
  }

  std::vector<Vector> class_members(int label) const {
    std::vector<Vector> out;
    for (const auto& s : samples)
      if (s.label == label) out.push_back(s.embedding);
    return out;
  }

  /// Checks the dimension invariant and, for training splits, that every
  /// class id in [0, class_count) is populated.
  void validate(bool require_all_classes) const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(class_count, 0)), 0);
    for (const auto& s : samples) {
      ELIDECIDE_REQUIRE(static_cast<std::size_t>(s.embedding.size()) == dim, ErrorKind::DimensionMismatch,
                        "sample dimension mismatch");
      ELIDECIDE_REQUIRE(s.label >= kOpenLabel && s.label < class_count, ErrorKind::FormatError,
                        "label " + std::to_string(s.label) + " out of range");
      if (s.label >= 0) ++counts[static_cast<std::size_t>(s.label)];
    }
    if (require_all_classes) {
      for (std::size_t k = 0; k < counts.size(); ++k)
        ELIDECIDE_REQUIRE(counts[k] > 0, ErrorKind::EmptyClass, "class " + std::to_string(k) + " has no samples");
    }
  }
};

/// Linear head z = (W x + b) / ||W x + b||. W is stored output-major (n x H)
/// so that W * x is the usual matrix-vector product.
struct ProjectionHead {
  Matrix weight;
  Vector bias;

  std::size_t input_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weight.rows()); }

  static ProjectionHead identity(std::size_t dim) {
    return {Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)),
            Vector::Zero(static_cast<Eigen::Index>(dim))};
  }

  /// Identity on the overlapping block plus small Gaussian noise, so no row
  /// is all zero even when output_dim > input_dim.
  static ProjectionHead init(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(output_dim);
    const auto h = static_cast<Eigen::Index>(input_dim);
    if (n == h) return identity(input_dim);
    Matrix w = Matrix::Identity(n, h);
    const double scale = 1.0 / std::sqrt(static_cast<double>(h));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < h; ++j) w(i, j) += scale * rng.normal();
    return {std::move(w), Vector::Zero(n)};
  }

  bool has_zero_row() const {
    for (Eigen::Index i = 0; i < weight.rows(); ++i)
      if (weight.row(i).cwiseAbs().maxCoeff() == 0.0) return true;
    return false;
  }
};

inline Vector normalize_project(const Vector& x, const ProjectionHead& head) {
  ELIDECIDE_REQUIRE(static_cast<std::size_t>(x.size()) == head.input_dim(), ErrorKind::DimensionMismatch,
                    "input dimension " + std::to_string(x.size()) + " != head input " +
                        std::to_string(head.input_dim()));
  Vector u = head.weight * x + head.bias;
  const double norm = u.norm();
  ELIDECIDE_REQUIRE(norm >= 1e-12, ErrorKind::ZeroVector, "projection has zero norm");
  return u / norm;
}

inline LabeledDataset project_dataset(const LabeledDataset& raw, const ProjectionHead& head) {
  LabeledDataset out;
  out.dim = head.output_dim();
  out.class_count = raw.class_count;
  out.final_form = true;
  out.samples.reserve(raw.size());
  for (const auto& s : raw.samples) out.samples.push_back({normalize_project(s.embedding, head), s.label});
  return out;
}

/// Isotropic noise whose expected squared norm is sigma^2, i.e. N(0, sigma^2/n I).
inline Vector isotropic_noise(Eigen::Index n, double sigma, Rng& rng) {
  Vector eps(n);
  const double s = sigma / std::sqrt(static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) eps[i] = s * rng.normal();
  return eps;
}

/// normalize(z + eps) with isotropic_noise(sigma). Stand-in for dropout views.
inline Vector augment(const Vector& z, double sigma, Rng& rng) {
  ELIDECIDE_REQUIRE(sigma >= 0.0, ErrorKind::InvalidArgument, "sigma must be nonnegative");
  if (sigma == 0.0) return z;
  Vector noisy = z + isotropic_noise(z.size(), sigma, rng);
  const double norm = noisy.norm();
  ELIDECIDE_REQUIRE(norm >= 1e-12, ErrorKind::ZeroVector, "augmented vector has zero norm");
  return noisy / norm;
}

struct SclResult {
  double loss = 0.0;
  /// dL/dz_i for every batch member (empty unless requested).
  std::vector<Vector> grad;
};

/// Supervised contrastive loss, averaged over anchors. For anchor i the
/// contrast set is every other batch member and the positives are the other
/// members sharing its label. Uses a max-shifted log-sum-exp.
inline SclResult scl_loss_and_grad(std::span<const Vector> z, std::span<const int> labels, double tau,
                                   bool want_grad) {
  const std::size_t m = z.size();
  ELIDECIDE_REQUIRE(m >= 2, ErrorKind::InvalidArgument, "SCL batch needs at least 2 members");
  ELIDECIDE_REQUIRE(labels.size() == m, ErrorKind::SizeMismatch, "labels/embeddings size mismatch");
  ELIDECIDE_REQUIRE(tau > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");

  Matrix sim(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) sim(i, j) = z[i].dot(z[j]) / tau;

  // dL/dsim, filled row by row
  Matrix gsim = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  double total = 0.0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t positives = 0;
    double row_max = -INFINITY;
    for (std::size_t a = 0; a < m; ++a) {
      if (a == i) continue;
      row_max = std::max(row_max, sim(i, a));
      if (labels[a] == labels[i]) ++positives;
    }
    ELIDECIDE_REQUIRE(positives > 0, ErrorKind::NoPositives,
                      "anchor " + std::to_string(i) + " has no positive partner");
    double denom = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      if (a != i) denom += std::exp(sim(i, a) - row_max);
    const double log_denom = row_max + std::log(denom);
    const double inv_p = 1.0 / static_cast<double>(positives);
    double anchor_loss = 0.0;
    for (std::size_t p = 0; p < m; ++p)
      if (p != i && labels[p] == labels[i]) anchor_loss -= sim(i, p) - log_denom;
    total += anchor_loss * inv_p;
    if (want_grad) {
      for (std::size_t a = 0; a < m; ++a) {
        if (a == i) continue;
        const double softmax = std::exp(sim(i, a) - log_denom);
        const double indicator = labels[a] == labels[i] ? inv_p : 0.0;
        gsim(i, a) = inv_m * (softmax - indicator);
      }
    }
  }

  SclResult out;
  out.loss = total * inv_m;
  if (want_grad) {
    out.grad.assign(m, Vector::Zero(z[0].size()));
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t j = 0; j < m; ++j) {
        const double c = gsim(k, j) + gsim(j, k);
        if (c != 0.0) out.grad[k] += (c / tau) * z[j];
      }
  }
  return out;
}

inline double scl_loss(std::span<const Vector> z, std::span<const int> labels, double tau) {
  return scl_loss_and_grad(z, labels, tau, false).loss;
}

struct HeadGradient {
  double loss = 0.0;
  Matrix weight;
  Vector bias;
};

/// SCL objective of a raw batch under `head`. Each raw vector contributes
/// two views: its projection z and normalize(z + noise[i]). The noise is
/// passed in so the objective is a deterministic function of the head.
inline HeadGradient scl_head_objective(const ProjectionHead& head, std::span<const Vector> raw,
                                       std::span<const int> labels, std::span<const Vector> noise, double tau,
                                       bool want_grad) {
  const std::size_t b = raw.size();
  ELIDECIDE_REQUIRE(labels.size() == b && noise.size() == b, ErrorKind::SizeMismatch, "batch size mismatch");
  std::vector<Vector> u(b), views(2 * b);
  std::vector<double> u_norm(b), shifted_norm(b);
  std::vector<int> view_labels(2 * b);
  for (std::size_t i = 0; i < b; ++i) {
    u[i] = head.weight * raw[i] + head.bias;
    u_norm[i] = u[i].norm();
    ELIDECIDE_REQUIRE(u_norm[i] >= 1e-12, ErrorKind::ZeroVector, "projection has zero norm");
    views[i] = u[i] / u_norm[i];
    Vector shifted = views[i] + noise[i];
    shifted_norm[i] = shifted.norm();
    ELIDECIDE_REQUIRE(shifted_norm[i] >= 1e-12, ErrorKind::ZeroVector, "augmented vector has zero norm");
    views[b + i] = shifted / shifted_norm[i];
    view_labels[i] = view_labels[b + i] = labels[i];
  }
  const SclResult scl = scl_loss_and_grad(views, view_labels, tau, want_grad);
  HeadGradient out;
  out.loss = scl.loss;
  if (!want_grad) return out;
  out.weight = Matrix::Zero(head.weight.rows(), head.weight.cols());
  out.bias = Vector::Zero(head.bias.size());
  for (std::size_t i = 0; i < b; ++i) {
    const Vector& z = views[i];
    const Vector& z2 = views[b + i];
    // through the augmented view: d normalize(y)/dy = (I - y' y'^T)/|y|
    Vector gz = scl.grad[i] + (scl.grad[b + i] - z2 * z2.dot(scl.grad[b + i])) / shifted_norm[i];
    Vector gu = (gz - z * z.dot(gz)) / u_norm[i];
    out.weight.noalias() += gu * raw[i].transpose();
    out.bias += gu;
  }
  return out;
}

struct SclConfig {
  int epochs = 0;
  std::size_t batch_size = 32;
  double lr = 2e-5;
  double tau = 0.07;
  double sigma = 0.1;
};

/// Plain gradient descent on the head over uniformly shuffled batches.
/// Returns the mean batch loss of each epoch.
inline std::vector<double> train_projection_head(ProjectionHead& head, const LabeledDataset& raw,
                                                 const SclConfig& cfg, Rng& rng) {
  ELIDECIDE_REQUIRE(raw.size() >= 2, ErrorKind::InvalidArgument, "SCL needs at least 2 samples");
  ELIDECIDE_REQUIRE(cfg.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  std::vector<double> history;
  std::vector<std::size_t> order(raw.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto n = static_cast<Eigen::Index>(head.output_dim());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 1) continue;
      std::vector<Vector> xs, noise;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(raw.samples[order[i]].embedding);
        labels.push_back(raw.samples[order[i]].label);
        noise.push_back(isotropic_noise(n, cfg.sigma, rng));
      }
      const HeadGradient g = scl_head_objective(head, xs, labels, noise, cfg.tau, true);
      head.weight -= cfg.lr * g.weight;
      head.bias -= cfg.lr * g.bias;
      sum += g.loss;
      ++batches;
    }
    history.push_back(batches ? sum / static_cast<double>(batches) : 0.0);
  }
  return history;
}

}  // namespace elidecide
