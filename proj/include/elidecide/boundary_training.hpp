#pragma once

// Centroids, scales, the dual expansion/contraction objective and the
// mini-batch gradient loop that fits one matrix A_k per known class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "elidecide/baselines.hpp"
#include "elidecide/ellipsoid.hpp"
#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"
#include "elidecide/losses.hpp"
#include "elidecide/pseudo_open.hpp"
#include "elidecide/rng.hpp"

namespace elidecide {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline Vector compute_centroid(std::span<const Vector> samples) {
  ELIDECIDE_REQUIRE(!samples.empty(), ErrorKind::EmptyClass, "cannot average an empty class");
  Vector sum = Vector::Zero(samples.front().size());
  for (const auto& s : samples) {
    ELIDECIDE_REQUIRE(s.size() == sum.size(), ErrorKind::DimensionMismatch, "sample dimension mismatch");
    sum += s;
  }
  return sum / static_cast<double>(samples.size());
}

/// Mean Euclidean distance of the samples to `centroid`.
inline double compute_delta(std::span<const Vector> samples, const Vector& centroid) {
  ELIDECIDE_REQUIRE(!samples.empty(), ErrorKind::EmptyClass, "cannot measure an empty class");
  CompensatedSum sum;
  for (const auto& s : samples) sum.add((s - centroid).norm());
  const double delta = sum.value() / static_cast<double>(samples.size());
  ELIDECIDE_REQUIRE(delta >= 1e-12, ErrorKind::DegenerateClass, "class has collapsed onto its centroid");
  return delta;
}

struct TrainConfig {
  double boundary_lr = 0.001;
  double beta = 0.5;
  int epochs = 100;
  std::size_t batch_size = 64;
  MixConfig mix;
  std::uint64_t seed = 0;
  int patience = 10;
  NegativeLoss negative_loss = NegativeLoss::EliDecide;
  /// Apply each pseudo-open negative only to its nearest class instead of all classes.
  bool nearest_class_negatives = false;
  ClabParams clab;

  void validate() const {
    ELIDECIDE_REQUIRE(boundary_lr > 0.0, ErrorKind::InvalidArgument, "boundary learning rate must be positive");
    ELIDECIDE_REQUIRE(beta >= 0.0, ErrorKind::InvalidArgument, "beta must be nonnegative");
    ELIDECIDE_REQUIRE(epochs >= 0, ErrorKind::InvalidArgument, "epochs must be nonnegative");
    ELIDECIDE_REQUIRE(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
    ELIDECIDE_REQUIRE(patience >= 1, ErrorKind::InvalidArgument, "patience must be >= 1");
    if (uses_pseudo_open(negative_loss)) mix.validate();
  }
};

struct LossBreakdown {
  double expansion_total = 0.0;
  double contraction_total = 0.0;
  double total = 0.0;
};

/// Negatives for one batch. Pseudo-open strategies fill `pseudo`; CLAB fills
/// `partner` with the index (into the positives) of the other-class sample
/// paired with each anchor, or -1 when the batch has none.
struct NegativeBatch {
  std::vector<Vector> pseudo;
  std::vector<std::ptrdiff_t> partner;
};

struct BatchStats {
  std::size_t near_singular_radius = 0;
  std::size_t clab_unpaired = 0;
};

namespace training_detail {

inline std::size_t nearest_class(const BoundarySet& bs, const Vector& z) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bs.size(); ++k) {
    const double d = (z - bs.ellipsoids[k].centroid).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

struct Radial {
  Vector v;
  Vector mapped;
  double r;
};

inline Radial radial(const Ellipsoid& e, const Vector& z) {
  Radial out{z - e.centroid, Vector(), 0.0};
  out.mapped = e.matrix * out.v;
  out.r = out.mapped.norm();
  return out;
}

}  // namespace training_detail

/// Loss of one batch under any negative-loss strategy; when `grads` is
/// non-null the per-class dL/dA_k are accumulated into it. Positive labels
/// index `bs.ellipsoids`.
inline LossBreakdown batch_objective(const BoundarySet& bs, std::span<const LabeledSample> positives,
                                     const NegativeBatch& negatives, const TrainConfig& cfg,
                                     std::vector<Matrix>* grads, BatchStats* stats) {
  using namespace training_detail;
  const std::size_t k_count = bs.size();
  CompensatedSum expansion, contraction;
  GradientDiagnostics diag;
  auto add_grad = [&](std::size_t k, const Radial& rad, double slope) {
    if (grads) accumulate_radial_gradient((*grads)[k], rad.v, rad.mapped, rad.r, slope, &diag);
  };

  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto& s = positives[i];
    ELIDECIDE_REQUIRE(s.label >= 0 && static_cast<std::size_t>(s.label) < k_count, ErrorKind::InvalidArgument,
                      "positive label " + std::to_string(s.label) + " outside [0, K)");
    const auto k = static_cast<std::size_t>(s.label);
    const Ellipsoid& e = bs.ellipsoids[k];
    const Radial rad = radial(e, s.embedding);
    const RadialLoss pos = expansion_of(rad.r, e.scale);
    expansion.add(pos.value);
    add_grad(k, rad, pos.slope);

    if (cfg.negative_loss == NegativeLoss::Adb || cfg.negative_loss == NegativeLoss::Clab) {
      const RadialLoss neg = inner_hinge_of(rad.r, e.scale);
      contraction.add(neg.value);
      add_grad(k, rad, neg.slope);
    }
    if (cfg.negative_loss == NegativeLoss::Clab) {
      const std::ptrdiff_t j = i < negatives.partner.size() ? negatives.partner[i] : -1;
      if (j < 0) {
        if (stats) ++stats->clab_unpaired;
        continue;
      }
      const Radial rad_minus = radial(e, positives[static_cast<std::size_t>(j)].embedding);
      const RadialLoss partner = clab_partner_of(rad_minus.r, e.scale, cfg.clab);
      contraction.add(partner.value);
      add_grad(k, rad_minus, partner.slope);
    }
  }

  if (uses_pseudo_open(cfg.negative_loss)) {
    const double beta = cfg.negative_loss == NegativeLoss::EliDecide ? cfg.beta : 0.0;
    for (const auto& z : negatives.pseudo) {
      const std::size_t only = cfg.nearest_class_negatives ? nearest_class(bs, z) : k_count;
      for (std::size_t k = 0; k < k_count; ++k) {
        if (only != k_count && k != only) continue;
        const Ellipsoid& e = bs.ellipsoids[k];
        const Radial rad = radial(e, z);
        const RadialLoss neg = cfg.negative_loss == NegativeLoss::EliDecide ? contraction_of(rad.r, e.scale, beta)
                                                                            : inner_hinge_of(rad.r, e.scale);
        contraction.add(neg.value);
        add_grad(k, rad, neg.slope);
      }
    }
  }
  if (stats) stats->near_singular_radius += diag.near_singular_radius;
  LossBreakdown out{expansion.value(), contraction.value(), 0.0};
  out.total = out.expansion_total + out.contraction_total;
  return out;
}

/// Expansion over the positives (each against its own class) plus
/// contraction of every negative against every class.
inline LossBreakdown total_loss(const BoundarySet& bs, std::span<const LabeledSample> batch,
                                std::span<const Vector> negatives, double beta) {
  ELIDECIDE_REQUIRE(batch.size() == negatives.size(), ErrorKind::SizeMismatch,
                    "negative batch size " + std::to_string(negatives.size()) + " != positive batch size " +
                        std::to_string(batch.size()));
  ELIDECIDE_REQUIRE(beta >= 0.0, ErrorKind::InvalidArgument, "beta must be nonnegative");
  TrainConfig cfg;
  cfg.beta = beta;
  NegativeBatch neg;
  neg.pseudo.assign(negatives.begin(), negatives.end());
  return batch_objective(bs, batch, neg, cfg, nullptr, nullptr);
}

/// Pairs each anchor with a uniformly chosen batch member of another class.
inline std::vector<std::ptrdiff_t> pair_other_class(std::span<const LabeledSample> batch, Rng& rng) {
  std::vector<std::ptrdiff_t> partner(batch.size(), -1);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < batch.size(); ++j)
      if (batch[j].label != batch[i].label) candidates.push_back(j);
    if (!candidates.empty()) partner[i] = static_cast<std::ptrdiff_t>(candidates[rng.index(candidates.size())]);
  }
  return partner;
}

struct EpochRecord {
  int epoch = 0;
  double expansion_total = 0.0;
  double contraction_total = 0.0;
  double total = 0.0;
  double val_total = 0.0;
};

struct TrainResult {
  BoundarySet boundaries;
  std::vector<EpochRecord> log;
  /// Epoch whose snapshot was returned; 0 means the identity initialization.
  int best_epoch = 0;
  BatchStats stats;
  /// Classes whose A_k ended with smallest singular value <= 1e-10.
  std::vector<int> near_singular_classes;
};

/// Sorts samples by (label, coordinates) so results do not depend on the
/// order the data arrived in.
inline std::vector<LabeledSample> canonical_samples(const LabeledDataset& data) {
  std::vector<LabeledSample> out = data.samples;
  std::stable_sort(out.begin(), out.end(), [](const LabeledSample& a, const LabeledSample& b) {
    if (a.label != b.label) return a.label < b.label;
    return std::lexicographical_compare(a.embedding.data(), a.embedding.data() + a.embedding.size(),
                                        b.embedding.data(), b.embedding.data() + b.embedding.size());
  });
  return out;
}

/// Identity-initialized ellipsoids around each class's centroid with scale
/// equal to the mean in-class distance. `ids` gives the id stored on each.
inline BoundarySet initial_boundaries(const LabeledDataset& train, const std::vector<int>& ids = {}) {
  BoundarySet bs;
  const std::vector<LabeledSample> sorted = canonical_samples(train);
  for (int k = 0; k < train.class_count; ++k) {
    const int id = ids.empty() ? k : ids[static_cast<std::size_t>(k)];
    std::vector<Vector> members;
    for (const auto& s : sorted)
      if (s.label == k) members.push_back(s.embedding);
    if (members.empty()) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(id) + " has no samples");
    Vector c = compute_centroid(members);
    double delta;
    try {
      delta = compute_delta(members, c);
    } catch (const Error&) {
      throw Error(ErrorKind::DegenerateClass, "class " + std::to_string(id) + " has collapsed onto its centroid");
    }
    bs.ellipsoids.push_back(Ellipsoid::ball(id, std::move(c), delta));
  }
  return bs;
}

/// Fits A_k by mini-batch gradient descent on the batch-summed objective.
/// Centroids and scales stay frozen at their training-set values. Returns
/// the snapshot (including the identity start) with the lowest validation
/// objective; stops after `patience` epochs without improvement.
inline TrainResult train_boundaries(const LabeledDataset& train, const LabeledDataset& val, const TrainConfig& cfg,
                                    const std::vector<int>& ids = {}) {
  cfg.validate();
  ELIDECIDE_REQUIRE(train.class_count >= 1, ErrorKind::EmptyClass, "training set has no classes");
  ELIDECIDE_REQUIRE(ids.empty() || ids.size() == static_cast<std::size_t>(train.class_count),
                    ErrorKind::SizeMismatch, "one id per class required");
  {
    std::vector<std::size_t> counts(static_cast<std::size_t>(train.class_count), 0);
    for (const auto& s : train.samples)
      if (s.label >= 0) ++counts[static_cast<std::size_t>(s.label)];
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const int id = ids.empty() ? static_cast<int>(k) : ids[k];
      if (counts[k] == 0) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(id) + " has no samples");
      ELIDECIDE_REQUIRE(counts[k] >= 2, ErrorKind::EmptyClass,
                        "class " + std::to_string(id) + " needs at least 2 training samples");
    }
  }

  TrainResult result;
  BoundarySet bs = initial_boundaries(train, ids);
  const std::vector<LabeledSample> samples = canonical_samples(train);
  const std::vector<LabeledSample> val_samples = canonical_samples(val);
  const std::size_t k_count = bs.size();

  Rng order_rng = Rng::substream(cfg.seed, "boundary");
  Rng neg_rng = Rng::substream(cfg.seed, "negatives");

  LabeledDataset sorted_train = train;
  sorted_train.samples = samples;
  const MixturePool pool(sorted_train);
  if (uses_pseudo_open(cfg.negative_loss) && cfg.epochs > 0)
    ELIDECIDE_REQUIRE(pool.class_count() >= static_cast<std::size_t>(cfg.mix.p), ErrorKind::InsufficientClasses,
                      "pseudo-open mixing needs " + std::to_string(cfg.mix.p) + " known classes, have " +
                          std::to_string(pool.class_count()));

  // fixed validation negatives so the early-stopping signal is comparable across epochs
  NegativeBatch val_neg;
  if (!val_samples.empty() && cfg.epochs > 0) {
    Rng val_rng = Rng::substream(cfg.seed, "negatives/val");
    if (uses_pseudo_open(cfg.negative_loss)) val_neg.pseudo = pool.batch(val_samples.size(), cfg.mix, val_rng);
    if (cfg.negative_loss == NegativeLoss::Clab) val_neg.partner = pair_other_class(val_samples, val_rng);
  }
  auto val_objective = [&](const BoundarySet& b) {
    return batch_objective(b, val_samples, val_neg, cfg, nullptr, nullptr).total;
  };

  BoundarySet best = bs;
  double best_val = val_samples.empty() ? std::numeric_limits<double>::infinity() : val_objective(bs);
  int since_best = 0;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> grads(k_count);
  std::vector<LabeledSample> batch;
  const auto n = static_cast<Eigen::Index>(bs.dim());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    CompensatedSum exp_sum, con_sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);

      NegativeBatch neg;
      if (uses_pseudo_open(cfg.negative_loss)) neg.pseudo = pool.batch(batch.size(), cfg.mix, neg_rng);
      if (cfg.negative_loss == NegativeLoss::Clab) neg.partner = pair_other_class(batch, neg_rng);

      for (auto& g : grads) g = Matrix::Zero(n, n);
      const LossBreakdown lb = batch_objective(bs, batch, neg, cfg, &grads, &result.stats);
      exp_sum.add(lb.expansion_total);
      con_sum.add(lb.contraction_total);
      for (std::size_t k = 0; k < k_count; ++k) bs.ellipsoids[k].matrix -= cfg.boundary_lr * grads[k];
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.expansion_total = exp_sum.value();
    rec.contraction_total = con_sum.value();
    rec.total = rec.expansion_total + rec.contraction_total;
    if (val_samples.empty()) {
      rec.val_total = rec.total;
      best = bs;
      result.best_epoch = epoch;
    } else {
      rec.val_total = val_objective(bs);
      if (rec.val_total < best_val) {
        best_val = rec.val_total;
        best = bs;
        result.best_epoch = epoch;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    result.log.push_back(rec);
    if (!val_samples.empty() && since_best >= cfg.patience) break;
  }

  for (const auto& e : best.ellipsoids)
    if (smallest_singular_value(e.matrix) <= 1e-10) result.near_singular_classes.push_back(e.id);
  result.boundaries = std::move(best);
  return result;
}

}  // namespace elidecide
