#pragma once

// Pseudo-open negatives: Dirichlet-weighted convex mixtures of P known
// samples that carry pairwise-distinct labels.

#include <cstddef>
#include <vector>

#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"
#include "elidecide/rng.hpp"

namespace elidecide {

struct MixConfig {
  int p = 3;
  double alpha = 0.6;
  /// Project mixtures back onto the unit sphere. Off by default: the mixture
  /// is used exactly as the convex combination.
  bool renormalize = false;

  void validate() const {
    ELIDECIDE_REQUIRE(p >= 2, ErrorKind::InvalidArgument, "P must be >= 2");
    ELIDECIDE_REQUIRE(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
  }
};

/// Symmetric Dirichlet(alpha) over P components, as normalized Gamma(alpha, 1) draws.
inline std::vector<double> sample_dirichlet(double alpha, int p, Rng& rng) {
  ELIDECIDE_REQUIRE(p >= 2, ErrorKind::InvalidArgument, "P must be >= 2");
  ELIDECIDE_REQUIRE(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be positive");
  std::vector<double> w(static_cast<std::size_t>(p));
  double sum = 0.0;
  for (auto& x : w) {
    x = rng.gamma(alpha);
    sum += x;
  }
  if (sum <= 0.0) {
    // every gamma draw underflowed; only reachable for tiny alpha
    w.assign(w.size(), 0.0);
    w[rng.index(w.size())] = 1.0;
    return w;
  }
  for (auto& x : w) x /= sum;
  return w;
}

/// Mixes `sources` with `weights`. Exposed separately so callers can force weights.
inline Vector mix(const std::vector<Vector>& sources, const std::vector<double>& weights) {
  ELIDECIDE_REQUIRE(!sources.empty() && sources.size() == weights.size(), ErrorKind::SizeMismatch,
                    "sources and weights differ in length");
  Vector out = Vector::Zero(sources.front().size());
  for (std::size_t i = 0; i < sources.size(); ++i) out += weights[i] * sources[i];
  return out;
}

/// Class-indexed view of a known-class dataset used to draw mixtures.
class MixturePool {
 public:
  explicit MixturePool(const LabeledDataset& known) {
    by_class_.resize(static_cast<std::size_t>(std::max(known.class_count, 0)));
    for (const auto& s : known.samples)
      if (s.label >= 0) by_class_[static_cast<std::size_t>(s.label)].push_back(&s.embedding);
    for (std::size_t k = 0; k < by_class_.size(); ++k)
      if (!by_class_[k].empty()) classes_.push_back(k);
  }

  std::size_t class_count() const { return classes_.size(); }

  struct Draw {
    Vector point;
    std::vector<int> labels;
    std::vector<double> weights;
  };

  Draw draw(const MixConfig& cfg, Rng& rng) const {
    cfg.validate();
    const auto p = static_cast<std::size_t>(cfg.p);
    ELIDECIDE_REQUIRE(classes_.size() >= p, ErrorKind::InsufficientClasses,
                      "need " + std::to_string(p) + " known classes, have " + std::to_string(classes_.size()));
    // partial Fisher-Yates: first p entries are a uniform draw without replacement
    std::vector<std::size_t> pick = classes_;
    for (std::size_t i = 0; i < p; ++i) std::swap(pick[i], pick[i + rng.index(pick.size() - i)]);
    Draw d;
    d.weights = sample_dirichlet(cfg.alpha, cfg.p, rng);
    std::vector<Vector> sources;
    for (std::size_t i = 0; i < p; ++i) {
      const auto& members = by_class_[pick[i]];
      sources.push_back(*members[rng.index(members.size())]);
      d.labels.push_back(static_cast<int>(pick[i]));
    }
    d.point = mix(sources, d.weights);
    if (cfg.renormalize) {
      const double norm = d.point.norm();
      if (norm >= 1e-12) d.point /= norm;
    }
    return d;
  }

  std::vector<Vector> batch(std::size_t count, const MixConfig& cfg, Rng& rng) const {
    std::vector<Vector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(draw(cfg, rng).point);
    return out;
  }

 private:
  std::vector<std::vector<const Vector*>> by_class_;
  std::vector<std::size_t> classes_;
};

inline std::vector<Vector> synthesize_batch(const LabeledDataset& known, std::size_t count, const MixConfig& cfg,
                                            Rng& rng) {
  return MixturePool(known).batch(count, cfg, rng);
}

}  // namespace elidecide
