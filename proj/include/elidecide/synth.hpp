#pragma once

// Anisotropic Gaussian cluster benchmarks.

#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "elidecide/error.hpp"
#include "elidecide/eval.hpp"
#include "elidecide/feature_space.hpp"
#include "elidecide/rng.hpp"

namespace elidecide {

struct ClusterAxis {
  Vector direction;
  double stddev = 1.0;
};

struct ClusterSpec {
  Vector mean;
  std::vector<ClusterAxis> axes;
  int count = 1;
  int label = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

  void validate() const {
    ELIDECIDE_REQUIRE(count >= 1, ErrorKind::InvalidArgument, "cluster count must be >= 1");
    for (std::size_t i = 0; i < axes.size(); ++i) {
      ELIDECIDE_REQUIRE(axes[i].direction.size() == mean.size(), ErrorKind::DimensionMismatch,
                        "axis dimension differs from mean dimension");
      ELIDECIDE_REQUIRE(axes[i].stddev > 0.0, ErrorKind::InvalidArgument, "axis stddev must be positive");
      for (std::size_t j = i; j < axes.size(); ++j) {
        const double dot = axes[i].direction.dot(axes[j].direction);
        ELIDECIDE_REQUIRE(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-8, ErrorKind::InvalidArgument,
                          "cluster axes are not orthonormal");
      }
    }
  }
};

struct SynthSpec {
  std::vector<ClusterSpec> known;
  std::vector<ClusterSpec> open;
};

/// Draws mean + sum_i stddev_i * g_i * dir_i per sample, rounded to float so
/// in-memory data equals what an EMBD file stores. Each cluster is split
/// 70/10/20 into train/val/test by its own seeded shuffle; open clusters
/// contribute only their test share, labeled -1.
inline DataSplits generate(const std::vector<ClusterSpec>& specs, const std::vector<ClusterSpec>& open_specs,
                           std::uint64_t seed) {
  ELIDECIDE_REQUIRE(!specs.empty(), ErrorKind::InvalidArgument, "need at least one known cluster");
  const std::size_t n = specs.front().dim();
  DataSplits out;
  int class_count = 0;
  for (const auto& s : specs) class_count = std::max(class_count, s.label + 1);
  for (auto* d : {&out.train, &out.val, &out.test}) {
    d->dim = n;
    d->class_count = class_count;
    d->final_form = true;
  }

  auto emit = [&](const ClusterSpec& spec, int label, bool open, std::size_t index) {
    spec.validate();
    ELIDECIDE_REQUIRE(spec.dim() == n, ErrorKind::DimensionMismatch,
                      "cluster dimension " + std::to_string(spec.dim()) + " != " + std::to_string(n));
    Rng rng = Rng::substream(seed, (open ? "synth/open/" : "synth/known/") + std::to_string(index));
    std::vector<Vector> points;
    points.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
      Vector x = spec.mean;
      for (const auto& axis : spec.axes) x += axis.stddev * rng.normal() * axis.direction;
      for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = static_cast<double>(static_cast<float>(x[j]));
      points.push_back(std::move(x));
    }
    rng.shuffle(points);
    const auto total = points.size();
    const auto n_train = total * 7 / 10;
    const auto n_val = total / 10;
    for (std::size_t i = 0; i < total; ++i) {
      if (i < n_train) {
        if (!open) out.train.samples.push_back({points[i], label});
      } else if (i < n_train + n_val) {
        if (!open) out.val.samples.push_back({points[i], label});
      } else {
        out.test.samples.push_back({points[i], open ? kOpenLabel : label});
      }
    }
  };
  for (std::size_t i = 0; i < specs.size(); ++i) {
    ELIDECIDE_REQUIRE(specs[i].label >= 0, ErrorKind::InvalidArgument, "known cluster labels must be >= 0");
    emit(specs[i], specs[i].label, false, i);
  }
  for (std::size_t i = 0; i < open_specs.size(); ++i) emit(open_specs[i], kOpenLabel, true, i);

  Rng mix = Rng::substream(seed, "synth/order");
  mix.shuffle(out.train.samples);
  mix.shuffle(out.val.samples);
  mix.shuffle(out.test.samples);
  return out;
}

inline DataSplits generate(const SynthSpec& spec, std::uint64_t seed) { return generate(spec.known, spec.open, seed); }

/// Random orthonormal basis (columns) from the QR factorization of a Gaussian matrix.
inline Matrix random_orthonormal(std::size_t n, Rng& rng) {
  const auto dim = static_cast<Eigen::Index>(n);
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// Parameters of the "aniso" family of benchmarks.
struct AnisoParams {
  std::size_t dim = 8;
  int known = 4;
  int open = 2;
  int count = 500;
  double sigma_major = 1.0;
  double aspect = 4.0;
  /// Axes per cluster at sigma_major; the rest get sigma_major / aspect.
  std::size_t major_axes = 4;
  /// Distance of each known mean from the origin; known means are mutually orthogonal.
  double mean_radius = 10.0;
  /// Offset of each open cluster from its anchor known mean, in units of sigma_major.
  double open_offset = 3.0;
  /// Place open clusters toward the next known mean (true) or along a minor axis (false).
  bool open_between = true;
};

/// Known clusters with random orthogonal principal axes. Open cluster j sits
/// open_offset * sigma_major from known mean j % K, heading toward the next
/// known mean (or along a minor axis of its anchor when open_between is off).
/// The contraction loss is not scale-invariant, so sigma_major sets the
/// regime; the defaults use unit major deviation.
inline SynthSpec aniso_scenario(const AnisoParams& p, std::uint64_t seed) {
  ELIDECIDE_REQUIRE(p.known >= 1 && static_cast<std::size_t>(p.known) <= p.dim, ErrorKind::InvalidArgument,
                    "known cluster count must lie in [1, dim]");
  ELIDECIDE_REQUIRE(p.major_axes < p.dim, ErrorKind::InvalidArgument, "need at least one minor axis");
  Rng rng = Rng::substream(seed, "synth/scenario");
  const Matrix mean_dirs = random_orthonormal(p.dim, rng);
  const double sigma_minor = p.sigma_major / p.aspect;

  auto make = [&](Vector mean, int label) {
    const Matrix basis = random_orthonormal(p.dim, rng);
    ClusterSpec c;
    c.mean = std::move(mean);
    c.count = p.count;
    c.label = label;
    for (std::size_t a = 0; a < p.dim; ++a)
      c.axes.push_back({basis.col(static_cast<Eigen::Index>(a)), a < p.major_axes ? p.sigma_major : sigma_minor});
    return c;
  };

  SynthSpec spec;
  for (int k = 0; k < p.known; ++k) spec.known.push_back(make(p.mean_radius * mean_dirs.col(k), k));
  for (int j = 0; j < p.open; ++j) {
    const ClusterSpec& anchor = spec.known[static_cast<std::size_t>(j % p.known)];
    Vector dir;
    if (p.open_between && p.known > 1) {
      dir = spec.known[static_cast<std::size_t>((j + 1) % p.known)].mean - anchor.mean;
      dir.normalize();
    } else {
      dir = anchor.axes[p.major_axes + static_cast<std::size_t>(j / p.known) % (p.dim - p.major_axes)].direction;
    }
    spec.open.push_back(make(anchor.mean + p.open_offset * p.sigma_major * dir, kOpenLabel));
  }
  return spec;
}

inline bool named_scenario(const std::string& name, AnisoParams& out) {
  if (name == "aniso-k4") {
    out = AnisoParams{};
    return true;
  }
  if (name == "iso-k4") {
    out = AnisoParams{};
    out.aspect = 1.0;
    return true;
  }
  return false;
}

inline nlohmann::json cluster_to_json(const ClusterSpec& c) {
  nlohmann::json j;
  j["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
  j["count"] = c.count;
  j["label"] = c.label;
  j["axes"] = nlohmann::json::array();
  for (const auto& a : c.axes)
    j["axes"].push_back({{"direction", std::vector<double>(a.direction.data(), a.direction.data() + a.direction.size())},
                         {"stddev", a.stddev}});
  return j;
}

inline ClusterSpec cluster_from_json(const nlohmann::json& j) {
  try {
    ClusterSpec c;
    const auto mean = j.at("mean").get<std::vector<double>>();
    c.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    c.count = j.at("count").get<int>();
    c.label = j.value("label", 0);
    for (const auto& a : j.at("axes")) {
      const auto dir = a.at("direction").get<std::vector<double>>();
      c.axes.push_back({Eigen::Map<const Vector>(dir.data(), static_cast<Eigen::Index>(dir.size())),
                        a.at("stddev").get<double>()});
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::FormatError, std::string("bad cluster spec: ") + ex.what());
  }
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s, std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["known"] = nlohmann::json::array();
  j["open"] = nlohmann::json::array();
  for (const auto& c : s.known) j["known"].push_back(cluster_to_json(c));
  for (const auto& c : s.open) j["open"].push_back(cluster_to_json(c));
  return j;
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  ELIDECIDE_REQUIRE(j.is_object() && j.contains("known") && j["known"].is_array(), ErrorKind::FormatError,
                    "spec must contain a \"known\" array");
  SynthSpec s;
  for (const auto& c : j["known"]) s.known.push_back(cluster_from_json(c));
  if (j.contains("open"))
    for (const auto& c : j["open"]) {
      s.open.push_back(cluster_from_json(c));
      s.open.back().label = kOpenLabel;
    }
  return s;
}

}  // namespace elidecide
