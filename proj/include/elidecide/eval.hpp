#pragma once

// Known-class-ratio splits, (K+1)-way inference and macro-F1 / accuracy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "elidecide/ellipsoid.hpp"
#include "elidecide/error.hpp"
#include "elidecide/feature_space.hpp"
#include "elidecide/rng.hpp"

namespace elidecide {

struct DataSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

struct KcrSplit {
  /// Original ids of the known classes; internal id k maps to known_classes[k].
  std::vector<int> known_classes;
  std::map<int, int> to_internal;
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Chooses round(kcr * C) known classes by a seeded shuffle of the class ids.
/// Unknown classes vanish from train/val and become open (-1) in test.
inline KcrSplit kcr_split(const DataSplits& data, double kcr, std::uint64_t seed) {
  ELIDECIDE_REQUIRE(kcr > 0.0 && kcr <= 1.0, ErrorKind::InvalidArgument, "kcr must lie in (0, 1]");
  const int classes = std::max({data.train.class_count, data.val.class_count, data.test.class_count});
  const auto known = static_cast<int>(std::lround(kcr * classes));
  ELIDECIDE_REQUIRE(known >= 1, ErrorKind::NoKnownClasses,
                    "kcr " + std::to_string(kcr) + " of " + std::to_string(classes) + " classes selects none");
  std::vector<int> ids(static_cast<std::size_t>(classes));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = Rng::substream(seed, "split");
  rng.shuffle(ids);
  ids.resize(static_cast<std::size_t>(known));
  std::sort(ids.begin(), ids.end());

  KcrSplit out;
  out.known_classes = ids;
  for (int k = 0; k < known; ++k) out.to_internal[ids[static_cast<std::size_t>(k)]] = k;

  auto remap = [&](const LabeledDataset& in, bool keep_open) {
    LabeledDataset d;
    d.dim = in.dim;
    d.final_form = in.final_form;
    d.class_count = known;
    for (const auto& s : in.samples) {
      const auto it = out.to_internal.find(s.label);
      if (it != out.to_internal.end())
        d.samples.push_back({s.embedding, it->second});
      else if (keep_open)
        d.samples.push_back({s.embedding, kOpenLabel});
    }
    return d;
  };
  out.train = remap(data.train, false);
  out.val = remap(data.val, false);
  out.test = remap(data.test, true);
  return out;
}

/// Relabels test data for a model whose ellipsoids carry original ids:
/// labels matching ellipsoid k become k, everything else becomes open.
inline LabeledDataset relabel_for_model(const LabeledDataset& test, const BoundarySet& bs) {
  std::map<int, int> index;
  for (std::size_t k = 0; k < bs.size(); ++k) index[bs.ellipsoids[k].id] = static_cast<int>(k);
  LabeledDataset out;
  out.dim = test.dim;
  out.final_form = test.final_form;
  out.class_count = static_cast<int>(bs.size());
  for (const auto& s : test.samples) {
    const auto it = index.find(s.label);
    out.samples.push_back({s.embedding, it == index.end() ? kOpenLabel : it->second});
  }
  return out;
}

/// Nearest centroid (ties to the lowest index), then a membership test on
/// that class's ellipsoid only. Returns the class index or kOpenLabel.
inline int predict(const BoundarySet& bs, const Vector& z) {
  ELIDECIDE_REQUIRE(!bs.ellipsoids.empty(), ErrorKind::InvalidArgument, "empty boundary set");
  ELIDECIDE_REQUIRE(static_cast<std::size_t>(z.size()) == bs.dim(), ErrorKind::DimensionMismatch,
                    "point dimension " + std::to_string(z.size()) + " != model dimension " +
                        std::to_string(bs.dim()));
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bs.size(); ++k) {
    const double d = (z - bs.ellipsoids[k].centroid).norm();
    if (d < best) {
      best = d;
      nearest = k;
    }
  }
  return contains(bs.ellipsoids[nearest], z) ? static_cast<int>(nearest) : kOpenLabel;
}

struct EvalReport {
  /// (K+1) x (K+1), rows = true class, columns = predicted, open last.
  std::vector<std::vector<std::int64_t>> confusion;
  std::vector<double> per_class_f1;
  /// Classes with neither support nor predictions; their F1 is reported as 0.
  std::vector<int> absent_classes;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  /// Mean recall over classes with nonzero support.
  double mean_class_recall = 0.0;
};

inline EvalReport report_from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
  const std::size_t c = confusion.size();
  EvalReport r;
  std::int64_t total = 0, correct = 0;
  std::vector<std::int64_t> support(c, 0), predicted(c, 0);
  for (std::size_t i = 0; i < c; ++i) {
    ELIDECIDE_REQUIRE(confusion[i].size() == c, ErrorKind::SizeMismatch, "confusion matrix must be square");
    for (std::size_t j = 0; j < c; ++j) {
      support[i] += confusion[i][j];
      predicted[j] += confusion[i][j];
      total += confusion[i][j];
    }
    correct += confusion[i][i];
  }
  ELIDECIDE_REQUIRE(total > 0, ErrorKind::EmptyTestSet, "no test samples");
  double f1_sum = 0.0, recall_sum = 0.0;
  std::size_t recall_classes = 0;
  for (std::size_t i = 0; i < c; ++i) {
    const auto tp = static_cast<double>(confusion[i][i]);
    const double precision = predicted[i] > 0 ? tp / static_cast<double>(predicted[i]) : 0.0;
    const double recall = support[i] > 0 ? tp / static_cast<double>(support[i]) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    if (support[i] == 0 && predicted[i] == 0) r.absent_classes.push_back(static_cast<int>(i));
    if (support[i] > 0) {
      recall_sum += recall;
      ++recall_classes;
    }
    r.per_class_f1.push_back(f1);
    f1_sum += f1;
  }
  r.macro_f1 = f1_sum / static_cast<double>(c);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  r.mean_class_recall = recall_classes ? recall_sum / static_cast<double>(recall_classes) : 0.0;
  r.confusion = std::move(confusion);
  return r;
}

/// Test labels must lie in [0, K) or be kOpenLabel.
inline EvalReport evaluate(const BoundarySet& bs, const LabeledDataset& test) {
  ELIDECIDE_REQUIRE(!test.empty(), ErrorKind::EmptyTestSet, "no test samples");
  const std::size_t k = bs.size();
  std::vector<std::vector<std::int64_t>> confusion(k + 1, std::vector<std::int64_t>(k + 1, 0));
  auto index = [&](int label) -> std::size_t {
    if (label == kOpenLabel) return k;
    ELIDECIDE_REQUIRE(label >= 0 && static_cast<std::size_t>(label) < k, ErrorKind::InvalidArgument,
                      "test label " + std::to_string(label) + " outside [0, K) and not open");
    return static_cast<std::size_t>(label);
  };
  for (const auto& s : test.samples) ++confusion[index(s.label)][index(predict(bs, s.embedding))];
  return report_from_confusion(std::move(confusion));
}

inline nlohmann::json report_to_json(const EvalReport& r, double kcr, std::uint64_t seed) {
  nlohmann::json j;
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  j["per_class_f1"] = r.per_class_f1;
  j["confusion"] = r.confusion;
  j["kcr"] = kcr;
  j["seed"] = seed;
  j["mean_class_recall"] = r.mean_class_recall;
  j["absent_classes"] = r.absent_classes;
  return j;
}

}  // namespace elidecide
