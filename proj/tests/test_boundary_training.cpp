#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"

using namespace elidecide;
using elidecide::testing::random_vector;
using elidecide::testing::vec;

namespace {

LabeledDataset blobs(int classes, int per_class, std::size_t n, std::uint64_t seed, double spread = 0.5) {
  Rng rng(seed);
  LabeledDataset d;
  for (int k = 0; k < classes; ++k) {
    Vector mean = Vector::Zero(static_cast<Eigen::Index>(n));
    mean[k % static_cast<int>(n)] = 4.0 * (1 + k / static_cast<int>(n));
    for (int i = 0; i < per_class; ++i) {
      Vector x = mean + random_vector(n, rng, spread);
      x[0] *= 3.0;  // anisotropy
      d.add(x, k);
    }
  }
  return d;
}

template <class Fn>
ErrorKind kind_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Centroid, Examples) {
  std::vector<Vector> one{vec({2, -1})};
  EXPECT_EQ(compute_centroid(one), vec({2, -1}));
  std::vector<Vector> two{vec({1, 0}), vec({0, 1})};
  EXPECT_EQ(compute_centroid(two), vec({0.5, 0.5}));
  std::vector<Vector> three{vec({1, 2}), vec({3, 4}), vec({5, 6})};
  EXPECT_EQ(compute_centroid(three), vec({3, 4}));
  EXPECT_EQ(kind_of([] { compute_centroid(std::vector<Vector>{}); }), ErrorKind::EmptyClass);
}

TEST(Delta, Examples) {
  std::vector<Vector> a{vec({1, 0}), vec({-1, 0})};
  EXPECT_EQ(compute_delta(a, vec({0, 0})), 1.0);
  std::vector<Vector> b{vec({3, 4})};
  EXPECT_EQ(compute_delta(b, vec({0, 0})), 5.0);
  std::vector<Vector> c{vec({1, 0}), vec({0, 1}), vec({-1, 0}), vec({0, -1})};
  EXPECT_EQ(compute_delta(c, vec({0, 0})), 1.0);
  std::vector<Vector> collapsed{vec({1, 1}), vec({1, 1})};
  EXPECT_EQ(kind_of([&] { compute_delta(collapsed, vec({1, 1})); }), ErrorKind::DegenerateClass);
}

TEST(TotalLoss, HandExample) {
  BoundarySet bs;
  bs.ellipsoids.push_back(Ellipsoid::ball(0, vec({0, 0}), 1.0));
  std::vector<LabeledSample> batch{{vec({1.5, 0}), 0}};
  std::vector<Vector> neg{vec({0, 0})};
  const auto lb = total_loss(bs, batch, neg, 0.5);
  EXPECT_DOUBLE_EQ(lb.expansion_total, 0.5);
  EXPECT_DOUBLE_EQ(lb.contraction_total, 1.5);
  EXPECT_DOUBLE_EQ(lb.total, 2.0);
}

TEST(TotalLoss, FarNegativesVanish) {
  BoundarySet bs;
  bs.ellipsoids.push_back(Ellipsoid::ball(0, vec({0, 0}), 1.0));
  bs.ellipsoids.push_back(Ellipsoid::ball(1, vec({3, 0}), 1.0));
  std::vector<LabeledSample> batch{{vec({0.1, 0}), 0}, {vec({3, 0.2}), 1}};
  double prev = INFINITY;
  for (double far : {10.0, 100.0, 1000.0}) {
    std::vector<Vector> neg{vec({far, far}), vec({-far, far})};
    const auto lb = total_loss(bs, batch, neg, 0.5);
    EXPECT_EQ(lb.expansion_total, 0.0);
    EXPECT_GT(lb.contraction_total, 0.0 - 1e-300);
    EXPECT_LT(lb.total, prev);
    prev = lb.total;
  }
  EXPECT_LT(prev, 1e-300);
}

TEST(TotalLoss, NegativeAppliesToEveryClass) {
  BoundarySet bs;
  bs.ellipsoids.push_back(Ellipsoid::ball(0, vec({0, 0}), 1.0));
  bs.ellipsoids.push_back(Ellipsoid::ball(1, vec({0, 0}), 1.0));
  std::vector<LabeledSample> batch{{vec({0, 0}), 0}};
  std::vector<Vector> neg{vec({0, 0})};
  EXPECT_DOUBLE_EQ(total_loss(bs, batch, neg, 0.5).contraction_total, 3.0);
}

TEST(TotalLoss, SizeMismatch) {
  BoundarySet bs;
  bs.ellipsoids.push_back(Ellipsoid::ball(0, vec({0, 0}), 1.0));
  std::vector<LabeledSample> batch{{vec({0, 0}), 0}};
  std::vector<Vector> neg{};
  EXPECT_EQ(kind_of([&] { total_loss(bs, batch, neg, 0.5); }), ErrorKind::SizeMismatch);
}

TEST(TotalLoss, OrderInvariantAndAdditive) {
  const auto d = blobs(3, 30, 4, 1);
  const BoundarySet bs = initial_boundaries(d);
  Rng rng(2);
  std::vector<LabeledSample> batch = d.samples;
  const auto neg = synthesize_batch(d, batch.size(), MixConfig{}, rng);
  const auto by_order = total_loss(bs, batch, neg, 0.5);
  // grouped by class, negatives reversed
  std::vector<LabeledSample> grouped = batch;
  std::stable_sort(grouped.begin(), grouped.end(),
                   [](const LabeledSample& a, const LabeledSample& b) { return a.label < b.label; });
  std::vector<Vector> rev(neg.rbegin(), neg.rend());
  const auto by_class = total_loss(bs, grouped, rev, 0.5);
  EXPECT_NEAR(by_order.total, by_class.total, 1e-12);
  EXPECT_NEAR(by_order.total, by_order.expansion_total + by_order.contraction_total, 1e-9);
}

TEST(BatchObjective, GradientMatchesFiniteDifferences) {
  const auto d = blobs(3, 10, 3, 3);
  BoundarySet bs = initial_boundaries(d);
  Rng rng(4);
  for (auto& e : bs.ellipsoids) e.matrix += 0.2 * elidecide::testing::random_matrix(3, 3, rng);
  for (auto strategy : {NegativeLoss::EliDecide, NegativeLoss::Adb, NegativeLoss::Clab, NegativeLoss::AdbGen}) {
    TrainConfig cfg;
    cfg.negative_loss = strategy;
    NegativeBatch neg;
    neg.pseudo = synthesize_batch(d, d.size(), cfg.mix, rng);
    neg.partner = pair_other_class(d.samples, rng);
    if (!uses_pseudo_open(strategy)) neg.pseudo.clear();
    std::vector<Matrix> grads(bs.size(), Matrix::Zero(3, 3));
    batch_objective(bs, d.samples, neg, cfg, &grads, nullptr);
    const double h = 1e-6;
    for (std::size_t k = 0; k < bs.size(); ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          BoundarySet p = bs, m = bs;
          p.ellipsoids[k].matrix(i, j) += h;
          m.ellipsoids[k].matrix(i, j) -= h;
          const double fd = (batch_objective(p, d.samples, neg, cfg, nullptr, nullptr).total -
                             batch_objective(m, d.samples, neg, cfg, nullptr, nullptr).total) /
                            (2 * h);
          ASSERT_NEAR(grads[k](i, j), fd, 1e-5 * (1 + std::abs(fd))) << to_string(strategy);
        }
  }
}

TEST(BatchObjective, NearestClassFlagRestrictsNegatives) {
  BoundarySet bs;
  bs.ellipsoids.push_back(Ellipsoid::ball(0, vec({0, 0}), 1.0));
  bs.ellipsoids.push_back(Ellipsoid::ball(1, vec({3, 0}), 1.0));
  TrainConfig cfg;
  NegativeBatch neg;
  neg.pseudo = {vec({0.5, 0})};
  std::vector<LabeledSample> none;
  const double all = batch_objective(bs, none, neg, cfg, nullptr, nullptr).contraction_total;
  cfg.nearest_class_negatives = true;
  const double nearest = batch_objective(bs, none, neg, cfg, nullptr, nullptr).contraction_total;
  EXPECT_DOUBLE_EQ(nearest, 1.0);
  EXPECT_DOUBLE_EQ(all, 1.0 + 0.5 * std::exp(1.0 - 2.5));
}

TEST(BatchObjective, ClabCountsUnpairedAnchors) {
  const auto d = blobs(1, 5, 2, 5);
  const BoundarySet bs = initial_boundaries(d);
  TrainConfig cfg;
  cfg.negative_loss = NegativeLoss::Clab;
  Rng rng(6);
  NegativeBatch neg;
  neg.partner = pair_other_class(d.samples, rng);
  for (auto p : neg.partner) EXPECT_EQ(p, -1);
  BatchStats stats;
  batch_objective(bs, d.samples, neg, cfg, nullptr, &stats);
  EXPECT_EQ(stats.clab_unpaired, 5u);
}

TEST(PairOtherClass, PartnersHaveDifferentLabels) {
  const auto d = blobs(3, 8, 2, 7);
  Rng rng(8);
  const auto partner = pair_other_class(d.samples, rng);
  for (std::size_t i = 0; i < partner.size(); ++i) {
    ASSERT_GE(partner[i], 0);
    ASSERT_NE(d.samples[static_cast<std::size_t>(partner[i])].label, d.samples[i].label);
  }
}

TEST(Train, ZeroEpochsGivesIdentityBalls) {
  const auto d = blobs(3, 20, 4, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = train_boundaries(d, LabeledDataset{}, cfg);
  ASSERT_EQ(res.boundaries.size(), 3u);
  EXPECT_TRUE(res.log.empty());
  for (int k = 0; k < 3; ++k) {
    const auto& e = res.boundaries.ellipsoids[k];
    EXPECT_EQ(e.matrix, Matrix::Identity(4, 4));
    const auto members = d.class_members(k);
    EXPECT_TRUE(e.centroid.isApprox(compute_centroid(members), 1e-14));
    EXPECT_NEAR(e.scale, compute_delta(members, e.centroid), 1e-13);
  }
}

TEST(Train, BallEquivalenceOfExpansionAtInit) {
  const auto d = blobs(3, 20, 4, 10);
  const auto bs = initial_boundaries(d);
  for (const auto& s : d.samples) {
    const auto& e = bs.ellipsoids[s.label];
    ASSERT_DOUBLE_EQ(expansion_loss(e, s.embedding), std::max((s.embedding - e.centroid).norm() - e.scale, 0.0));
  }
}

TEST(Train, DeterministicAndOrderInvariant) {
  const auto train = blobs(3, 40, 4, 11);
  const auto val = blobs(3, 10, 4, 12);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 3;
  const auto a = train_boundaries(train, val, cfg);
  const auto b = train_boundaries(train, val, cfg);
  LabeledDataset shuffled = train;
  Rng rng(13);
  rng.shuffle(shuffled.samples);
  const auto c = train_boundaries(shuffled, val, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.boundaries.ellipsoids[k].matrix, b.boundaries.ellipsoids[k].matrix);
    EXPECT_EQ(a.boundaries.ellipsoids[k].matrix, c.boundaries.ellipsoids[k].matrix);
  }
  ASSERT_EQ(a.log.size(), c.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].total, c.log[i].total);
}

TEST(Train, LogRecordsAreConsistent) {
  const auto train = blobs(3, 40, 4, 14);
  const auto val = blobs(3, 10, 4, 15);
  TrainConfig cfg;
  cfg.epochs = 8;
  const auto res = train_boundaries(train, val, cfg);
  ASSERT_FALSE(res.log.empty());
  for (std::size_t i = 0; i < res.log.size(); ++i) {
    EXPECT_EQ(res.log[i].epoch, static_cast<int>(i + 1));
    EXPECT_NEAR(res.log[i].total, res.log[i].expansion_total + res.log[i].contraction_total, 1e-9);
    EXPECT_GE(res.log[i].expansion_total, 0.0);
    EXPECT_GE(res.log[i].contraction_total, 0.0);
  }
  // returned snapshot is the best validation epoch
  if (res.best_epoch > 0) {
    double best = INFINITY;
    for (const auto& r : res.log) best = std::min(best, r.val_total);
    EXPECT_EQ(res.log[res.best_epoch - 1].val_total, best);
  }
}

TEST(Train, EarlyStoppingHonorsPatience) {
  const auto train = blobs(3, 40, 4, 16);
  const auto val = blobs(3, 10, 4, 17);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.patience = 2;
  cfg.boundary_lr = 0.5;  // overshoots quickly
  const auto res = train_boundaries(train, val, cfg);
  EXPECT_LT(res.log.size(), 100u);
  EXPECT_LE(static_cast<int>(res.log.size()) - res.best_epoch, 2);
}

TEST(Train, ReducesTrainingObjective) {
  const auto train = blobs(3, 60, 4, 18);
  TrainConfig cfg;
  cfg.epochs = 20;
  const auto res = train_boundaries(train, LabeledDataset{}, cfg);
  ASSERT_EQ(res.log.size(), 20u);
  EXPECT_LT(res.log.back().expansion_total, res.log.front().expansion_total);
}

TEST(Train, AllStrategiesRun) {
  const auto train = blobs(3, 30, 3, 19);
  const auto val = blobs(3, 8, 3, 20);
  for (auto s : {NegativeLoss::EliDecide, NegativeLoss::Adb, NegativeLoss::Clab, NegativeLoss::AdbGen}) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.negative_loss = s;
    const auto res = train_boundaries(train, val, cfg);
    EXPECT_EQ(res.boundaries.size(), 3u);
  }
}

TEST(Train, ErrorsNameTheClass) {
  LabeledDataset d;
  d.add(vec({0, 0}), 0);
  d.add(vec({1, 0}), 0);
  d.add(vec({5, 5}), 1);
  d.add(vec({5, 5}), 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  try {
    train_boundaries(d, LabeledDataset{}, cfg, {3, 8});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateClass);
    EXPECT_NE(std::string(e.what()).find("class 8"), std::string::npos);
  }
  LabeledDataset gap;
  gap.add(vec({0, 0}), 0);
  gap.add(vec({1, 0}), 0);
  gap.add(vec({2, 0}), 2);
  gap.add(vec({3, 0}), 2);
  try {
    train_boundaries(gap, LabeledDataset{}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyClass);
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
  }
}

TEST(Train, InsufficientClassesForMixing) {
  const auto d = blobs(2, 10, 3, 21);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_EQ(kind_of([&] { train_boundaries(d, LabeledDataset{}, cfg); }), ErrorKind::InsufficientClasses);
  cfg.mix.p = 2;
  EXPECT_NO_THROW(train_boundaries(d, LabeledDataset{}, cfg));
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.boundary_lr = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.beta = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(CompensatedSum, RecoversLostBits) {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 1000; ++i) s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1000.0);
}
