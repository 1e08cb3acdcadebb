#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "abcsmooth/errors.hpp"
#include "abcsmooth/forward_pass.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/oracles.hpp"
#include "abcsmooth/smoothing.hpp"
#include "test_support.hpp"

using namespace abcsmooth;
namespace tst = abcsmooth::testing;

namespace {

ForwardPassResult smooth(const HmmModel& model, const std::vector<Vector>& y, std::size_t n,
                         const AdditiveFunctional& f, std::uint64_t seed, bool keep_history = false) {
  RandomStream stream(seed);
  ForwardPassOptions opts;
  opts.functional = &f;
  opts.keep_history = keep_history;
  return run_forward_pass(model, y, n, opts, stream);
}

}  // namespace

TEST(FosInit, TimeAveragedMeanState) {
  const auto f = AdditiveFunctional::time_averaged_mean_state(1, 100);
  const auto cloud = tst::scalar_cloud(0, {2.0, -0.5, 10.1}, {0.0, 0.0, 0.0});
  const auto stats = fos_init(f, cloud);
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_DOUBLE_EQ(stats.value(0)[0], 2.0 / 101.0);
  EXPECT_DOUBLE_EQ(stats.value(1)[0], -0.5 / 101.0);
  EXPECT_DOUBLE_EQ(stats.value(2)[0], 0.1);
}

TEST(FosInit, RejectsLaterCloud) {
  const auto cloud = tst::scalar_cloud(3, {1.0}, {0.0});
  EXPECT_THROW(fos_init(AdditiveFunctional::mean_state(1), cloud), PreconditionError);
}

TEST(FosEstimate, WeightedAverageOfStatistics) {
  const auto cloud = tst::scalar_cloud(0, {1.0, 2.0, 3.0}, {std::log(0.2), std::log(0.3), std::log(0.5)});
  const auto stats = fos_init(AdditiveFunctional::mean_state(1), cloud);
  EXPECT_NEAR(fos_estimate(stats, cloud)[0], 2.3, 1e-14);
}

TEST(FosEstimate, UnnormalizedWeightsAreNormalized) {
  const auto cloud = tst::scalar_cloud(0, {4.0, 8.0}, {5.0, 5.0});
  const auto stats = fos_init(AdditiveFunctional::mean_state(1), cloud);
  EXPECT_NEAR(fos_estimate(stats, cloud)[0], 6.0, 1e-14);
}

TEST(FosEstimate, SizeMismatchThrows) {
  const auto cloud = tst::scalar_cloud(0, {4.0, 8.0}, {0.0, 0.0});
  const auto other = tst::scalar_cloud(0, {4.0}, {0.0});
  const auto stats = fos_init(AdditiveFunctional::mean_state(1), cloud);
  EXPECT_THROW(static_cast<void>(fos_estimate(stats, other)), PreconditionError);
}

// Two previous particles with equal weight and transition densities 1 and 3 into the new one:
// V_1 = (0.5 * 1 * (0.4 + 0.28) + 0.5 * 3 * (-1.1 - 0.77)) / (0.5 * 1 + 0.5 * 3).
TEST(FosUpdate, TwoParticleHandCase) {
  const tst::TabulatedTransitionModel model([](double prev, double) {
    return prev > 0.0 ? std::log(1.0) : std::log(3.0);
  });
  const auto f = AdditiveFunctional::pairwise(
      1, [](std::size_t, std::span<const double> x, std::span<double> out) { out[0] = x[0]; },
      [](std::size_t, std::span<const double> prev, std::span<const double> x, std::span<double> out) {
        out[0] = prev[0] * x[0];
      });
  const auto prev = tst::scalar_cloud(0, {0.4, -1.1}, {0.0, 0.0});
  const auto next = tst::scalar_cloud(1, {0.7}, {0.0});
  const auto stats = fos_update(fos_init(f, prev), prev, next, model, f);
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_NEAR(stats.value(0)[0], -1.2325, 1e-14);
}

TEST(FosUpdate, UsesWeightsBeforeResampling) {
  const tst::TabulatedTransitionModel model([](double, double) { return 0.0; });
  const auto f = AdditiveFunctional::mean_state(1);
  const auto prev = tst::scalar_cloud(0, {1.0, 5.0}, {std::log(0.75), std::log(0.25)});
  auto next = tst::scalar_cloud(1, {0.0}, {0.0});
  next.ancestors = {1};
  next.resampled = true;
  const auto stats = fos_update(fos_init(f, prev), prev, next, model, f);
  EXPECT_NEAR(stats.value(0)[0], 0.75 * 1.0 + 0.25 * 5.0, 1e-14);
}

TEST(FosUpdate, ConvexCombinationOfPredecessors) {
  const LinearGaussianModel model(1, {});
  const auto f = AdditiveFunctional::lag_product(1);
  RandomStream stream(41);
  const auto y = simulate(model, 1, 42).observations;
  const auto c0 = smc_init(model, y[0], 50, stream);
  const auto c1 = smc_step(c0, model, y[1], ResamplePolicy::every_step(), stream);
  const auto s0 = fos_init(f, c0);
  const auto s1 = fos_update(s0, c0, c1, model, f);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t j = 0; j < c0.size(); ++j) {
      const double v = s0.value(j)[0] + c0.particle(j)[0] * c1.particle(i)[0];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_GE(s1.value(i)[0], lo - 1e-12);
    EXPECT_LE(s1.value(i)[0], hi + 1e-12);
  }
}

TEST(FosUpdate, VanishingBackwardKernelThrows) {
  const tst::TabulatedTransitionModel model(
      [](double, double) { return -std::numeric_limits<double>::infinity(); });
  const auto f = AdditiveFunctional::mean_state(1);
  const auto prev = tst::scalar_cloud(0, {0.0, 1.0}, {0.0, 0.0});
  const auto next = tst::scalar_cloud(1, {0.5, 0.2}, {0.0, 0.0});
  try {
    static_cast<void>(fos_update(fos_init(f, prev), prev, next, model, f));
    FAIL();
  } catch (const DegenerateBackwardKernelError& e) {
    EXPECT_EQ(e.time(), 1u);
    EXPECT_EQ(e.particle(), 0u);
  }
}

TEST(FosUpdate, NonConsecutiveTimesThrow) {
  const LinearGaussianModel model(1, {});
  const auto f = AdditiveFunctional::mean_state(1);
  const auto prev = tst::scalar_cloud(0, {0.0}, {0.0});
  const auto next = tst::scalar_cloud(2, {0.5}, {0.0});
  EXPECT_THROW(fos_update(fos_init(f, prev), prev, next, model, f), PreconditionError);
}

// One particle has a single trajectory, so the smoother is the functional on it.
TEST(ForwardOnlySmoothing, SingleParticleIsPathFunctional) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 30, 5).observations;
  const auto f = AdditiveFunctional::lag_product(1);
  const auto pass = smooth(model, y, 1, f, 6, true);
  const auto path = ancestral_path(pass.history, 0);
  EXPECT_NEAR((*pass.fos_value)[0], f.on_path(path)[0], 1e-9 * (1.0 + std::abs(f.on_path(path)[0])));
}

TEST(ForwardOnlySmoothing, ConstantFunctionalCountsTerms) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 40, 5).observations;
  const auto pass = smooth(model, y, 100, AdditiveFunctional::constant(1.0), 7);
  EXPECT_NEAR((*pass.fos_value)[0], 41.0, 1e-10);
}

TEST(ForwardOnlySmoothing, BoundedTermsGiveBoundedStatistics) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 25, 9).observations;
  const auto f = AdditiveFunctional::unary(
      1, [](std::size_t, std::span<const double> x, std::span<double> out) {
        out[0] = std::clamp(x[0], -1.0, 1.0);
      });
  RandomStream stream(10);
  auto cloud = smc_init(model, y[0], 200, stream);
  auto stats = fos_init(f, cloud);
  for (std::size_t t = 1; t < y.size(); ++t) {
    auto next = smc_step(cloud, model, y[t], ResamplePolicy::ess_below(0.5), stream);
    stats = fos_update(stats, cloud, next, model, f);
    cloud = std::move(next);
    for (double v : stats.values) EXPECT_LE(std::abs(v), static_cast<double>(t + 1) + 1e-12);
  }
}

TEST(ForwardOnlySmoothing, LinearGaussianAgreesWithKalman) {
  const LinearGaussianParams p{0.8, 1.0, 1.0, 0.5, 0.0, 1.0};
  const LinearGaussianModel model(1, p);
  const auto y = simulate(model, 10, 31).observations;
  const auto k = kalman_rts(p, y);
  double exact = 0.0;
  for (const auto& m : k.smoothed_means) exact += m[0];

  std::vector<double> est;
  for (int r = 0; r < 10; ++r) {
    est.push_back((*smooth(model, y, 2000, AdditiveFunctional::mean_state(1), 300 + r).fos_value)[0]);
  }
  EXPECT_NEAR(tst::sample_mean(est), exact, 3.0 * tst::standard_error(est));
  EXPECT_LT(tst::standard_error(est), 0.1);
}

TEST(ForwardOnlySmoothing, TimeAverageSpreadDoesNotGrow) {
  const LinearGaussianModel model(1, {});
  const auto y = simulate(model, 160, 77).observations;
  const auto f = AdditiveFunctional::mean_state(1);
  std::vector<double> early, late;
  for (int r = 0; r < 30; ++r) {
    RandomStream stream(500 + r);
    ForwardPassOptions opts;
    opts.functional = &f;
    opts.report_times = {10, 160};
    const auto pass = run_forward_pass(model, y, 200, opts, stream);
    early.push_back(pass.reported[0][0] / 11.0);
    late.push_back(pass.reported[1][0] / 161.0);
  }
  EXPECT_LT(tst::sample_sd(late), tst::sample_sd(early));
}

TEST(ForwardOnlySmoothing, ReportedValuesMatchShorterRuns) {
  const LinearGaussianModel model(1, {});
  const auto y = simulate(model, 12, 3).observations;
  const auto f = AdditiveFunctional::mean_state(1);
  RandomStream a(8);
  ForwardPassOptions opts;
  opts.functional = &f;
  opts.report_times = {4, 12};
  const auto full = run_forward_pass(model, y, 64, opts, a);
  const std::vector<Vector> prefix(y.begin(), y.begin() + 5);
  const auto short_pass = smooth(model, prefix, 64, f, 8);
  EXPECT_EQ(full.reported[0], *short_pass.fos_value);
  EXPECT_EQ(full.reported[1], *full.fos_value);
}
