#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "abcsmooth/abc.hpp"
#include "abcsmooth/errors.hpp"
#include "abcsmooth/forward_pass.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/oracles.hpp"
#include "test_support.hpp"

using namespace abcsmooth;
using abcsmooth::testing::scalar_cloud;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Calibration of the benchmark model (n = 100, data seed 2024) at N = 500, stream seed 7.
constexpr double kCalibratedEpsilon = 1.0;
constexpr const char* kCalibrationLog =
    "epsilon,trial,success,first_failing_time\n"
    "8,0,1,\n8,1,1,\n8,2,1,\n4,0,1,\n4,1,1,\n4,2,1,\n2,0,1,\n2,1,1,\n2,2,1,\n"
    "1,0,1,\n1,1,1,\n1,2,1,\n0.5,0,0,78\n";

// A previous cloud with pseudo-observations and the given acceptance pattern.
ParticleCloud accepted_cloud(const std::vector<bool>& accepted) {
  std::vector<double> xs, lw;
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    xs.push_back(static_cast<double>(i));
    lw.push_back(accepted[i] ? 0.0 : kNegInf);
  }
  auto c = scalar_cloud(0, xs, lw);
  c.pseudo_obs = xs;
  return c;
}
}  // namespace

TEST(KernelWeight, IndicatorInsideBall) {
  const auto k = AbcKernel::indicator(2.0);
  EXPECT_EQ(kernel_weight(k, Vector{1.0}, Vector{0.0}), 1.0);
}

TEST(KernelWeight, IndicatorOutsideBall) {
  const auto k = AbcKernel::indicator(2.0);
  EXPECT_EQ(kernel_weight(k, Vector{3.0}, Vector{0.0}), 0.0);
}

TEST(KernelWeight, IndicatorUsesL1Norm) {
  const auto k = AbcKernel::indicator(1.0);
  EXPECT_EQ(kernel_weight(k, Vector{0.4, 0.4}, Vector{0.0, 0.0}), 1.0);
  EXPECT_EQ(kernel_weight(k, Vector{0.6, 0.6}, Vector{0.0, 0.0}), 0.0);
}

TEST(KernelWeight, GaussianAtMode) {
  const auto k = AbcKernel::gaussian(2.0);
  EXPECT_NEAR(kernel_weight(k, Vector{0.7}, Vector{0.7}), 0.19947, 1e-5);
  EXPECT_NEAR(kernel_weight(k, Vector{0.7}, Vector{0.7}), 1.0 / std::sqrt(2 * M_PI * 4.0), 1e-15);
}

TEST(KernelWeight, NormalizedIndicatorIntegratesToOne) {
  const auto k = AbcKernel::indicator(0.5, true);
  EXPECT_NEAR(kernel_weight(k, Vector{0.0}, Vector{0.1}), 1.0, 1e-15);
  const auto k2 = AbcKernel::indicator(0.5, true);
  // L1 ball in 2-d has area 2 eps^2.
  EXPECT_NEAR(kernel_weight(k2, Vector{0.0, 0.0}, Vector{0.1, 0.1}), 1.0 / (2 * 0.25), 1e-12);
}

TEST(KernelWeight, DimensionMismatch) {
  EXPECT_THROW(kernel_weight(AbcKernel::indicator(1.0), Vector{0.0}, Vector{0.0, 1.0}),
               PreconditionError);
}

TEST(AbcSmcStep, HugeToleranceGivesPriorAverage) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 10, 3);
  const auto f = AdditiveFunctional::mean_state(1);

  std::vector<double> prior;
  RandomStream prior_stream(4);
  for (int r = 0; r < 20000; ++r) {
    double s = 0.0;
    for (const auto& x : simulate(model, 10, prior_stream).states) s += x[0];
    prior.push_back(s);
  }

  std::vector<double> fos;
  for (int r = 0; r < 10; ++r) {
    RandomStream stream(100 + r);
    ForwardPassOptions opts;
    opts.variant = SmcVariant::abc;
    opts.kernel = AbcKernel::indicator(1e12);
    opts.functional = &f;
    const auto pass = run_forward_pass(model, traj.observations, 1000, opts, stream);
    for (double lw : pass.final_cloud().log_weights) EXPECT_EQ(lw, pass.final_cloud().log_weights[0]);
    EXPECT_NEAR(pass.log_z, 0.0, 1e-12);
    fos.push_back((*pass.fos_value)[0]);
  }
  const double se = std::hypot(abcsmooth::testing::standard_error(prior), abcsmooth::testing::standard_error(fos));
  EXPECT_NEAR(abcsmooth::testing::sample_mean(fos), abcsmooth::testing::sample_mean(prior), 3.0 * se);
}

TEST(AbcSmcStep, StoresPseudoObservationsAndPotentials) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto kernel = AbcKernel::indicator(2.0);
  RandomStream stream(5);
  const Vector y0{0.2}, y1{1.0};
  const auto c0 = abc_smc_init(model, y0, 200, kernel, stream);
  const auto c1 = abc_smc_step(c0, model, y1, kernel, ResamplePolicy::ess_below(0.5), stream);
  ASSERT_TRUE(c1.has_pseudo_obs());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    EXPECT_EQ(c1.log_potentials[i], kernel.log_weight(c1.pseudo_observation(i), y1));
  }
}

TEST(AbcSmcStep, BenchmarkRunIsReproducible) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 50, 8);
  const auto f = AdditiveFunctional::time_averaged_mean_state(1, 50);
  ForwardPassOptions opts;
  opts.variant = SmcVariant::abc;
  opts.kernel = AbcKernel::indicator(1.0);
  opts.functional = &f;
  RandomStream a(9), b(9);
  const auto ra = run_forward_pass(model, traj.observations, 1000, opts, a);
  const auto rb = run_forward_pass(model, traj.observations, 1000, opts, b);
  ASSERT_TRUE(std::isfinite((*ra.fos_value)[0]));
  EXPECT_EQ(*ra.fos_value, *rb.fos_value);
  EXPECT_EQ(ra.log_z, rb.log_z);
}

TEST(AbcSmcStep, GaussianKernelTargetsInflatedLinearGaussian) {
  const LinearGaussianParams p{};
  const auto model = std::make_shared<LinearGaussianModel>(1, p);
  const auto traj = simulate(*model, 5, 12);
  const auto kernel = AbcKernel::gaussian(0.7);
  const auto k = kalman_rts(inflate_observation_noise(p, kernel), traj.observations);
  double exact = 0.0;
  for (const auto& m : k.smoothed_means) exact += m[0];

  const auto f = AdditiveFunctional::mean_state(1);
  std::vector<double> est, logz;
  for (int r = 0; r < 8; ++r) {
    RandomStream stream(200 + r);
    ForwardPassOptions opts;
    opts.variant = SmcVariant::abc;
    opts.kernel = kernel;
    opts.functional = &f;
    const auto pass = run_forward_pass(*model, traj.observations, 5000, opts, stream);
    est.push_back((*pass.fos_value)[0]);
    logz.push_back(pass.log_z);
  }
  EXPECT_NEAR(abcsmooth::testing::sample_mean(est), exact, 3.0 * abcsmooth::testing::standard_error(est));
  // A normalized Gaussian kernel makes the ABC evidence the inflated-model likelihood.
  EXPECT_NEAR(abcsmooth::testing::sample_mean(logz), k.log_likelihood, 0.05);
}

TEST(RsmcStep, AllAcceptedKeepsOwnParents) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  RandomStream stream(1);
  const auto prev = accepted_cloud({true, true, true, true});
  const auto next = rsmc_step(prev, model, Vector{0.0}, AbcKernel::indicator(1e12), stream);
  EXPECT_EQ(next.ancestors, (std::vector<std::size_t>{0, 1, 2, 3}));
  for (double lw : next.log_weights) EXPECT_NEAR(lw, -std::log(4.0), 1e-15);
}

TEST(RsmcStep, SingleAcceptedParticleParentsEveryone) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  RandomStream stream(2);
  const auto prev = accepted_cloud({false, false, true, false, false});
  const auto next = rsmc_step(prev, model, Vector{0.0}, AbcKernel::indicator(1e12), stream);
  for (auto a : next.ancestors) EXPECT_EQ(a, 2u);
}

TEST(RsmcStep, RejectedParentIsUniformOverAccepted) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  RandomStream stream(3);
  const auto prev = accepted_cloud({true, false, true});
  constexpr int reps = 100000;
  int first = 0;
  for (int r = 0; r < reps; ++r) {
    const auto next = rsmc_step(prev, model, Vector{0.0}, AbcKernel::indicator(1e12), stream);
    ASSERT_EQ(next.ancestors[0], 0u);
    ASSERT_EQ(next.ancestors[2], 2u);
    ASSERT_TRUE(next.ancestors[1] == 0u || next.ancestors[1] == 2u);
    first += next.ancestors[1] == 0u;
  }
  EXPECT_NEAR(static_cast<double>(first) / reps, 0.5, 4.0 * std::sqrt(0.25 / reps));
}

TEST(RsmcStep, ParentsAlwaysAccepted) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 30, 14);
  const auto kernel = AbcKernel::indicator(4.0);
  RandomStream stream(15);
  auto cloud = abc_smc_init(model, traj.observations[0], 300, kernel, stream);
  for (std::size_t t = 1; t <= 30; ++t) {
    auto next = rsmc_step(cloud, model, traj.observations[t], kernel, stream);
    for (auto a : next.ancestors) {
      EXPECT_LT(std::abs(cloud.pseudo_observation(a)[0] - traj.observations[t - 1][0]), 4.0);
    }
    cloud = std::move(next);
  }
}

TEST(RsmcStep, NoAcceptedParticleIsDegenerate) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  RandomStream stream(4);
  auto prev = accepted_cloud({false, false});
  prev.time = 6;
  try {
    static_cast<void>(rsmc_step(prev, model, Vector{0.0}, AbcKernel::indicator(1.0), stream));
    FAIL();
  } catch (const DegenerateWeightsError& e) {
    EXPECT_EQ(e.time(), 6u);
  }
}

TEST(RsmcStep, RequiresIndicatorKernel) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  RandomStream stream(4);
  EXPECT_THROW(rsmc_step(accepted_cloud({true}), model, Vector{0.0}, AbcKernel::gaussian(1.0), stream),
               PreconditionError);
}

TEST(CalibrateEpsilon, SingleCandidate) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 20, 5);
  EpsilonCalibration cal;
  cal.grid = {1e6};
  RandomStream stream(1);
  const auto res = calibrate_epsilon(model, traj.observations, 100, cal, stream);
  EXPECT_EQ(res.epsilon, 1e6);
  EXPECT_EQ(res.log.size(), 3u);
}

TEST(CalibrateEpsilon, LargeToleranceNeverDegenerates) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 20, 5);
  double spread = 0.0;
  for (const auto& y : traj.observations) spread = std::max(spread, std::abs(y[0]));
  EpsilonCalibration cal;
  cal.grid = {1e4 * spread, 1.0, 0.5, 1e-8};
  RandomStream stream(1);
  const auto res = calibrate_epsilon(model, traj.observations, 100, cal, stream);
  EXPECT_LE(res.epsilon, 1e4 * spread);
  EXPECT_GT(res.epsilon, 1e-8);
  EXPECT_TRUE(res.log.front().success);
  EXPECT_FALSE(res.log.back().success);
  EXPECT_TRUE(res.log.back().failed_time.has_value());
}

TEST(CalibrateEpsilon, BenchmarkFixture) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 100, 2024);
  EpsilonCalibration cal;
  cal.grid = EpsilonCalibration::powers_of_two(3, -4);
  RandomStream stream(7);
  const auto res = calibrate_epsilon(model, traj.observations, 500, cal, stream);
  std::ostringstream log;
  write_calibration_log(log, res.log);
  EXPECT_EQ(res.epsilon, kCalibratedEpsilon) << log.str();
  EXPECT_EQ(log.str(), kCalibrationLog);
}

TEST(CalibrateEpsilon, FailureWhenLargestDegenerates) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 20, 5);
  EpsilonCalibration cal;
  cal.grid = {1e-9};
  RandomStream stream(1);
  EXPECT_THROW(calibrate_epsilon(model, traj.observations, 100, cal, stream), CalibrationError);
}

TEST(CalibrateEpsilon, RejectsUnsortedGrid) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto traj = simulate(model, 5, 5);
  EpsilonCalibration cal;
  cal.grid = {1.0, 2.0};
  RandomStream stream(1);
  EXPECT_THROW(calibrate_epsilon(model, traj.observations, 10, cal, stream), PreconditionError);
}

TEST(AuxiliaryModel, GaussianKernelInflatesVariance) {
  const auto base = std::make_shared<LinearGaussianModel>(1, LinearGaussianParams{});
  const auto aux = make_auxiliary_model(base, AbcKernel::gaussian(0.5));
  const Vector x{0.3}, y{1.1};
  EXPECT_NEAR(aux->log_observation_density(x, y, 2), log_normal_density(1.1, 0.3, 1.25), 1e-12);
  EXPECT_EQ(inflate_observation_noise(LinearGaussianParams{}, AbcKernel::gaussian(0.5)).r, 1.25);
}

TEST(AuxiliaryModel, IndicatorKernelIsNormalProbabilityOfBall) {
  const auto base = std::make_shared<NonlinearGrowthModel>(1, 10.0, 1.0);
  const auto aux = make_auxiliary_model(base, AbcKernel::indicator(0.5));
  const Vector x{2.0}, y{0.4};
  const double h = 0.2;  // x^2 / 20
  const double expected = 0.5 * (std::erfc(-(0.4 - h + 0.5) / std::sqrt(2.0)) -
                                 std::erfc(-(0.4 - h - 0.5) / std::sqrt(2.0)));
  EXPECT_NEAR(std::exp(aux->log_observation_density(x, y, 1)), expected, 1e-14);
}

TEST(AuxiliaryModel, SamplerMatchesDensity) {
  const auto base = std::make_shared<LinearGaussianModel>(1, LinearGaussianParams{});
  const auto aux = make_auxiliary_model(base, AbcKernel::indicator(1.0));
  RandomStream stream(3);
  const Vector x{0.0};
  Vector y(1);
  constexpr int draws = 200000;
  int inside = 0;
  for (int i = 0; i < draws; ++i) {
    aux->sample_observation(x, 1, stream, y);
    inside += std::abs(y[0]) < 0.5;
  }
  // P(|Y| < 0.5) where Y = U + uniform(-1, 1) noise: integrate the density numerically.
  double p = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector yy{-0.5 + (k + 0.5) / 1000.0};
    p += std::exp(aux->log_observation_density(x, yy, 1)) / 1000.0 / 2.0;
  }
  EXPECT_NEAR(static_cast<double>(inside) / draws, p, 4.0 * std::sqrt(p * (1 - p) / draws));
}
