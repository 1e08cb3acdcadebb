#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "abcsmooth/errors.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/pmmh.hpp"
#include "test_support.hpp"

using namespace abcsmooth;
namespace tst = abcsmooth::testing;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Benchmark model, n = 50 (data seed 11), N = 200, stream seed 12, theta = (10, 1).
constexpr double kInitLogZ = -0x1.01148b4598111p+7;
constexpr double kInitFos = -0x1.3ecb3ea27ceabp+2;

ThetaVector theta2(double a, double b) { return ThetaVector({"sigma_x2", "sigma_y2"}, {a, b}); }

ModelFamily benchmark_family() {
  return [](const ThetaVector& t) -> std::shared_ptr<const HmmModel> {
    return std::make_shared<NonlinearGrowthModel>(1, t[0], t[1]);
  };
}

// theta = (q, r); `extra_r` is added to the observation variance.
ModelFamily lg_family(double extra_r = 0.0) {
  return [extra_r](const ThetaVector& t) -> std::shared_ptr<const HmmModel> {
    LinearGaussianParams p;
    p.q = t[0];
    p.r = t[1] + extra_r;
    return std::make_shared<LinearGaussianModel>(1, p);
  };
}

ModelFamily constant_family() {
  return [](const ThetaVector&) -> std::shared_ptr<const HmmModel> {
    return std::make_shared<tst::ConstantLikelihoodModel>(0.0);
  };
}

PmmhOptions options(std::size_t n, bool fos, std::size_t horizon) {
  PmmhOptions o;
  o.n_particles = n;
  o.use_fos = fos;
  o.functional = std::make_shared<AdditiveFunctional>(
      AdditiveFunctional::time_averaged_mean_state(1, horizon));
  return o;
}

PmmhChainState with_fos(double v) {
  PmmhChainState s;
  s.theta = theta2(1.0, 1.0);
  s.fos_value = Vector{v};
  s.path_value = Vector{-v};
  return s;
}

// Batch-means standard error of a chain average.
double batch_se(const std::vector<double>& x, std::size_t batches) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += x[i];
    means.push_back(s / static_cast<double>(len));
  }
  return tst::standard_error(means);
}

}  // namespace

TEST(AcceptanceRatio, EqualLikelihoodsUnderFlatPrior) {
  const auto prior = PriorSpec::flat(2);
  const ProposalSpec prop{{0.1, 0.1}, false};
  EXPECT_EQ(acceptance_ratio(-3.0, -3.0, theta2(1, 2), theta2(2, 1), prior, prop), 1.0);
}

TEST(AcceptanceRatio, BetterProposalIsCapped) {
  const auto prior = PriorSpec::flat(2);
  const ProposalSpec prop{{0.1, 0.1}, false};
  EXPECT_EQ(acceptance_ratio(0.0, -5.0, theta2(1, 2), theta2(2, 1), prior, prop), 1.0);
}

TEST(AcceptanceRatio, HalfTheLikelihood) {
  const auto prior = PriorSpec::flat(2);
  const ProposalSpec prop{{0.1, 0.1}, false};
  EXPECT_NEAR(acceptance_ratio(-1.0 - std::log(2.0), -1.0, theta2(1, 2), theta2(2, 1), prior, prop),
              0.5, 1e-15);
}

TEST(AcceptanceRatio, DeadProposalIsRejected) {
  const auto prior = PriorSpec::flat(2);
  const ProposalSpec prop{{0.1, 0.1}, true};
  EXPECT_EQ(acceptance_ratio(kNegInf, -1.0, theta2(1, 2), theta2(2, 1), prior, prop), 0.0);
  EXPECT_EQ(acceptance_ratio(-1.0, -1.0, theta2(-1, 2), theta2(2, 1), prior, prop), 0.0);
}

TEST(AcceptanceRatio, NonFiniteCurrentThrows) {
  const auto prior = PriorSpec::flat(2);
  const ProposalSpec prop{{0.1, 0.1}, true};
  EXPECT_THROW(acceptance_ratio(-1.0, kNegInf, theta2(1, 2), theta2(2, 1), prior, prop),
               PreconditionError);
  EXPECT_THROW(acceptance_ratio(-1.0, std::nan(""), theta2(1, 2), theta2(2, 1), prior, prop),
               PreconditionError);
}

TEST(AcceptanceRatio, MatchesClosedFormWithJacobian) {
  const auto prior = PriorSpec::inverse_gamma(2, 2.0, 2.0);
  const ProposalSpec prop{{0.2, 0.2}, true};
  const auto ig = [](double x) { return 2.0 * std::log(2.0) - 3.0 * std::log(x) - 2.0 / x; };
  RandomStream stream(9);
  for (int k = 0; k < 200; ++k) {
    const auto cur = theta2(0.5 + 10 * stream.uniform(), 0.5 + 3 * stream.uniform());
    const auto next = theta2(0.5 + 10 * stream.uniform(), 0.5 + 3 * stream.uniform());
    const double lz_cur = -50.0 * stream.uniform(), lz_next = -50.0 * stream.uniform();
    const double log_r = lz_next - lz_cur + ig(next[0]) + ig(next[1]) - ig(cur[0]) - ig(cur[1]) +
                         std::log(next[0] * next[1] / (cur[0] * cur[1]));
    const double expected = std::exp(std::min(0.0, log_r));
    const double got = acceptance_ratio(lz_next, lz_cur, next, cur, prior, prop);
    EXPECT_LE(std::abs(got - expected), 1e-10 * std::max(expected, 1e-300));
    EXPECT_EQ(got, acceptance_ratio(lz_next, lz_cur, next, cur, prior, prop));
  }
}

TEST(ProposalSpec, LogRandomWalkStaysPositive) {
  const ProposalSpec prop{{1.0, 0.0}, true};
  RandomStream stream(1);
  auto t = theta2(1.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    t = prop.propose(t, stream);
    ASSERT_GT(t[0], 0.0);
    ASSERT_EQ(t[1], 3.0);
  }
}

TEST(PmmhInit, SingleParticleSelectsItsOnlyPath) {
  const auto model = std::make_shared<NonlinearGrowthModel>(1, 10.0, 1.0);
  const auto y = simulate(*model, 20, 3).observations;
  const PmmhSampler sampler(benchmark_family(), PriorSpec::inverse_gamma(2, 2, 2),
                            ProposalSpec{{0.2, 0.2}}, y, options(1, true, 20));
  RandomStream stream(4);
  const auto s = sampler.init(theta2(10, 1), stream);
  EXPECT_EQ(s.selected_index, 0u);
  ASSERT_EQ(s.selected_path.size(), 21u);
  double log_g = 0.0;
  for (std::size_t t = 0; t <= 20; ++t) log_g += model->log_observation_density(s.selected_path[t], y[t], t);
  EXPECT_NEAR(s.log_z, log_g, 1e-9 * std::abs(log_g));
  EXPECT_NEAR((*s.fos_value)[0], (*s.path_value)[0], 1e-12);
  EXPECT_TRUE(s.accepted);
}

TEST(PmmhInit, ConstantPotentialSelectsUniformly) {
  const std::vector<Vector> y(6, Vector{0.0});
  const PmmhSampler sampler(constant_family(), PriorSpec::flat(2), ProposalSpec{{0.1, 0.1}}, y,
                            options(4, false, 5));
  RandomStream stream(5);
  std::vector<int> counts(4, 0);
  constexpr int reps = 8000;
  for (int r = 0; r < reps; ++r) {
    const auto s = sampler.init(theta2(1, 1), stream);
    ASSERT_NEAR(s.log_z, 0.0, 1e-12);
    ++counts[s.selected_index];
  }
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(reps), 0.25, 4.0 * std::sqrt(0.1875 / reps));
}

TEST(PmmhInit, BenchmarkFixture) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 50, 11).observations;
  const PmmhSampler sampler(benchmark_family(), PriorSpec::inverse_gamma(2, 2, 2),
                            ProposalSpec{{0.2, 0.2}}, y, options(200, true, 50));
  RandomStream stream(12);
  const auto s = sampler.init(theta2(10, 1), stream);
  EXPECT_EQ(s.log_z, kInitLogZ) << std::hexfloat << s.log_z;
  EXPECT_EQ((*s.fos_value)[0], kInitFos) << std::hexfloat << (*s.fos_value)[0];
}

TEST(PmmhStep, ZeroScaleKeepsTheta) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 20, 11).observations;
  const PmmhSampler sampler(benchmark_family(), PriorSpec::inverse_gamma(2, 2, 2),
                            ProposalSpec{{0.0, 0.0}}, y, options(50, false, 20));
  RandomStream stream(13);
  for (const auto& s : sampler.run(theta2(10, 1), 200, stream)) EXPECT_EQ(s.theta, theta2(10, 1));
}

TEST(PmmhStep, FlatPriorConstantPotentialAcceptsEverything) {
  const std::vector<Vector> y(6, Vector{0.0});
  const PmmhSampler sampler(constant_family(), PriorSpec::flat(2), ProposalSpec{{0.01, 0.01}, false},
                            y, options(10, false, 5));
  RandomStream stream(14);
  const auto chain = sampler.run(theta2(10, 10), 500, stream);
  EXPECT_EQ(acceptance_rate(chain), 1.0);
}

TEST(PmmhStep, BenchmarkAcceptanceRateIsModerate) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 50, 11).observations;
  const PmmhSampler sampler(benchmark_family(), PriorSpec::inverse_gamma(2, 2, 2),
                            ProposalSpec{{0.2, 0.2}}, y, options(200, false, 50));
  RandomStream stream(15);
  const double rate = acceptance_rate(sampler.run(theta2(10, 1), 2000, stream));
  EXPECT_GT(rate, 0.05);
  EXPECT_LT(rate, 0.6);
}

TEST(PmmhStep, RejectionLeavesStateUntouched) {
  const NonlinearGrowthModel model(1, 10.0, 1.0);
  const auto y = simulate(model, 30, 11).observations;
  const PmmhSampler sampler(benchmark_family(), PriorSpec::inverse_gamma(2, 2, 2),
                            ProposalSpec{{0.5, 0.5}}, y, options(100, true, 30));
  RandomStream stream(16);
  const auto chain = sampler.run(theta2(10, 1), 300, stream);
  std::size_t rejected = 0;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    if (chain[i].accepted) continue;
    ++rejected;
    EXPECT_EQ(chain[i].theta, chain[i - 1].theta);
    EXPECT_EQ(chain[i].log_z, chain[i - 1].log_z);
    EXPECT_EQ(chain[i].selected_index, chain[i - 1].selected_index);
    EXPECT_EQ(chain[i].selected_path, chain[i - 1].selected_path);
    EXPECT_EQ(chain[i].fos_value, chain[i - 1].fos_value);
    EXPECT_EQ(chain[i].path_value, chain[i - 1].path_value);
  }
  EXPECT_GT(rejected, 0u);
}

TEST(PmmhStep, InvalidProposalModelIsRejected) {
  const std::vector<Vector> y(3, Vector{0.0});
  const ModelFamily family = [](const ThetaVector& t) -> std::shared_ptr<const HmmModel> {
    if (t[0] > 1.0) throw InvalidModelError("out of range");
    return std::make_shared<tst::ConstantLikelihoodModel>(0.0);
  };
  const PmmhSampler sampler(family, PriorSpec::flat(2), ProposalSpec{{0.0, 0.0}, false}, y,
                            options(5, false, 2));
  RandomStream stream(1);
  auto s = sampler.init(theta2(0.5, 1), stream);
  s.theta = theta2(2.0, 1);
  const auto next = sampler.step(s, stream);
  EXPECT_FALSE(next.accepted);
  EXPECT_EQ(next.theta, s.theta);
}

TEST(PmmhEstimates, AverageAfterBurnIn) {
  const std::vector<PmmhChainState> chain{with_fos(1), with_fos(2), with_fos(3), with_fos(4)};
  EXPECT_DOUBLE_EQ(pmmh_fos_estimate(chain, 1)[0], 3.0);
  EXPECT_DOUBLE_EQ(pmmh_fos_estimate(chain, 0)[0], 2.5);
  EXPECT_DOUBLE_EQ(pmmh_path_estimate(chain, 2)[0], -3.5);
  EXPECT_DOUBLE_EQ(pmmh_theta_mean(chain, 0)[1], 1.0);
}

TEST(PmmhEstimates, MissingValuesThrow) {
  std::vector<PmmhChainState> chain{with_fos(1), with_fos(2)};
  chain[1].fos_value.reset();
  EXPECT_THROW(pmmh_fos_estimate(chain, 0), PreconditionError);
  EXPECT_THROW(pmmh_fos_estimate(chain, 2), PreconditionError);
}

// With a normalized Gaussian kernel the ABC chain targets the posterior of the model whose
// observation variance is inflated by epsilon^2.
TEST(PmmhModes, AbcMatchesExactOnInflatedModel) {
  const double eps = 0.5;
  const LinearGaussianModel truth(1, {});
  const auto y = simulate(truth, 20, 21).observations;
  const auto prior = PriorSpec::inverse_gamma(2, 2, 2);
  const ProposalSpec prop{{0.3, 0.3}};

  auto abc_opts = options(200, false, 20);
  abc_opts.mode = PmmhMode::abc;
  abc_opts.kernel = AbcKernel::gaussian(eps);
  const PmmhSampler abc(lg_family(), prior, prop, y, abc_opts);
  const PmmhSampler exact(lg_family(eps * eps), prior, prop, y, options(200, false, 20));

  constexpr std::size_t iterations = 20000, burn = 2000;
  RandomStream sa(31), se(32);
  const auto ca = abc.run(ThetaVector({"q", "r"}, {1.0, 1.0}), iterations, sa);
  const auto ce = exact.run(ThetaVector({"q", "r"}, {1.0, 1.0}), iterations, se);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> xa, xe;
    for (std::size_t i = burn; i < iterations; ++i) {
      xa.push_back(ca[i].theta[k]);
      xe.push_back(ce[i].theta[k]);
    }
    const double se_diff = std::hypot(batch_se(xa, 30), batch_se(xe, 30));
    EXPECT_NEAR(tst::sample_mean(xa), tst::sample_mean(xe), 3.0 * se_diff) << "component " << k;
  }
}

TEST(WriteChain, HeaderAndRows) {
  const std::vector<PmmhChainState> chain{with_fos(1.5), with_fos(2)};
  std::ostringstream os;
  write_chain(os, chain);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "iteration,sigma_x2,sigma_y2,log_z,accepted,fos");
  std::getline(is, line);
  EXPECT_EQ(line, "0,1,1,0,0,1.5");
  std::getline(is, line);
  EXPECT_EQ(line, "1,1,1,0,0,2");
}
