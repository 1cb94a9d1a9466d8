#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include <histsurv/diagnostics.hpp>
#include <histsurv/random.hpp>

using namespace histsurv;

namespace {

using Chains = std::vector<std::vector<double>>;

Chains iid_chains(std::size_t m, std::size_t n, std::uint64_t seed, double offset_step = 0.0) {
  Random rng(seed);
  Chains out(m, std::vector<double>(n));
  for (std::size_t c = 0; c < m; ++c)
    for (auto& v : out[c]) v = rng.normal() + offset_step * static_cast<double>(c);
  return out;
}

Chains ar1_chains(std::size_t m, std::size_t n, double phi, std::uint64_t seed) {
  Random rng(seed);
  Chains out(m, std::vector<double>(n));
  for (auto& c : out) {
    double x = rng.normal() / std::sqrt(1.0 - phi * phi);
    for (auto& v : c) v = x = phi * x + rng.normal();
  }
  return out;
}

}  // namespace

TEST(Autocovariance, MatchesDirectSum) {
  Random rng(1);
  std::vector<double> x(257);
  for (auto& v : x) v = rng.normal(3.0, 2.0);
  const auto fast = detail::autocovariance(x);
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v / n;
  for (std::size_t t : {0u, 1u, 2u, 17u, 256u}) {
    double s = 0.0;
    for (std::size_t i = 0; i + t < x.size(); ++i) s += (x[i] - mean) * (x[i + t] - mean);
    EXPECT_NEAR(fast[t], s / n, 1e-10) << "lag " << t;
  }
}

TEST(Diagnose, IidChains) {
  const auto d = diagnose(iid_chains(4, 2000, 7));
  EXPECT_GE(d.rhat, 1.0 - 1e-3);
  EXPECT_LE(d.rhat, 1.02);
  EXPECT_GT(d.ess_bulk, 6000.0);
  EXPECT_LE(d.ess_bulk, 8000.0);
  EXPECT_NEAR(d.mcse, 1.0 / std::sqrt(d.ess_mean), 0.05 / std::sqrt(8000.0));
  EXPECT_FALSE(d.degenerate);
}

TEST(Diagnose, Ar1EffectiveSampleSize) {
  const double phi = 0.9;
  const auto d = diagnose(ar1_chains(4, 20000, phi, 3));
  const double theory = 80000.0 * (1.0 - phi) / (1.0 + phi);
  EXPECT_NEAR(d.ess_mean / theory, 1.0, 0.2);
  EXPECT_LT(d.rhat, 1.02);
}

TEST(Diagnose, SeparatedChainsFlagged) {
  EXPECT_GT(diagnose(iid_chains(4, 1000, 9, 3.0)).rhat, 2.0);
  // A trend within each chain is caught by splitting.
  Chains trend(2, std::vector<double>(1000));
  for (auto& c : trend)
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.01 * static_cast<double>(i);
  EXPECT_GT(diagnose(trend).rhat, 1.5);
}

TEST(Diagnose, DegenerateInputs) {
  const Chains constant(3, std::vector<double>(200, 1.0));
  auto d = diagnose(constant);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.rhat, 1.0);
  EXPECT_EQ(d.mcse, 0.0);

  Chains stuck{std::vector<double>(200, 0.0), std::vector<double>(200, 1.0)};
  d = diagnose(stuck);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.rhat, std::numeric_limits<double>::infinity());
}

TEST(Diagnose, RejectsBadShapes) {
  EXPECT_THROW(diagnose(iid_chains(1, 500, 1)), InputError);
  EXPECT_THROW(diagnose(iid_chains(2, 99, 1)), InputError);
  Chains uneven = iid_chains(2, 200, 1);
  uneven[1].pop_back();
  EXPECT_THROW(diagnose(uneven), InputError);
}

TEST(Diagnose, EssNeverExceedsDraws) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    // Anti-correlated chains would push raw ESS above the draw count.
    Random rng(seed);
    Chains c(2, std::vector<double>(300));
    for (auto& ch : c) {
      double x = 0.0;
      for (auto& v : ch) v = x = -0.5 * x + rng.normal();
    }
    const auto d = diagnose(c);
    EXPECT_LE(d.ess_bulk, 600.0);
    EXPECT_LE(d.ess_mean, 600.0);
  }
}
