#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <histsurv/random.hpp>
#include <histsurv/summary.hpp>

using namespace histsurv;

TEST(Quantile, Type7) {
  const std::vector<double> v{1, 2, 3, 4, 10};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 10.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.3), 2.2);
  EXPECT_DOUBLE_EQ(quantile(v, 0.9), 7.6);
  EXPECT_DOUBLE_EQ(quantile({5.0}, 0.25), 5.0);
  EXPECT_THROW(quantile({}, 0.5), InputError);
}

TEST(Summarize, Moments) {
  const auto s = summarize({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_NEAR(s.sd, std::sqrt(32.0 / 7.0), 1e-14);
  EXPECT_DOUBLE_EQ(s.median, 4.5);
}

TEST(SuccessProbability, NormalOracle) {
  const boost::math::normal_distribution<double> nd;
  const std::size_t n = 200000;
  std::vector<double> beta(n);
  for (std::size_t i = 0; i < n; ++i)
    beta[i] = -2.4 * 0.5 + 0.5 * boost::math::quantile(nd, (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  const auto d = success_probability(beta, 0.0, 0.975);
  EXPECT_NEAR(d.probability, boost::math::cdf(nd, 2.4), 1e-4);
  EXPECT_NEAR(d.probability, 0.9918, 1e-4);
  EXPECT_TRUE(d.success);
  EXPECT_FALSE(success_probability(beta, 0.0, 0.995).success);
}

TEST(SuccessProbability, StrictInequalities) {
  const std::vector<double> b{-1.0, -1.0, -1.0, 0.0};
  EXPECT_DOUBLE_EQ(success_probability(b).probability, 0.75);
  const std::vector<double> all(40, -1.0);
  EXPECT_TRUE(success_probability(all, 0.0, 0.975).success);
  EXPECT_FALSE(success_probability(all, 0.0, 1.0).success);
}

namespace {

PosteriorSample two_interval_sample(const std::vector<double>& tau) {
  PosteriorSample p;
  p.names = {"mu_ex[1]", "mu_ex[2]", "tau_study[1]", "tau_study[2]", "theta[1,1]", "theta[1,2]"};
  Table<double> c(50, p.names.size());
  for (std::size_t i = 0; i < 50; ++i) {
    c(i, 0) = -1.0 + 0.01 * static_cast<double>(i);
    c(i, 1) = -2.0;
    c(i, 2) = tau[0];
    c(i, 3) = tau[1];
    c(i, 4) = c(i, 0);
    c(i, 5) = 0.5;
  }
  p.chains = {c, c};
  return p;
}

}  // namespace

TEST(MapPriorDraws, ZeroHeterogeneityGivesMu) {
  const auto post = two_interval_sample({0.0, 0.0});
  const auto star = map_prior_draws(post, 2, 1);
  ASSERT_EQ(star.rows(), 100u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_DOUBLE_EQ(star(i, 0), -1.0 + 0.01 * static_cast<double>(i % 50));
    EXPECT_DOUBLE_EQ(star(i, 1), -2.0);
  }
}

TEST(MapPriorDraws, HeterogeneitySpread) {
  auto post = two_interval_sample({0.0, 0.7});
  for (auto& c : post.chains) c = Table<double>(20000, 6, 0.0);
  for (auto& c : post.chains)
    for (std::size_t i = 0; i < c.rows(); ++i) c(i, 3) = 0.7;
  const auto star = map_prior_draws(post, 2, 5);
  std::vector<double> col(star.rows());
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = star(i, 1);
  const auto s = summarize(col);
  EXPECT_NEAR(s.mean, 0.0, 4.0 * 0.7 / std::sqrt(40000.0));
  EXPECT_NEAR(s.sd, 0.7, 0.01);
}

TEST(SurvivalSummary, PerDrawAndComposed) {
  const IntervalGrid g({0.0, 1.0, 2.0});
  // Draw i: log-hazards (a_i, b_i) with independent-looking spreads.
  const std::size_t n = 41;
  Table<double> theta(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    theta(i, 0) = std::log(0.2 + 0.01 * static_cast<double>(i));
    theta(i, 1) = std::log(0.6 - 0.01 * static_cast<double>(i));
  }
  const std::vector<double> times{0.5, 2.0};
  const auto table = survival_summary(theta, g, times);
  // S(2) = exp(-(l1 + l2)) = exp(-0.8) for every draw.
  EXPECT_NEAR(table.at("S(2)").median, std::exp(-0.8), 1e-12);
  EXPECT_NEAR(table.at("S(2)").lower, std::exp(-0.8), 1e-12);
  EXPECT_NEAR(table.at("S(0.5)").median, std::exp(-0.5 * 0.4), 1e-12);

  const auto comp = composed_survival_summary(theta, g, times);
  const double l1_hi = quantile([&] {
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(std::exp(theta(i, 0)));
    return v;
  }(), 0.975);
  const double l2_hi = quantile([&] {
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(std::exp(theta(i, 1)));
    return v;
  }(), 0.975);
  EXPECT_NEAR(comp.at("S(2)").lower, std::exp(-(l1_hi + l2_hi)), 1e-12);
  EXPECT_LT(comp.at("S(2)").lower, table.at("S(2)").lower);
  EXPECT_DOUBLE_EQ(comp.at("S(2)").median, table.at("S(2)").median);
  EXPECT_DOUBLE_EQ(comp.at("median_survival").mean, table.at("median_survival").mean);
}

TEST(SurvivalBand, MonotoneBand) {
  const IntervalGrid g({0.0, 1.0, 3.0});
  Random rng(2);
  Table<double> theta(500, 2);
  for (double& v : theta.values()) v = rng.normal(-1.0, 0.3);
  std::vector<double> times;
  for (int i = 0; i <= 40; ++i) times.push_back(0.1 * i);
  const auto band = survival_band(theta, g, times);
  for (std::size_t t = 1; t < band.size(); ++t) {
    EXPECT_LE(band[t].median, band[t - 1].median);
    EXPECT_LE(band[t].lower, band[t].median);
    EXPECT_GE(band[t].upper, band[t].median);
  }
  EXPECT_EQ(band.front().lower, 1.0);
}
