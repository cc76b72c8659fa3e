#include <gtest/gtest.h>

#include <cctype>
#include <cmath>
#include <random>

#include "auxcal/baselines.hpp"
#include "auxcal/error.hpp"

using namespace auxcal;

TEST(SeqLikelihood, GeometricMean) {
  const std::vector<double> lp{std::log(0.9), std::log(0.4)};
  EXPECT_NEAR(normalized_seq_likelihood(lp), 0.6, 1e-12);
  EXPECT_DOUBLE_EQ(normalized_seq_likelihood(std::vector<double>{0.0, 0.0}), 1.0);
  EXPECT_THROW(normalized_seq_likelihood({}), PreconditionError);
  EXPECT_THROW(normalized_seq_likelihood(std::vector<double>{0.1}), PreconditionError);
}

TEST(Platt, GradientExample) {
  const std::vector<double> p{0.2, 0.8};
  const std::vector<bool> y{false, true};
  const auto g = platt_gradient({1.0, 0.0}, p, y);
  // Independent finite difference on the MSE.
  const double h = 1e-6;
  const double da = (platt_mse({1 + h, 0}, p, y) - platt_mse({1 - h, 0}, p, y)) / (2 * h);
  const double db = (platt_mse({1, h}, p, y) - platt_mse({1, -h}, p, y)) / (2 * h);
  EXPECT_NEAR(g[0], da, 1e-8);
  EXPECT_NEAR(g[1], db, 1e-8);
}

TEST(Platt, GradientSinglePoint) {
  const std::vector<double> p{0.5};
  const auto g = platt_gradient({1.0, 0.0}, p, {true});
  EXPECT_NEAR(g[1], -0.17744, 1e-5);
  EXPECT_NEAR(g[0], 0.5 * g[1], 1e-15);
}

TEST(Platt, ApplyExamples) {
  EXPECT_DOUBLE_EQ(apply_platt({1.0, 0.0}, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(apply_platt({0.0, 0.0}, 0.93), 0.5);
  EXPECT_LT(apply_platt({3.0, -1.0}, 0.2), apply_platt({3.0, -1.0}, 0.3));
  EXPECT_NEAR(apply_platt({2.0, -1.0}, 0.5), 0.5, 1e-15);
  EXPECT_NEAR(apply_platt({1.0, 0.0}, 1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Platt, NeverWorseThanStart) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(200);
    std::vector<bool> y(200);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = u(rng);
      y[i] = u(rng) < p[i] * 0.5;
    }
    const auto fit = fit_platt(p, y);
    EXPECT_LE(fit.fitted_mse, fit.initial_mse);
    EXPECT_DOUBLE_EQ(fit.fitted_mse, platt_mse(fit.params, p, y));
    EXPECT_FALSE(fit.single_class);
  }
}

TEST(Platt, SingleClassFlagged) {
  const std::vector<double> p{0.1, 0.5, 0.9};
  const auto fit = fit_platt(p, {true, true, true});
  EXPECT_TRUE(fit.single_class);
  EXPECT_LE(fit.fitted_mse, fit.initial_mse);
}

TEST(Platt, Errors) {
  EXPECT_THROW(fit_platt({}, {}), PreconditionError);
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(fit_platt(p, {true}), PreconditionError);
}

TEST(Percent, Examples) {
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("I am 95% confident"), 0.95);
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("Confidence: 100 %"), 1.0);
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("Confidence: 85%"), 0.85);
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("I am 70 % sure"), 0.70);
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("roughly 12.5%"), 0.125);
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("Answer 3 of them, I'd say 60%"), 0.60);
  EXPECT_DOUBLE_EQ(*parse_verbalized_percent("90"), 0.90);
  EXPECT_FALSE(parse_verbalized_percent("90", false));
  EXPECT_FALSE(parse_verbalized_percent("I cannot say"));
  EXPECT_FALSE(parse_verbalized_percent("150%"));
  EXPECT_FALSE(parse_verbalized_percent(""));
}

TEST(Percent, RoundTripsEveryInteger) {
  for (int k = 0; k <= 100; ++k) {
    const auto v = parse_verbalized_percent("Confidence: " + std::to_string(k) + "%");
    ASSERT_TRUE(v);
    EXPECT_NEAR(*v, k / 100.0, 1e-12);
  }
}

namespace {
std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}
std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}
}  // namespace

TEST(Qualitative, AllLevelsAllCasings) {
  for (const auto& level : kQualitativeScale) {
    const std::string e(level.expression);
    for (const auto& variant : {e, lower(e), upper(e)}) {
      const auto v = parse_verbalized_qualitative("My confidence is " + variant + ".");
      ASSERT_TRUE(v) << variant;
      EXPECT_DOUBLE_EQ(*v, level.value) << variant;
    }
  }
}

TEST(Qualitative, LongestAtSameStartAndWordBoundaries) {
  EXPECT_DOUBLE_EQ(*parse_verbalized_qualitative("very low"), 0.0);
  EXPECT_DOUBLE_EQ(*parse_verbalized_qualitative("Somewhat high, not High"), 0.65);
  EXPECT_DOUBLE_EQ(*parse_verbalized_qualitative("High. Well, maybe low"), 0.7);
  EXPECT_FALSE(parse_verbalized_qualitative("Highway mediums"));
  EXPECT_FALSE(parse_verbalized_qualitative("no opinion"));
}

TEST(SuccessRate, Counts) {
  std::vector<std::optional<double>> parses(100);
  for (std::size_t i = 0; i < 19; ++i) parses[i * 5] = 0.5;
  EXPECT_DOUBLE_EQ(success_rate(parses), 0.19);
  EXPECT_DOUBLE_EQ(success_rate(std::vector<std::optional<double>>(3)), 0.0);
  EXPECT_THROW(success_rate({}), PreconditionError);
}
