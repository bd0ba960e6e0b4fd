#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "labelaudit/error.hpp"
#include "labelaudit/theory.hpp"

using namespace labelaudit;

TEST(Thresholds, DefaultModel) {
  const Thresholds t = thresholds(FlipNoiseModel{});
  EXPECT_NEAR(t.lower, -std::log(0.7), 1e-15);
  EXPECT_NEAR(t.upper, -std::log(0.1 + 0.2 / 9.0), 1e-15);
  EXPECT_NEAR(t.lower, 0.3567, 1e-4);
  EXPECT_NEAR(t.upper, 2.1019, 1e-4);
  EXPECT_TRUE(t.valid);
}

TEST(Thresholds, NoiselessLimit) {
  FlipNoiseModel m;
  m.p_flip = 0.0;
  m.kappa = 1e-9;
  const Thresholds t = thresholds(m);
  EXPECT_LT(t.lower, 1e-8);
  EXPECT_NEAR(t.upper, -std::log(1e-9), 1e-9);
}

TEST(Thresholds, InvalidAndDomainErrors) {
  FlipNoiseModel m;
  m.num_classes = 2;
  m.kappa = 0.25;
  m.p_flip = 0.3;
  EXPECT_FALSE(m.valid());
  EXPECT_FALSE(thresholds(m).valid);
  m.p_flip = 0.8;
  EXPECT_THROW(thresholds(m), DomainError);
  m = FlipNoiseModel{};
  m.kappa = 0.0;
  EXPECT_THROW(check_model(m), InputError);
}

TEST(Thresholds, ValidityMatchesOrdering) {
  int checked = 0;
  for (int c : {2, 3, 5, 10, 100}) {
    for (int i = 0; i < 40; ++i) {
      for (int j = 1; j < 25; ++j) {
        FlipNoiseModel m;
        m.num_classes = c;
        m.p_flip = i / 40.0;
        m.kappa = j / 50.0;
        if (1.0 - m.p_flip - m.kappa <= 0.0) continue;
        const Thresholds t = thresholds(m);
        // Skip points where the two sides agree to rounding.
        if (std::abs(t.upper - t.lower) < 1e-12) continue;
        EXPECT_EQ(t.valid, t.lower < t.upper) << c << ' ' << m.p_flip << ' ' << m.kappa;
        EXPECT_EQ(t.valid, m.valid()) << c << ' ' << m.p_flip << ' ' << m.kappa;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 3000);
}

TEST(Pinsker, Examples) {
  const std::vector<double> p{0.5, 0.5};
  const PinskerResult same = pinsker_check(p, p);
  EXPECT_EQ(same.tv, 0.0);
  EXPECT_NEAR(same.kl, 0.0, 1e-15);
  EXPECT_TRUE(same.holds);

  const std::vector<double> q{0.9, 0.1};
  const PinskerResult r = pinsker_check(p, q);
  EXPECT_NEAR(r.tv, 0.4, 1e-12);
  EXPECT_NEAR(r.kl, 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(5.0), 1e-12);
  EXPECT_NEAR(r.kl, 0.5108, 1e-4);
  EXPECT_TRUE(r.holds);

  const PinskerResult inf = pinsker_check(p, std::vector<double>{1.0, 0.0});
  EXPECT_EQ(inf.kl, std::numeric_limits<double>::infinity());
  EXPECT_TRUE(inf.holds);
  EXPECT_THROW(pinsker_check(p, std::vector<double>{1.0}), InputError);
}

TEST(Pinsker, RandomSweepHolds) {
  const PinskerSweep s = pinsker_sweep(10000, 10, 3);
  EXPECT_EQ(s.pairs, 10000u);
  EXPECT_EQ(s.violations, 0u);
  EXPECT_GT(s.max_ratio, 0.0);
  EXPECT_LE(s.max_ratio, 1.0);
  const PinskerSweep two = pinsker_sweep(10000, 2, 4);
  EXPECT_EQ(two.violations, 0u);
}

TEST(Separation, ZeroBudgetIsExact) {
  FlipNoiseModel m;
  m.epsilon = 0.0;
  const SeparationResult r = separation_experiment(m, 2000, 1);
  ASSERT_TRUE(r.ran) << r.diagnostic;
  EXPECT_EQ(r.mixing_weight, 0.0);
  EXPECT_EQ(r.mean_kl, 0.0);
  EXPECT_EQ(r.violation_rate_correct, 0.0);
  EXPECT_EQ(r.violation_rate_incorrect, 0.0);
  EXPECT_TRUE(r.passed());
  // Unperturbed losses -ln 0.8 and -ln(0.2/9) sit strictly inside the bands.
  EXPECT_LT(-std::log(0.8), r.bands.lower);
  EXPECT_GT(-std::log(0.2 / 9.0), r.bands.upper);
}

TEST(Separation, DefaultModelStaysUnderTheBound) {
  const SeparationResult r = separation_experiment(FlipNoiseModel{}, 20000, 5);
  ASSERT_TRUE(r.ran);
  EXPECT_NEAR(r.bound, 0.02, 1e-15);
  EXPECT_LE(r.mean_kl, 1e-4 * (1 + 1e-9));
  EXPECT_GT(r.mixing_weight, 0.0);
  EXPECT_LE(r.violation_rate_correct, r.bound);
  EXPECT_LE(r.violation_rate_incorrect, r.bound);
  EXPECT_LE(r.markov_rate, r.bound);
  EXPECT_TRUE(r.passed());
}

TEST(Separation, InvalidModelRefuses) {
  FlipNoiseModel m;
  m.num_classes = 2;
  m.kappa = 0.25;
  m.p_flip = 0.3;
  const SeparationResult r = separation_experiment(m, 100, 1);
  EXPECT_FALSE(r.ran);
  EXPECT_FALSE(r.diagnostic.empty());
  EXPECT_FALSE(r.passed());
}

TEST(Separation, DeterministicAcrossExecution) {
  const FlipNoiseModel m;
  const SeparationResult a = separation_experiment(m, 3000, 9, Execution::kParallel);
  const SeparationResult b = separation_experiment(m, 3000, 9, Execution::kSerial);
  EXPECT_EQ(a.mixing_weight, b.mixing_weight);
  EXPECT_EQ(a.mean_kl, b.mean_kl);
  EXPECT_EQ(a.violation_rate_correct, b.violation_rate_correct);
  EXPECT_EQ(a.violation_rate_incorrect, b.violation_rate_incorrect);
}

// Rates averaged over seeds must not fall as the budget grows.
TEST(Separation, RatesGrowWithBudget) {
  const std::vector<double> budgets{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::vector<double> rates;
  for (double eps : budgets) {
    FlipNoiseModel m;
    m.epsilon = eps;
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const SeparationResult r = separation_experiment(m, 4000, seed);
      ASSERT_TRUE(r.ran);
      sum += r.violation_rate_correct + r.violation_rate_incorrect;
    }
    rates.push_back(sum / 5.0);
  }
  for (std::size_t i = 1; i < rates.size(); ++i) EXPECT_GE(rates[i], rates[i - 1]) << budgets[i];
  EXPECT_GT(rates.back(), 0.0);
}

TEST(Grid, ParseAndRun) {
  const GridConfig cfg = parse_grid_config(R"({
    "seed": 2,
    "samples": 500,
    "pinsker": {"pairs": 200, "num_classes": 4},
    "points": [{"num_classes": 2, "p_flip": 0.3, "kappa": 0.25, "epsilon": 1e-4}],
    "grid": {"num_classes": [10], "p_flip": [0.1, 0.2], "kappa": [0.1], "epsilon": [1e-4]}
  })");
  EXPECT_EQ(cfg.seed, 2u);
  ASSERT_EQ(cfg.points.size(), 3u);
  EXPECT_EQ(cfg.pinsker_pairs, 200u);
  const GridReport report = run_grid(cfg);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_FALSE(report.rows[0].result.ran);
  EXPECT_TRUE(report.rows[1].result.passed());
  EXPECT_TRUE(report.all_passed());  // invalid points are reported, not failed
  const std::string json = grid_report_json(report);
  EXPECT_NE(json.find("labelaudit.theory"), std::string::npos);
  EXPECT_FALSE(grid_report_table(report).empty());
  EXPECT_THROW(parse_grid_config("{\"bogus\": 1}"), SchemaError);
  EXPECT_THROW(parse_grid_config("{"), ParseError);
}
