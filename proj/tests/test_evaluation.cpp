#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "labelaudit/error.hpp"
#include "labelaudit/evaluation.hpp"
#include "fixtures.hpp"
#include "reference/reference.hpp"

using namespace labelaudit;

namespace {

Proposal proposal(std::int64_t image, Box box, double key, int cls = 1) {
  Proposal p;
  p.image_id = ImageId{image};
  p.box = box;
  p.key = key;
  p.predicted_class = cls;
  return p;
}

ErrorRecord error_at(ErrorKind kind, std::int64_t image, Box box, int cls = 1) {
  ErrorRecord r;
  r.kind = kind;
  r.original_label = BoxLabel{LabelId{0}, ImageId{image}, box, cls};
  if (kind != ErrorKind::kDrop) r.noisy_label = r.original_label;
  r.anchor_image_id = ImageId{image};
  r.anchor_box = box;
  return r;
}

struct Case {
  std::vector<Proposal> proposals;
  std::vector<ErrorRecord> errors;
};

// Errors on a few images; proposals either jitter around an error or land
// anywhere. Keys come from a small set so ties are common.
Case random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> images(1, 3);
  std::uniform_int_distribution<int> n_errors(0, 6);
  std::uniform_int_distribution<int> n_props(0, 25);
  std::uniform_int_distribution<int> key(0, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 2.0);
  Case c;
  const int ne = n_errors(rng);
  for (int i = 0; i < ne; ++i) {
    c.errors.push_back(error_at(kAllErrorKinds[i % 4], images(rng), fixtures::random_box(rng)));
  }
  const int np = n_props(rng);
  for (int i = 0; i < np; ++i) {
    Box b = fixtures::random_box(rng);
    std::int64_t image = images(rng);
    if (!c.errors.empty() && u(rng) < 0.5) {
      const auto& e = c.errors[static_cast<std::size_t>(i) % c.errors.size()];
      b = Box{e.anchor_box.cx + jitter(rng), e.anchor_box.cy + jitter(rng), e.anchor_box.w, e.anchor_box.h};
      image = raw(e.anchor_image_id);
    }
    c.proposals.push_back(proposal(image, b, key(rng) / 10.0));
  }
  return c;
}

std::vector<reference::Item> items_of(const MatchResult& m) {
  std::vector<reference::Item> items;
  for (const auto& pm : m.matches) {
    items.push_back({pm.key, pm.tp ? static_cast<int>(*pm.error_index) : -1});
  }
  return items;
}

}  // namespace

TEST(Match, ClassAgnosticAtAlpha) {
  const std::vector<ErrorRecord> errors{error_at(ErrorKind::kFlip, 1, Box{50, 50, 20, 20}, 2),
                                        error_at(ErrorKind::kDrop, 1, Box{150, 50, 20, 20}, 1)};
  const std::vector<Proposal> ps{proposal(1, Box{50, 50, 20, 20}, 0.9, 5),
                                 proposal(1, Box{52, 50, 20, 20}, 0.8),
                                 proposal(2, Box{150, 50, 20, 20}, 0.7),
                                 proposal(1, Box{164, 50, 20, 20}, 0.6)};  // IoU 6/34
  const MatchResult m = match(ps, errors, 0.3);
  ASSERT_EQ(m.matches.size(), 4u);
  EXPECT_TRUE(m.matches[0].tp);
  EXPECT_EQ(m.matches[0].type, ErrorKind::kFlip);
  EXPECT_TRUE(m.matches[1].tp);
  EXPECT_EQ(m.matches[1].error_index, 0u);
  EXPECT_FALSE(m.matches[2].tp);  // wrong image
  EXPECT_FALSE(m.matches[3].tp);
  EXPECT_EQ(m.tp_count(), 2u);
  EXPECT_EQ(m.fp_count(), 2u);
  EXPECT_EQ(m.fn_errors, (std::vector<std::size_t>{1}));
  EXPECT_EQ(match(ps, errors, 0.15).fn_errors.size(), 0u);
  EXPECT_THROW(match(ps, errors, 0.0), InputError);
  EXPECT_THROW(match(ps, errors, 1.1), InputError);
}

TEST(Auroc, HandComputed) {
  MatchResult m;
  m.total_errors = 2;
  m.matches = {{0.9, true, 0, ErrorKind::kFlip}, {0.5, false, {}, {}}, {0.5, true, 1, ErrorKind::kDrop},
               {0.1, false, {}, {}}};
  // pos {0.9, 0.5} vs neg {0.5, 0.1}: 1 + 1 + 0.5 + 1 = 3.5 of 4
  EXPECT_DOUBLE_EQ(*auroc(m), 0.875);
  m.fn_errors = {2};
  m.total_errors = 3;
  EXPECT_DOUBLE_EQ(*auroc(m), 3.5 / 6.0);
}

TEST(Auroc, UndefinedWithoutBothClasses) {
  MatchResult m;
  EXPECT_FALSE(auroc(m).has_value());
  m.matches = {{0.3, false, {}, {}}};
  EXPECT_FALSE(auroc(m).has_value());
  m.matches = {{0.3, true, 0, ErrorKind::kSpawn}};
  m.total_errors = 1;
  EXPECT_FALSE(auroc(m).has_value());
  // Only missed errors and negatives: every pair is lost.
  m.matches = {{0.3, false, {}, {}}};
  m.fn_errors = {0};
  EXPECT_DOUBLE_EQ(*auroc(m), 0.0);
}

TEST(Auroc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 400; ++trial) {
    const Case c = random_case(rng);
    const MatchResult m = match(c.proposals, c.errors, 0.3);
    std::vector<double> pos, neg;
    for (const auto& pm : m.matches) (pm.tp ? pos : neg).push_back(pm.key);
    const auto got = auroc(m);
    if (pos.empty() && m.fn_errors.empty()) {
      EXPECT_FALSE(got.has_value());
    } else if (neg.empty()) {
      EXPECT_FALSE(got.has_value());
    } else {
      ASSERT_TRUE(got.has_value());
      EXPECT_NEAR(*got, reference::pairwise_auroc(pos, neg, m.fn_errors.size()), 1e-12) << trial;
    }
  }
}

TEST(F1, MatchesEnumerationOracle) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 400; ++trial) {
    const Case c = random_case(rng);
    const MatchResult m = match(c.proposals, c.errors, 0.3);
    const auto curve = f1_curve(m);
    for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LT(curve[i - 1].threshold, curve[i].threshold);
    EXPECT_NEAR(max_f1(curve).max_f1, reference::enumerate_max_f1(items_of(m), m.total_errors), 1e-12)
        << trial;
  }
}

TEST(F1, CurvePointsAreConsistent) {
  MatchResult m;
  m.total_errors = 2;
  m.matches = {{0.9, true, 0, ErrorKind::kFlip}, {0.8, true, 0, ErrorKind::kFlip}, {0.4, false, {}, {}}};
  m.fn_errors = {1};
  const auto curve = f1_curve(m);
  ASSERT_EQ(curve.size(), 3u);
  // threshold 0.8: two proposals, both TP, one distinct error
  EXPECT_DOUBLE_EQ(curve[1].threshold, 0.8);
  EXPECT_DOUBLE_EQ(curve[1].precision, 1.0);
  EXPECT_DOUBLE_EQ(curve[1].recall, 0.5);
  EXPECT_NEAR(curve[1].f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(curve[0].fpr, 1.0);
  const F1Summary s = max_f1(curve);
  EXPECT_NEAR(s.max_f1, 2.0 / 3.0, 1e-12);
  ASSERT_TRUE(s.best_threshold.has_value());
  EXPECT_FALSE(max_f1(std::vector<CurvePoint>{}).best_threshold.has_value());
}

TEST(Metrics, TrailingFalsePositiveNeverHelps) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    Case c = random_case(rng);
    const MatchResult before = match(c.proposals, c.errors, 0.3);
    double lowest = 0.0;
    for (const auto& p : c.proposals) lowest = std::min(lowest, p.key);
    c.proposals.push_back(proposal(3, Box{5000, 5000, 10, 10}, lowest - 1.0));
    const MatchResult after = match(c.proposals, c.errors, 0.3);
    ASSERT_FALSE(after.matches.back().tp);
    EXPECT_LE(max_f1(f1_curve(after)).max_f1, max_f1(f1_curve(before)).max_f1 + 1e-12);
  }
}

// A new bottom negative is outranked by every matched positive and outranks
// every missed one, so auroc moves toward the matched share P_tp / P. It
// drops only when that share is below the current value.
TEST(Metrics, TrailingFalsePositiveAurocUpdate) {
  std::mt19937_64 rng(37);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Case c = random_case(rng);
    const MatchResult before = match(c.proposals, c.errors, 0.3);
    const auto a = auroc(before);
    if (!a) continue;
    double lowest = 0.0;
    for (const auto& p : c.proposals) lowest = std::min(lowest, p.key);
    c.proposals.push_back(proposal(3, Box{5000, 5000, 10, 10}, lowest - 1.0));
    const MatchResult after = match(c.proposals, c.errors, 0.3);
    const double pos = static_cast<double>(before.tp_count() + before.fn_errors.size());
    const double neg = static_cast<double>(before.fp_count());
    const double share = static_cast<double>(before.tp_count()) / pos;
    EXPECT_NEAR(*auroc(after), (*a * neg + share) / (neg + 1.0), 1e-12);
    if (share <= *a) EXPECT_LE(*auroc(after), *a + 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Metrics, MaxF1InvariantUnderMonotoneKeyTransform) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    Case c = random_case(rng);
    const double f1 = max_f1(f1_curve(match(c.proposals, c.errors, 0.3))).max_f1;
    for (auto& p : c.proposals) p.key = std::exp(3.0 * p.key) - 7.0;
    EXPECT_NEAR(max_f1(f1_curve(match(c.proposals, c.errors, 0.3))).max_f1, f1, 1e-12);
  }
}

TEST(Match, PartitionsTheManifest) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const Case c = random_case(rng);
    const MatchResult m = match(c.proposals, c.errors, 0.3);
    std::set<std::size_t> hit;
    for (const auto& pm : m.matches) {
      if (pm.tp) hit.insert(*pm.error_index);
    }
    std::set<std::size_t> missed(m.fn_errors.begin(), m.fn_errors.end());
    EXPECT_EQ(hit.size() + missed.size(), c.errors.size());
    for (std::size_t i : missed) EXPECT_FALSE(hit.count(i));
  }
}

TEST(PerType, PoolsFollowClassWiseOverlap) {
  Dataset noisy = fixtures::make_dataset(1, 3);
  fixtures::add_label(noisy, 1, 1, Box{50, 50, 20, 20}, 1);
  const std::vector<Proposal> ps{proposal(1, Box{50, 50, 20, 20}, 0.9, 1),   // same class on label
                                 proposal(1, Box{50, 50, 20, 20}, 0.8, 2),   // other class on label
                                 proposal(1, Box{150, 150, 20, 20}, 0.7, 1)};
  using V = std::vector<std::size_t>;
  EXPECT_EQ(per_type_pool(ps, noisy, 0.3, ErrorKind::kDrop), (V{1, 2}));
  EXPECT_EQ(per_type_pool(ps, noisy, 0.3, ErrorKind::kFlip), (V{1, 2}));
  EXPECT_EQ(per_type_pool(ps, noisy, 0.3, ErrorKind::kShift), (V{0}));
  EXPECT_EQ(per_type_pool(ps, noisy, 0.3, ErrorKind::kSpawn), (V{0, 1, 2}));
}

TEST(PerType, UnmatchablePoolScoresZero) {
  Dataset noisy = fixtures::make_dataset(1, 3);
  fixtures::add_label(noisy, 1, 1, Box{50, 50, 20, 20}, 1);
  CorruptionManifest m;
  m.records.push_back(error_at(ErrorKind::kDrop, 1, Box{150, 50, 20, 20}));
  m.records.push_back(error_at(ErrorKind::kShift, 1, Box{50, 50, 20, 20}));
  const std::vector<Proposal> ps{proposal(1, Box{50, 50, 20, 20}, 0.9, 1),
                                 proposal(1, Box{150, 150, 20, 20}, 0.2, 1)};
  const TypeReport drop = per_type_eval(ps, m, noisy, 0.3, ErrorKind::kDrop);
  EXPECT_FALSE(drop.matchable);
  EXPECT_EQ(drop.auroc, 0.0);
  EXPECT_EQ(drop.pool_size, 1u);
  const TypeReport shift = per_type_eval(ps, m, noisy, 0.3, ErrorKind::kShift);
  EXPECT_TRUE(shift.matchable);
  EXPECT_EQ(shift.matched_errors, 1u);
  EXPECT_EQ(shift.pool_size, 1u);
  EXPECT_FALSE(shift.auroc.has_value());  // no negatives in the pool
}

TEST(Report, EvaluateAndJsonRoundTrip) {
  Dataset noisy = fixtures::make_dataset(1, 3);
  fixtures::add_label(noisy, 1, 1, Box{50, 50, 20, 20}, 1);
  CorruptionManifest m;
  m.records.push_back(error_at(ErrorKind::kSpawn, 1, Box{50, 50, 20, 20}));
  m.records.push_back(error_at(ErrorKind::kDrop, 1, Box{150, 50, 20, 20}));
  std::vector<Proposal> ps{proposal(1, Box{50, 50, 20, 20}, 0.9), proposal(1, Box{150, 150, 20, 20}, 0.4)};
  ps[0].method = ps[1].method = Method::kEntropy;
  const EvalReport r = evaluate(ps, m, 0.3, &noisy);
  EXPECT_EQ(r.method, "entropy");
  EXPECT_EQ(r.counts, (EvalCounts{1, 1, 1}));
  EXPECT_DOUBLE_EQ(*r.auroc, 0.5);
  EXPECT_EQ(r.per_type.size(), 4u);

  const std::vector<EvalReport> reports{r, evaluate(ps, m, 0.3)};
  EXPECT_TRUE(reports[1].per_type.empty());
  const auto back = reports_from_json(reports_to_json(reports));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].method, r.method);
  EXPECT_EQ(back[0].auroc, r.auroc);
  EXPECT_EQ(back[0].counts, r.counts);
  EXPECT_EQ(back[0].per_type, r.per_type);
  EXPECT_EQ(back[0].curve.size(), r.curve.size());
  EXPECT_THROW(reports_from_json("{\"schema\":\"other\"}"), Error);

  const std::string csv = curves_csv(reports);
  EXPECT_EQ(csv.rfind("method,threshold,tpr,fpr,precision,recall,f1\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')),
            1 + r.curve.size() * 2);
}

TEST(Review, PrecisionAtK) {
  std::vector<VerdictRecord> v;
  for (int rank = 1; rank <= 200; ++rank) {
    VerdictRecord r;
    r.proposal_rank = rank;
    r.verdict = rank <= 194 ? Verdict::kTp : Verdict::kFp;
    if (r.verdict == Verdict::kTp) r.error_types = {ErrorKind::kFlip};
    v.push_back(r);
  }
  EXPECT_DOUBLE_EQ(review_precision(v, 200), 0.97);
  v[199].verdict = Verdict::kUnsure;
  EXPECT_DOUBLE_EQ(review_precision(v, 200), 0.97);
  // A later verdict for the same rank replaces the earlier one.
  VerdictRecord again = v[0];
  again.verdict = Verdict::kFp;
  again.error_types.clear();
  v.push_back(again);
  EXPECT_DOUBLE_EQ(review_precision(v, 200), 0.965);

  v.erase(v.begin() + 10, v.begin() + 12);
  try {
    review_precision(v, 200);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("11 12"), std::string::npos) << e.what();
  }
  EXPECT_THROW(review_precision(v, 0), InputError);
}

TEST(Review, Stats) {
  EXPECT_FALSE(review_stats({}).precision.has_value());
  std::vector<VerdictRecord> v(3);
  v[0] = {1, Verdict::kTp, {ErrorKind::kFlip, ErrorKind::kShift}, "a", ""};
  v[1] = {2, Verdict::kUnsure, {}, "a", ""};
  v[2] = {3, Verdict::kFp, {}, "a", ""};
  const ReviewStats s = review_stats(v);
  EXPECT_EQ(s.reviewed, 3u);
  EXPECT_EQ(s.tp, 1u);
  EXPECT_EQ(s.unsure, 1u);
  EXPECT_EQ(s.fp, 1u);
  EXPECT_NEAR(*s.precision, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(s.per_type.at(ErrorKind::kFlip), 1u);
  EXPECT_EQ(s.per_type.at(ErrorKind::kShift), 1u);
  EXPECT_EQ(s.per_type.at(ErrorKind::kDrop), 0u);
}
