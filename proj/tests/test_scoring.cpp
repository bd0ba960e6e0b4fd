#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "labelaudit/error.hpp"
#include "labelaudit/scoring.hpp"
#include "fixtures.hpp"

using namespace labelaudit;

namespace {

ClassDistribution leaning(std::size_t slots, std::size_t index, double mass) {
  std::vector<double> w(slots, (1.0 - mass) / static_cast<double>(slots - 1));
  w[index] = mass;
  return ClassDistribution::from_weights(w);
}

// Second stage that predicts a fixed class for every label box.
class FixedSource : public SecondStageSource {
 public:
  FixedSource(std::size_t slots, std::size_t predicted) : slots_(slots), predicted_(predicted) {}
  ScoredBox second_stage(const BoxLabel& label) const override {
    ScoredBox sb;
    sb.image_id = label.image_id;
    sb.box = label.box;
    sb.refined_box = label.box;
    sb.class_dist = leaning(slots_, predicted_, 0.9);
    return sb;
  }

 private:
  std::size_t slots_;
  std::size_t predicted_;
};

// Predicts whatever class the clean dataset has at the label's box.
class CleanSource : public SecondStageSource {
 public:
  explicit CleanSource(const Dataset& clean) : clean_(clean) {}
  ScoredBox second_stage(const BoxLabel& label) const override {
    ScoredBox sb;
    sb.image_id = label.image_id;
    sb.box = label.box;
    sb.refined_box = label.box;
    std::size_t cls = 0;
    for (const auto& l : clean_.labels) {
      if (l.image_id == label.image_id && iou(l.box, label.box) > 0.9) cls = static_cast<std::size_t>(l.class_id);
    }
    sb.class_dist = leaning(static_cast<std::size_t>(clean_.num_classes()) + 1, cls, 0.9);
    return sb;
  }

 private:
  const Dataset& clean_;
};

ScoredBox detection(ImageId image, Box box, double s0, ClassDistribution dist) {
  ScoredBox sb;
  sb.image_id = image;
  sb.box = box;
  sb.refined_box = box;
  sb.s0 = s0;
  sb.class_dist = std::move(dist);
  return sb;
}

bool descending(const std::vector<Proposal>& ps) {
  return std::is_sorted(ps.begin(), ps.end(),
                        [](const Proposal& a, const Proposal& b) { return a.key > b.key; });
}

}  // namespace

TEST(Losses, MatchedAndBackgroundTargets) {
  Dataset d = fixtures::make_dataset(1, 3);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 2);
  const PipelineConfig cfg;
  const ScoredBox on = detection(ImageId{1}, Box{50, 50, 20, 20}, 0.8, leaning(4, 2, 0.7));
  const LossPair rpn = rpn_loss(on, d.labels, cfg);
  EXPECT_NEAR(rpn.cls, -std::log(0.8), 1e-12);
  EXPECT_NEAR(rpn.reg, 0.0, 1e-12);
  const LossPair roi = roi_loss(on, d.labels, cfg);
  EXPECT_NEAR(roi.cls, -std::log(0.7), 1e-12);

  const ScoredBox off = detection(ImageId{1}, Box{150, 150, 20, 20}, 0.8, leaning(4, 2, 0.7));
  EXPECT_NEAR(rpn_loss(off, d.labels, cfg).cls, -std::log(0.2), 1e-12);
  EXPECT_EQ(rpn_loss(off, d.labels, cfg).reg, 0.0);
  EXPECT_NEAR(roi_loss(off, d.labels, cfg).cls, -std::log(0.1), 1e-12);

  // A slightly displaced box picks up regression loss.
  const ScoredBox near = detection(ImageId{1}, Box{52, 50, 20, 20}, 0.8, leaning(4, 2, 0.7));
  EXPECT_GT(rpn_loss(near, d.labels, cfg).reg, 0.0);
  EXPECT_GT(roi_loss(near, d.labels, cfg).reg, rpn_loss(near, d.labels, cfg).reg);
}

TEST(LossMethod, FlippedLabelRanksFirst) {
  Dataset clean = fixtures::make_dataset(1, 3);
  fixtures::add_label(clean, 1, 1, Box{40, 40, 20, 20}, 1);
  fixtures::add_label(clean, 2, 1, Box{120, 40, 20, 20}, 2);
  fixtures::add_label(clean, 3, 1, Box{40, 120, 20, 20}, 3);
  Dataset noisy = clean;
  noisy.labels[1].class_id = 3;

  DetectionMap det;
  for (const auto& l : clean.labels) {
    det[ImageId{1}].push_back(detection(ImageId{1}, l.box, 0.95, leaning(4, static_cast<std::size_t>(l.class_id), 0.9)));
  }
  const CleanSource source(clean);
  const auto ps = run_loss_method(noisy, det, source, PipelineConfig{});
  ASSERT_FALSE(ps.empty());
  EXPECT_TRUE(descending(ps));
  EXPECT_EQ(ps.front().box, noisy.labels[1].box);
  for (const auto& p : ps) {
    EXPECT_EQ(p.method, Method::kLoss);
    EXPECT_NEAR(p.key, p.components.at("rpn_cls") + p.components.at("rpn_reg") +
                           p.components.at("roi_cls") + p.components.at("roi_reg"), 1e-12);
  }
}

TEST(LossMethod, DroppedObjectSurfacesAsBackgroundLoss) {
  Dataset clean = fixtures::make_dataset(1, 2);
  fixtures::add_label(clean, 1, 1, Box{40, 40, 20, 20}, 1);
  fixtures::add_label(clean, 2, 1, Box{120, 120, 20, 20}, 2);
  Dataset noisy = clean;
  noisy.labels.pop_back();

  DetectionMap det;
  for (const auto& l : clean.labels) {
    det[ImageId{1}].push_back(detection(ImageId{1}, l.box, 0.95, leaning(3, static_cast<std::size_t>(l.class_id), 0.9)));
  }
  const auto ps = run_loss_method(noisy, det, CleanSource(clean), PipelineConfig{});
  ASSERT_FALSE(ps.empty());
  EXPECT_EQ(ps.front().box, clean.labels[1].box);
  EXPECT_EQ(ps.front().source, BoxSource::kDetector);
}

TEST(TwoStage, InjectedLabelsSurviveNms) {
  Dataset d = fixtures::make_dataset(1, 2);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  fixtures::add_label(d, 2, 1, Box{51, 50, 20, 20}, 2);
  fixtures::add_label(d, 3, 1, Box{50, 51, 20, 20}, 1);
  DetectionMap det;
  det[ImageId{1}].push_back(detection(ImageId{1}, Box{50, 50, 20, 20}, 0.99, leaning(3, 1, 0.9)));
  const FixedSource source(3, 1);
  for (const auto& ps : {run_loss_method(d, det, source, PipelineConfig{}),
                         run_score_method(d, det, source, PipelineConfig{}),
                         run_entropy_method(d, det, source, PipelineConfig{})}) {
    std::set<std::int64_t> refs;
    for (const auto& p : ps) {
      if (p.label_ref) refs.insert(raw(*p.label_ref));
    }
    EXPECT_EQ(refs, (std::set<std::int64_t>{1, 2, 3}));
    // The detector box may or may not survive; the labels always do.
    EXPECT_LE(ps.size(), 4u);
  }
}

TEST(TwoStage, SEpsilonFiltersDetectorBoxesOnly) {
  Dataset d = fixtures::make_dataset(1, 2);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  DetectionMap det;
  det[ImageId{1}].push_back(detection(ImageId{1}, Box{150, 150, 20, 20}, 0.1, leaning(3, 2, 0.9)));
  PipelineConfig cfg;
  cfg.s_epsilon = 0.25;
  const FixedSource source(3, 1);
  EXPECT_EQ(run_score_method(d, det, source, cfg).size(), 1u);
  EXPECT_EQ(run_entropy_method(d, det, source, cfg).size(), 1u);
  EXPECT_EQ(run_loss_method(d, det, source, cfg).size(), 1u);
  cfg.s_epsilon_in_loss = false;
  EXPECT_EQ(run_loss_method(d, det, source, cfg).size(), 2u);
  cfg.s_epsilon = 0.05;
  EXPECT_EQ(run_score_method(d, det, source, cfg).size(), 2u);
}

TEST(ScoreMethod, KeyIsForegroundMaxAndTauFilters) {
  Dataset d = fixtures::make_dataset(1, 2);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  DetectionMap det;
  det[ImageId{1}].push_back(detection(ImageId{1}, Box{150, 150, 20, 20}, 0.9,
                                      ClassDistribution({0.7, 0.1, 0.2})));
  const FixedSource source(3, 1);
  auto ps = run_score_method(d, det, source, PipelineConfig{});
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_TRUE(descending(ps));
  EXPECT_NEAR(ps.back().key, 0.2, 1e-12);
  EXPECT_EQ(ps.back().predicted_class, 2);
  PipelineConfig cfg;
  cfg.tau = 0.5;
  ps = run_score_method(d, det, source, cfg);
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps.front().label_ref, LabelId{1});
}

TEST(EntropyMethod, KeyIsClassEntropy) {
  Dataset d = fixtures::make_dataset(1, 2);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  DetectionMap det;
  const ClassDistribution flat = ClassDistribution::uniform(3);
  det[ImageId{1}].push_back(detection(ImageId{1}, Box{150, 150, 20, 20}, 0.9, flat));
  const auto ps = run_entropy_method(d, det, FixedSource(3, 1), PipelineConfig{});
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_NEAR(ps.front().key, std::log(3.0), 1e-12);
  EXPECT_EQ(ps.front().source, BoxSource::kDetector);
}

TEST(Pd, Differential) {
  EXPECT_EQ(probability_differential(1, {}), 1.0);
  const std::vector<ClassDistribution> agree{ClassDistribution::one_hot(4, 2)};
  EXPECT_NEAR(probability_differential(2, agree), 0.0, 1e-12);
  EXPECT_NEAR(probability_differential(3, agree), 1.0, 1e-12);
  const std::vector<ClassDistribution> mixed{ClassDistribution({0.1, 0.6, 0.3, 0.0}),
                                             ClassDistribution({0.2, 0.2, 0.6, 0.0})};
  // (1 + 0.3 - 0.6 + 1 + 0.6 - 0.2) / 4
  EXPECT_NEAR(probability_differential(1, mixed), 0.525, 1e-12);
}

TEST(Pd, OneProposalPerLabel) {
  Dataset d = fixtures::make_dataset(2, 3);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  fixtures::add_label(d, 2, 1, Box{120, 50, 20, 20}, 2);
  fixtures::add_label(d, 3, 2, Box{50, 50, 20, 20}, 3);
  DetectionMap det;
  det[ImageId{1}].push_back(detection(ImageId{1}, Box{50, 50, 20, 20}, 0.9, ClassDistribution::one_hot(4, 1)));
  det[ImageId{1}].push_back(detection(ImageId{1}, Box{120, 50, 20, 20}, 0.9, ClassDistribution::one_hot(4, 3)));
  const auto ps = run_pd(d, det, PipelineConfig{});
  ASSERT_EQ(ps.size(), 3u);
  EXPECT_TRUE(descending(ps));
  std::map<std::int64_t, const Proposal*> by_label;
  for (const auto& p : ps) by_label[raw(*p.label_ref)] = &p;
  EXPECT_NEAR(by_label.at(1)->key, 0.0, 1e-12);
  EXPECT_NEAR(by_label.at(2)->key, 1.0, 1e-12);
  EXPECT_EQ(by_label.at(2)->predicted_class, 3);
  EXPECT_EQ(by_label.at(3)->key, 1.0);
  EXPECT_EQ(by_label.at(3)->components.at("assigned"), 0.0);
}

TEST(Naive, CostAndRanking) {
  EXPECT_EQ(naive_cost(0.2, 100), 105u);
  EXPECT_EQ(naive_cost(0.0, 100), 100u);
  EXPECT_EQ(naive_cost(1.0, 8), 10u);
  EXPECT_THROW(naive_cost(1.5, 8), InputError);

  Dataset d = fixtures::make_dataset(1, 2);
  for (int i = 0; i < 6; ++i) fixtures::add_label(d, i + 1, 1, Box{20.0 + 25 * i, 50, 20, 20}, 1);
  CorruptionManifest m;
  m.gamma = 0.5;
  ErrorRecord drop;
  drop.kind = ErrorKind::kDrop;
  drop.original_label = BoxLabel{LabelId{99}, ImageId{1}, Box{50, 150, 20, 20}, 2};
  drop.anchor_image_id = ImageId{1};
  drop.anchor_box = drop.original_label.box;
  m.records.push_back(drop);

  const NaiveResult a = run_naive(d, m, 3);
  EXPECT_EQ(a.cost, 6u);
  ASSERT_EQ(a.ranking.size(), 7u);
  EXPECT_TRUE(descending(a.ranking));
  EXPECT_EQ(a.ranking, run_naive(d, m, 3).ranking);
  std::set<std::int64_t> refs;
  for (const auto& p : a.ranking) refs.insert(raw(*p.label_ref));
  EXPECT_EQ(refs.size(), 7u);
  EXPECT_TRUE(refs.count(99));
}

TEST(Filter, DropsProposalsOverlappingLabels) {
  Dataset d = fixtures::make_dataset(1, 2);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  std::vector<Proposal> ps(3);
  ps[0].image_id = ps[1].image_id = ps[2].image_id = ImageId{1};
  ps[0].box = Box{50, 50, 20, 20};
  ps[1].box = Box{58, 50, 20, 20};   // IoU 12/28
  ps[2].box = Box{150, 150, 20, 20};
  const auto kept = filter_no_label_overlap(ps, d, 0.3);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box, ps[2].box);
  EXPECT_EQ(filter_no_label_overlap(ps, d, 0.5).size(), 2u);
}

TEST(SecondStage, RecordedLookup) {
  Dataset d = fixtures::make_dataset(1, 2);
  fixtures::add_label(d, 1, 1, Box{50, 50, 20, 20}, 1);
  fixtures::add_label(d, 2, 1, Box{150, 50, 20, 20}, 1);
  DetectionMap det;
  ScoredBox rec = detection(ImageId{1}, d.labels[0].box, 1.0, ClassDistribution::one_hot(3, 2));
  rec.source = BoxSource::kInjectedLabel;
  rec.label_ref = LabelId{1};
  det[ImageId{1}].push_back(rec);
  const RecordedSecondStage source(det);
  EXPECT_EQ(source.second_stage(d.labels[0]).class_dist, ClassDistribution::one_hot(3, 2));
  EXPECT_THROW(source.second_stage(d.labels[1]), InputError);
  EXPECT_THROW(run_loss_method(d, det, source, PipelineConfig{}), InputError);
}

TEST(Pipeline, RejectsBadConfig) {
  PipelineConfig cfg;
  cfg.nms_iou_stage1 = 0.0;
  EXPECT_THROW(check_config(cfg), InputError);
  cfg = PipelineConfig{};
  cfg.s_epsilon = 1.5;
  EXPECT_THROW(check_config(cfg), InputError);
  cfg = PipelineConfig{};
  cfg.roi_delta_stds[2] = 0.0;
  EXPECT_THROW(check_config(cfg), InputError);
  EXPECT_NO_THROW(check_config(PipelineConfig{}));
}
