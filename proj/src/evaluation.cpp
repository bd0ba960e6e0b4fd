#include "labelaudit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>

#include "labelaudit/error.hpp"
#include "labelaudit/io.hpp"

namespace labelaudit {

std::size_t MatchResult::tp_count() const {
  return static_cast<std::size_t>(
      std::count_if(matches.begin(), matches.end(), [](const ProposalMatch& m) { return m.tp; }));
}

std::size_t MatchResult::fp_count() const { return matches.size() - tp_count(); }

MatchResult match(std::span<const Proposal> proposals, std::span<const ErrorRecord> errors,
                  double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("alpha must be in (0,1]");
  std::map<ImageId, std::vector<std::size_t>> anchors;
  for (std::size_t e = 0; e < errors.size(); ++e) anchors[errors[e].anchor_image_id].push_back(e);

  MatchResult result;
  result.total_errors = errors.size();
  std::vector<char> hit(errors.size(), 0);
  result.matches.reserve(proposals.size());
  for (const auto& p : proposals) {
    ProposalMatch m;
    m.key = p.key;
    if (auto it = anchors.find(p.image_id); it != anchors.end()) {
      double best = -1.0;
      for (std::size_t e : it->second) {
        const double v = iou(p.box, errors[e].anchor_box);
        if (v >= alpha && v > best) {
          best = v;
          m.error_index = e;
        }
      }
    }
    if (m.error_index) {
      m.tp = true;
      m.type = errors[*m.error_index].kind;
      hit[*m.error_index] = 1;
    }
    result.matches.push_back(m);
  }
  for (std::size_t e = 0; e < errors.size(); ++e) {
    if (!hit[e]) result.fn_errors.push_back(e);
  }
  return result;
}

std::optional<double> auroc(const MatchResult& result) {
  const std::size_t fn = result.fn_errors.size();
  const std::size_t positives = result.tp_count() + fn;
  const std::size_t negatives = result.fp_count();
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<const ProposalMatch*> order;
  order.reserve(result.matches.size());
  for (const auto& m : result.matches) order.push_back(&m);
  std::sort(order.begin(), order.end(),
            [](const ProposalMatch* a, const ProposalMatch* b) { return a->key > b->key; });

  // Walk groups of equal key from the top; each negative wins against every
  // positive seen above it and half of the tied positives.
  double wins = 0.0;
  std::size_t positives_above = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    std::size_t group_neg = 0;
    while (j < order.size() && order[j]->key == order[i]->key) {
      (order[j]->tp ? group_pos : group_neg) += 1;
      ++j;
    }
    wins += static_cast<double>(group_neg) *
            (static_cast<double>(positives_above) + 0.5 * static_cast<double>(group_pos));
    positives_above += group_pos;
    i = j;
  }
  // Undetected errors rank below every proposal and beat no negative.
  return wins / (static_cast<double>(positives) * static_cast<double>(negatives));
}

std::vector<CurvePoint> f1_curve(const MatchResult& result) {
  std::vector<const ProposalMatch*> order;
  for (const auto& m : result.matches) order.push_back(&m);
  std::sort(order.begin(), order.end(),
            [](const ProposalMatch* a, const ProposalMatch* b) { return a->key > b->key; });

  const double total_tp = static_cast<double>(result.tp_count());
  const double positives = total_tp + static_cast<double>(result.fn_errors.size());
  const double negatives = static_cast<double>(result.fp_count());

  std::vector<CurvePoint> curve;
  std::set<std::size_t> covered;
  std::size_t tp = 0;
  std::size_t taken = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = order[i]->key;
    while (i < order.size() && order[i]->key == t) {
      if (order[i]->tp) {
        ++tp;
        covered.insert(*order[i]->error_index);
      }
      ++taken;
      ++i;
    }
    CurvePoint pt;
    pt.threshold = t;
    pt.precision = static_cast<double>(tp) / static_cast<double>(taken);
    pt.recall = result.total_errors == 0
                    ? 0.0
                    : static_cast<double>(covered.size()) / static_cast<double>(result.total_errors);
    pt.f1 = pt.precision + pt.recall > 0.0
                ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall)
                : 0.0;
    pt.tpr = positives > 0.0 ? static_cast<double>(tp) / positives : 0.0;
    pt.fpr = negatives > 0.0 ? static_cast<double>(taken - tp) / negatives : 0.0;
    curve.push_back(pt);
  }
  std::reverse(curve.begin(), curve.end());
  return curve;
}

F1Summary max_f1(std::span<const CurvePoint> curve) {
  F1Summary best;
  for (const auto& pt : curve) {
    if (!best.best_threshold || pt.f1 > best.max_f1) {
      best.max_f1 = pt.f1;
      best.best_threshold = pt.threshold;
    }
  }
  return best;
}

namespace {

double classwise_iou(const Proposal& p, const BoxLabel& l) {
  return p.predicted_class == l.class_id ? iou(p.box, l.box) : 0.0;
}

}  // namespace

std::vector<std::size_t> per_type_pool(std::span<const Proposal> proposals, const Dataset& noisy,
                                       double alpha, ErrorKind type) {
  const auto grouped = labels_by_image(noisy);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (type == ErrorKind::kSpawn) {
      pool.push_back(i);
      continue;
    }
    double best = 0.0;
    if (auto it = grouped.find(proposals[i].image_id); it != grouped.end()) {
      for (const auto& l : it->second) best = std::max(best, classwise_iou(proposals[i], l));
    }
    const bool overlaps = best >= alpha;
    if (type == ErrorKind::kShift ? overlaps : !overlaps) pool.push_back(i);
  }
  return pool;
}

TypeReport per_type_eval(std::span<const Proposal> proposals, const CorruptionManifest& manifest,
                         const Dataset& noisy, double alpha, ErrorKind type) {
  std::vector<Proposal> pool;
  for (std::size_t i : per_type_pool(proposals, noisy, alpha, type)) pool.push_back(proposals[i]);
  std::vector<ErrorRecord> errors;
  for (const auto& r : manifest.records) {
    if (r.kind == type) errors.push_back(r);
  }
  const MatchResult m = match(pool, errors, alpha);
  TypeReport report;
  report.pool_size = pool.size();
  report.matched_errors = errors.size() - m.fn_errors.size();
  report.matchable = m.tp_count() > 0;
  report.auroc = report.matchable ? auroc(m) : std::optional<double>(0.0);
  report.max_f1 = max_f1(f1_curve(m)).max_f1;
  return report;
}

EvalReport evaluate(std::span<const Proposal> proposals, const CorruptionManifest& manifest,
                    double alpha, const Dataset* noisy) {
  EvalReport report;
  report.method = proposals.empty() ? "unknown" : std::string(to_string(proposals.front().method));
  report.alpha = alpha;
  const MatchResult m = match(proposals, manifest, alpha);
  report.auroc = auroc(m);
  report.curve = f1_curve(m);
  const F1Summary best = max_f1(report.curve);
  report.max_f1 = best.max_f1;
  report.best_threshold = best.best_threshold;
  report.counts = EvalCounts{m.tp_count(), m.fp_count(), m.fn_errors.size()};
  if (noisy) {
    for (ErrorKind kind : kAllErrorKinds) {
      report.per_type[std::string(to_string(kind))] = per_type_eval(proposals, manifest, *noisy, alpha, kind);
    }
  }
  return report;
}

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string reports_to_json(std::span<const EvalReport> reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json curve = json::array();
    for (const auto& pt : r.curve) {
      curve.push_back(json{{"threshold", pt.threshold}, {"tpr", pt.tpr}, {"fpr", pt.fpr},
                           {"precision", pt.precision}, {"recall", pt.recall}, {"f1", pt.f1}});
    }
    json per_type = json::object();
    for (const auto& [name, t] : r.per_type) {
      per_type[name] = json{{"auroc", optional_number(t.auroc)}, {"max_f1", t.max_f1},
                            {"pool_size", t.pool_size}, {"matched_errors", t.matched_errors},
                            {"matchable", t.matchable}};
    }
    arr.push_back(json{{"method", r.method},
                       {"alpha", r.alpha},
                       {"auroc", optional_number(r.auroc)},
                       {"max_f1", r.max_f1},
                       {"best_threshold", optional_number(r.best_threshold)},
                       {"counts", json{{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}},
                       {"per_type", std::move(per_type)},
                       {"f1_curve", std::move(curve)}});
  }
  return json{{"format", json{{"schema", "labelaudit.report"}, {"version", 1}}}, {"reports", std::move(arr)}}
             .dump(1) +
         "\n";
}

std::vector<EvalReport> reports_from_json(std::string_view text) {
  std::vector<EvalReport> out;
  try {
    const json root = json::parse(text.begin(), text.end());
    for (const auto& j : root.at("reports")) {
      EvalReport r;
      r.method = j.at("method").get<std::string>();
      r.alpha = j.at("alpha").get<double>();
      r.auroc = read_optional(j, "auroc");
      r.max_f1 = j.at("max_f1").get<double>();
      r.best_threshold = read_optional(j, "best_threshold");
      const auto& c = j.at("counts");
      r.counts = EvalCounts{c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                            c.at("fn").get<std::size_t>()};
      for (const auto& [name, t] : j.at("per_type").items()) {
        TypeReport tr;
        tr.auroc = read_optional(t, "auroc");
        tr.max_f1 = t.at("max_f1").get<double>();
        tr.pool_size = t.at("pool_size").get<std::size_t>();
        tr.matched_errors = t.at("matched_errors").get<std::size_t>();
        tr.matchable = t.at("matchable").get<bool>();
        r.per_type[name] = tr;
      }
      for (const auto& pt : j.at("f1_curve")) {
        r.curve.push_back(CurvePoint{pt.at("threshold").get<double>(), pt.at("tpr").get<double>(),
                                     pt.at("fpr").get<double>(), pt.at("precision").get<double>(),
                                     pt.at("recall").get<double>(), pt.at("f1").get<double>()});
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  return out;
}

std::string curves_csv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out.precision(17);
  out << "method,threshold,tpr,fpr,precision,recall,f1\n";
  for (const auto& r : reports) {
    for (const auto& pt : r.curve) {
      out << r.method << ',' << pt.threshold << ',' << pt.tpr << ',' << pt.fpr << ','
          << pt.precision << ',' << pt.recall << ',' << pt.f1 << '\n';
    }
  }
  return out.str();
}

double review_precision(std::span<const VerdictRecord> verdicts, int k) {
  if (k < 1) throw InputError("k must be >= 1");
  const auto latest = latest_verdicts(verdicts);
  std::vector<int> gaps;
  std::size_t tp = 0;
  for (int rank = 1; rank <= k; ++rank) {
    auto it = latest.find(rank);
    if (it == latest.end()) {
      gaps.push_back(rank);
    } else if (it->second.verdict == Verdict::kTp) {
      ++tp;
    }
  }
  if (!gaps.empty()) {
    std::ostringstream msg;
    msg << gaps.size() << " of " << k << " ranks have no verdict:";
    for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg << ' ' << gaps[i];
    if (gaps.size() > 20) msg << " ...";
    throw InputError(msg.str());
  }
  return static_cast<double>(tp) / static_cast<double>(k);
}

ReviewStats review_stats(std::span<const VerdictRecord> verdicts) {
  ReviewStats stats;
  for (ErrorKind kind : kAllErrorKinds) stats.per_type[kind] = 0;
  for (const auto& [rank, r] : latest_verdicts(verdicts)) {
    ++stats.reviewed;
    switch (r.verdict) {
      case Verdict::kTp:
        ++stats.tp;
        for (ErrorKind kind : r.error_types) ++stats.per_type[kind];
        break;
      case Verdict::kFp:
        ++stats.fp;
        break;
      case Verdict::kUnsure:
        ++stats.unsure;
        break;
    }
  }
  if (stats.reviewed > 0) {
    stats.precision = static_cast<double>(stats.tp) / static_cast<double>(stats.reviewed);
  }
  return stats;
}

}  // namespace labelaudit
