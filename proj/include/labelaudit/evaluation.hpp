#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelaudit/datamodel.hpp"

namespace labelaudit {

struct ProposalMatch {
  double key = 0.0;
  bool tp = false;
  std::optional<std::size_t> error_index;  // into the record list matched against
  std::optional<ErrorKind> type;
};

// Per proposal TP_l/FP_l, plus the errors no proposal hit. Undetected errors
// enter ROC computations as positives ranked after every proposal.
struct MatchResult {
  std::vector<ProposalMatch> matches;
  std::vector<std::size_t> fn_errors;
  std::size_t total_errors = 0;

  std::size_t tp_count() const;
  std::size_t fp_count() const;
};

// Class-agnostic: a proposal is TP_l iff its IoU with some anchor on the same
// image is >= alpha; it is assigned to its max-IoU anchor. Several proposals
// may hit the same error.
MatchResult match(std::span<const Proposal> proposals, std::span<const ErrorRecord> errors,
                  double alpha);
inline MatchResult match(std::span<const Proposal> proposals, const CorruptionManifest& manifest,
                         double alpha) {
  return match(proposals, manifest.records, alpha);
}

// P(random positive outranks random negative), ties count 1/2. nullopt when
// there are no positives or no negatives.
std::optional<double> auroc(const MatchResult& result);

struct CurvePoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// One point per distinct proposal key, thresholds ascending. Precision counts
// proposals, recall counts distinct errors.
std::vector<CurvePoint> f1_curve(const MatchResult& result);

struct F1Summary {
  double max_f1 = 0.0;
  std::optional<double> best_threshold;
};
F1Summary max_f1(std::span<const CurvePoint> curve);

struct TypeReport {
  std::optional<double> auroc;
  double max_f1 = 0.0;
  std::size_t pool_size = 0;
  std::size_t matched_errors = 0;
  // False when no proposal of the pool hits an error of this type; auroc is
  // then reported as 0.
  bool matchable = false;

  friend bool operator==(const TypeReport&, const TypeReport&) = default;
};

// Proposals within `pool` restricted by class-wise IoU against the noisy
// labels: drops/flips keep proposals below alpha for every label, shifts keep
// those at or above alpha for some label, spawns keep all.
std::vector<std::size_t> per_type_pool(std::span<const Proposal> proposals, const Dataset& noisy,
                                       double alpha, ErrorKind type);
TypeReport per_type_eval(std::span<const Proposal> proposals, const CorruptionManifest& manifest,
                         const Dataset& noisy, double alpha, ErrorKind type);

struct EvalCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

struct EvalReport {
  std::string method;
  double alpha = 0.3;
  std::optional<double> auroc;
  double max_f1 = 0.0;
  std::optional<double> best_threshold;
  std::vector<CurvePoint> curve;
  std::map<std::string, TypeReport> per_type;
  EvalCounts counts;
};

// noisy may be null; per-type results are then omitted.
EvalReport evaluate(std::span<const Proposal> proposals, const CorruptionManifest& manifest,
                    double alpha, const Dataset* noisy = nullptr);

std::string reports_to_json(std::span<const EvalReport> reports);
std::vector<EvalReport> reports_from_json(std::string_view text);
// method,threshold,tpr,fpr,precision,recall,f1
std::string curves_csv(std::span<const EvalReport> reports);

// Fraction of ranks 1..k judged tp (latest verdict per rank; unsure counts as
// fp). Throws InputError listing the ranks without a verdict.
double review_precision(std::span<const VerdictRecord> verdicts, int k);

struct ReviewStats {
  std::size_t reviewed = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t unsure = 0;
  std::optional<double> precision;  // tp / reviewed
  std::map<ErrorKind, std::size_t> per_type;
};

ReviewStats review_stats(std::span<const VerdictRecord> verdicts);

}  // namespace labelaudit
