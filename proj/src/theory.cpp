#include "labelaudit/theory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "labelaudit/error.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

bool FlipNoiseModel::valid() const {
  const double c = static_cast<double>(num_classes);
  return p_flip < (c - 1.0) / c * (1.0 - 2.0 * kappa);
}

void check_model(const FlipNoiseModel& model) {
  if (model.num_classes < 2) throw InputError("num_classes must be >= 2");
  if (!(model.p_flip >= 0.0 && model.p_flip < 1.0)) throw InputError("p_flip must be in [0,1)");
  if (!(model.kappa > 0.0)) throw InputError("kappa must be > 0");
  if (!(model.epsilon >= 0.0)) throw InputError("epsilon must be >= 0");
}

Thresholds thresholds(const FlipNoiseModel& model) {
  check_model(model);
  const double keep = 1.0 - model.p_flip - model.kappa;
  if (keep <= 0.0) throw DomainError("1 - p_flip - kappa must be positive");
  Thresholds t;
  t.lower = -std::log(keep);
  t.upper = -std::log(model.kappa + model.p_flip / static_cast<double>(model.num_classes - 1));
  t.valid = t.lower < t.upper;
  return t;
}

namespace {

// p * (r - log1p(r)) with r = q / p - 1; each term of KL(p||q) written so that
// it stays non-negative under rounding.
double kl_term(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  const double r = q / p - 1.0;
  double v;
  if (std::abs(r) < 1e-4) {
    v = r * r * (0.5 - r * (1.0 / 3.0 - r * 0.25));
  } else {
    v = r - std::log1p(r);
  }
  return p * std::max(v, 0.0);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += kl_term(p[i], q[i]);
  return kl;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

void check_distribution(std::span<const double> p, const char* name) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError(std::string(name) + " has an entry outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError(std::string(name) + " does not sum to 1");
}

}  // namespace

PinskerResult pinsker_check(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw InputError("distributions must have equal, non-zero size");
  check_distribution(p, "p");
  check_distribution(q, "q");
  PinskerResult r;
  r.tv = total_variation(p, q);
  r.kl = kl_divergence(p, q);
  r.holds = std::isinf(r.kl) || r.tv <= std::sqrt(2.0 * r.kl);
  return r;
}

PinskerSweep pinsker_sweep(std::size_t pairs, int num_classes, std::uint64_t seed,
                           Execution execution) {
  if (num_classes < 2) throw InputError("num_classes must be >= 2");
  const auto c = static_cast<std::size_t>(num_classes);
  const std::uint64_t base = derive_stream(seed, "pinsker");
  std::vector<char> holds(pairs, 1);
  std::vector<double> ratio(pairs, 0.0);
  parallel_for(pairs, execution, [&](std::size_t i) {
    Engine engine = make_engine(derive_stream(base, static_cast<std::int64_t>(i)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto concentration = [&] { return std::exp(std::log(0.05) + unit(engine) * std::log(400.0)); };
    const std::vector<double> ap(c, concentration());
    const std::vector<double> aq(c, concentration());
    std::vector<double> p = sample_dirichlet(ap, engine);
    std::vector<double> q = sample_dirichlet(aq, engine);
    if (unit(engine) < 0.5) {
      // Pull q toward p to cover the small-divergence regime.
      const double t = unit(engine);
      for (std::size_t k = 0; k < c; ++k) q[k] = (1.0 - t) * p[k] + t * q[k];
    }
    const double tv = total_variation(p, q);
    const double kl = kl_divergence(p, q);
    holds[i] = std::isinf(kl) || tv <= std::sqrt(2.0 * kl);
    if (std::isfinite(kl) && kl > 0.0) ratio[i] = tv / std::sqrt(2.0 * kl);
  });
  PinskerSweep sweep;
  sweep.pairs = pairs;
  for (std::size_t i = 0; i < pairs; ++i) {
    if (!holds[i]) ++sweep.violations;
    sweep.max_ratio = std::max(sweep.max_ratio, ratio[i]);
  }
  return sweep;
}

SeparationResult separation_experiment(const FlipNoiseModel& model, std::size_t samples,
                                       std::uint64_t seed, Execution execution) {
  check_model(model);
  SeparationResult result;
  result.samples = samples;
  result.bound = 2.0 * model.epsilon / (model.kappa * model.kappa);
  if (!model.valid()) {
    std::ostringstream msg;
    const double c = model.num_classes;
    msg << "invalid model: p_flip " << model.p_flip << " >= (C-1)/C (1-2 kappa) = "
        << (c - 1.0) / c * (1.0 - 2.0 * model.kappa);
    result.diagnostic = msg.str();
    if (1.0 - model.p_flip - model.kappa > 0.0) result.bands = thresholds(model);
    return result;
  }
  if (samples == 0) throw InputError("samples must be >= 1");
  result.bands = thresholds(model);

  const auto c = static_cast<std::size_t>(model.num_classes);
  const double keep = 1.0 - model.p_flip;
  const double other = model.p_flip / static_cast<double>(c - 1);
  const std::uint64_t base = derive_stream(seed, "separation");

  std::vector<int> truth(samples);
  std::vector<int> wrong(samples);
  std::vector<double> draws(samples * c);
  parallel_for(samples, execution, [&](std::size_t i) {
    Engine engine = make_engine(derive_stream(base, static_cast<std::int64_t>(i)));
    std::uniform_int_distribution<int> cls(0, model.num_classes - 1);
    std::uniform_int_distribution<int> off(1, model.num_classes - 1);
    truth[i] = cls(engine);
    wrong[i] = (truth[i] + off(engine)) % model.num_classes;
    std::vector<double> alpha(c, other * static_cast<double>(c));
    alpha[static_cast<std::size_t>(truth[i])] = keep * static_cast<double>(c);
    const std::vector<double> d = sample_dirichlet(alpha, engine);
    std::copy(d.begin(), d.end(), draws.begin() + static_cast<std::ptrdiff_t>(i * c));
  });

  auto p_at = [&](std::size_t i, std::size_t k) {
    return k == static_cast<std::size_t>(truth[i]) ? keep : other;
  };
  auto p_hat_at = [&](std::size_t i, std::size_t k, double t) {
    return (1.0 - t) * p_at(i, k) + t * draws[i * c + k];
  };
  std::vector<double> kl(samples);
  auto compute_kl = [&](double t) {
    parallel_for(samples, execution, [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += kl_term(p_at(i, k), p_hat_at(i, k, t));
      kl[i] = s;
    });
  };
  // Serial summation keeps the mean identical across execution modes.
  auto mean_kl = [&](double t) {
    compute_kl(t);
    double s = 0.0;
    for (double v : kl) s += v;
    return s / static_cast<double>(samples);
  };

  double t = 0.0;
  if (model.epsilon > 0.0) {
    if (mean_kl(1.0) <= model.epsilon) {
      t = 1.0;
    } else {
      double lo = 0.0;
      double hi = 1.0;
      for (int iter = 0; iter < 100 && hi - lo > 1e-15; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (mean_kl(mid) <= model.epsilon ? lo : hi) = mid;
      }
      t = lo;
    }
  }
  result.mixing_weight = t;
  result.mean_kl = mean_kl(t);
  if (result.mean_kl > model.epsilon) {
    throw CorruptionError("perturbation cannot reach the KL budget");
  }

  std::size_t bad_correct = 0;
  std::size_t bad_incorrect = 0;
  std::size_t markov = 0;
  std::size_t tv_far = 0;
  const double markov_level = 0.5 * model.kappa * model.kappa;
  std::vector<double> p(c);
  std::vector<double> q(c);
  for (std::size_t i = 0; i < samples; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      p[k] = p_at(i, k);
      q[k] = p_hat_at(i, k, t);
    }
    const double loss_correct = -std::log(q[static_cast<std::size_t>(truth[i])]);
    const double loss_wrong = -std::log(q[static_cast<std::size_t>(wrong[i])]);
    if (loss_correct >= result.bands.lower) ++bad_correct;
    if (loss_wrong <= result.bands.upper) ++bad_incorrect;
    if (kl[i] >= markov_level) ++markov;
    if (total_variation(p, q) >= model.kappa) ++tv_far;
  }
  const auto n = static_cast<double>(samples);
  result.violation_rate_correct = static_cast<double>(bad_correct) / n;
  result.violation_rate_incorrect = static_cast<double>(bad_incorrect) / n;
  result.markov_rate = static_cast<double>(markov) / n;
  result.tv_rate = static_cast<double>(tv_far) / n;
  result.ran = true;
  return result;
}

namespace {

using nlohmann::json;

void known_keys(const json& j, std::initializer_list<std::string_view> keys, const char* where) {
  if (!j.is_object()) throw SchemaError(std::string("theory grid: ") + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw SchemaError(std::string("theory grid: unknown key '") + key + "' in " + where);
    }
  }
}

FlipNoiseModel model_from(const json& j) {
  known_keys(j, {"num_classes", "p_flip", "kappa", "epsilon", "samples"}, "point");
  FlipNoiseModel m;
  m.num_classes = j.value("num_classes", m.num_classes);
  m.p_flip = j.value("p_flip", m.p_flip);
  m.kappa = j.value("kappa", m.kappa);
  m.epsilon = j.value("epsilon", m.epsilon);
  return m;
}

template <typename T>
std::vector<T> list_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return {fallback};
  if (j.at(key).is_array()) return j.at(key).get<std::vector<T>>();
  return {j.at(key).get<T>()};
}

}  // namespace

GridConfig parse_grid_config(std::string_view text) {
  GridConfig config;
  try {
    const json root = json::parse(text.begin(), text.end());
    known_keys(root, {"seed", "samples", "pinsker", "points", "grid"}, "config");
    config.seed = root.value("seed", config.seed);
    const std::size_t default_samples = root.value("samples", std::size_t{10000});
    if (root.contains("pinsker")) {
      known_keys(root.at("pinsker"), {"pairs", "num_classes"}, "pinsker");
      config.pinsker_pairs = root.at("pinsker").value("pairs", config.pinsker_pairs);
      config.pinsker_classes = root.at("pinsker").value("num_classes", config.pinsker_classes);
    }
    if (root.contains("points")) {
      for (const auto& j : root.at("points")) {
        config.points.push_back(GridPoint{model_from(j), j.value("samples", default_samples)});
      }
    }
    if (root.contains("grid")) {
      const json& g = root.at("grid");
      known_keys(g, {"num_classes", "p_flip", "kappa", "epsilon"}, "grid");
      const FlipNoiseModel d;
      for (int c : list_or(g, "num_classes", d.num_classes))
        for (double pf : list_or(g, "p_flip", d.p_flip))
          for (double kappa : list_or(g, "kappa", d.kappa))
            for (double eps : list_or(g, "epsilon", d.epsilon))
              config.points.push_back(GridPoint{FlipNoiseModel{c, pf, kappa, eps}, default_samples});
    }
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("theory grid: ") + e.what(), 0);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("theory grid: ") + e.what());
  }
  for (const auto& pt : config.points) check_model(pt.model);
  return config;
}

bool GridReport::all_passed() const {
  if (pinsker.violations > 0) return false;
  return std::all_of(rows.begin(), rows.end(), [](const Row& r) {
    return !r.point.model.valid() || r.result.passed();
  });
}

GridReport run_grid(const GridConfig& config, Execution execution) {
  GridReport report;
  for (std::size_t i = 0; i < config.points.size(); ++i) {
    const GridPoint& pt = config.points[i];
    GridReport::Row row;
    row.point = pt;
    row.result = separation_experiment(pt.model, pt.samples,
                                       derive_stream(config.seed, static_cast<std::int64_t>(i)),
                                       execution);
    row.bands = row.result.bands;
    report.rows.push_back(std::move(row));
  }
  report.pinsker =
      pinsker_sweep(config.pinsker_pairs, config.pinsker_classes, config.seed, execution);
  return report;
}

std::string grid_report_json(const GridReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    const auto& m = r.point.model;
    json row{{"num_classes", m.num_classes}, {"p_flip", m.p_flip},     {"kappa", m.kappa},
             {"epsilon", m.epsilon},        {"samples", r.point.samples}, {"valid", m.valid()},
             {"ran", r.result.ran}};
    if (1.0 - m.p_flip - m.kappa > 0.0) {
      row["lower"] = r.bands.lower;
      row["upper"] = r.bands.upper;
    }
    if (r.result.ran) {
      row["mixing_weight"] = r.result.mixing_weight;
      row["mean_kl"] = r.result.mean_kl;
      row["violation_rate_correct"] = r.result.violation_rate_correct;
      row["violation_rate_incorrect"] = r.result.violation_rate_incorrect;
      row["markov_rate"] = r.result.markov_rate;
      row["tv_rate"] = r.result.tv_rate;
      row["bound"] = r.result.bound;
      row["passed"] = r.result.passed();
    } else {
      row["diagnostic"] = r.result.diagnostic;
    }
    rows.push_back(std::move(row));
  }
  json root{{"format", json{{"schema", "labelaudit.theory"}, {"version", 1}}},
            {"points", std::move(rows)},
            {"pinsker", json{{"pairs", report.pinsker.pairs},
                             {"violations", report.pinsker.violations},
                             {"max_ratio", report.pinsker.max_ratio}}},
            {"all_passed", report.all_passed()}};
  return root.dump(1) + "\n";
}

std::string grid_report_table(const GridReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(4) << "C" << std::setw(8) << "p_F" << std::setw(8) << "kappa"
      << std::setw(10) << "epsilon" << std::setw(10) << "lower" << std::setw(10) << "upper"
      << std::setw(12) << "viol_corr" << std::setw(12) << "viol_inc" << std::setw(10) << "bound"
      << "result\n";
  out << std::setprecision(4);
  for (const auto& r : report.rows) {
    const auto& m = r.point.model;
    out << std::setw(4) << m.num_classes << std::setw(8) << m.p_flip << std::setw(8) << m.kappa
        << std::setw(10) << m.epsilon;
    if (!r.result.ran) {
      out << "SKIP (" << r.result.diagnostic << ")\n";
      continue;
    }
    out << std::setw(10) << r.bands.lower << std::setw(10) << r.bands.upper << std::setw(12)
        << r.result.violation_rate_correct << std::setw(12) << r.result.violation_rate_incorrect
        << std::setw(10) << r.result.bound << (r.result.passed() ? "PASS" : "FAIL") << '\n';
  }
  out << "pinsker: " << report.pinsker.violations << " violations in " << report.pinsker.pairs
      << " pairs (max tv/sqrt(2kl) = " << report.pinsker.max_ratio << ") "
      << (report.pinsker.violations == 0 ? "PASS" : "FAIL") << '\n';
  return out.str();
}

}  // namespace labelaudit
