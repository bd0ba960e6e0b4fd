#include "labelaudit/cli.hpp"

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "labelaudit/config.hpp"
#include "labelaudit/error.hpp"
#include "labelaudit/evaluation.hpp"
#include "labelaudit/io.hpp"
#include "labelaudit/service.hpp"
#include "labelaudit/theory.hpp"

namespace labelaudit {

namespace {

struct Options {
  // synth
  std::string synth_config;
  std::string out;
  std::optional<int> images;
  std::optional<double> objects;
  std::optional<int> classes;
  // corrupt
  std::string dataset;
  double gamma = 0.2;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_noisy;
  std::string out_manifest;
  std::string corruption_config;
  // simulate
  std::string sim_config;
  std::string noisy;
  // score
  std::string method;
  std::string detections;
  std::string pipeline_config;
  std::string manifest;
  bool no_label_overlap = false;
  double alpha = 0.3;
  // evaluate
  std::string proposals;
  std::string curves;
  // theory
  std::string grid;
  // serve
  std::string session;
  std::string host = "127.0.0.1";
  int port = 8080;
  // report
  std::vector<std::string> inputs;
  bool serial = false;
};

Execution execution(const Options& o) { return o.serial ? Execution::kSerial : Execution::kParallel; }

void cmd_synth(const Options& o, std::ostream& out) {
  SynthConfig cfg = o.synth_config.empty() ? SynthConfig{} : load_config(o.synth_config, parse_synth_config);
  if (o.images) cfg.num_images = *o.images;
  if (o.objects) cfg.objects_per_image = *o.objects;
  if (o.classes) cfg.num_classes = *o.classes;
  if (o.seed_given) cfg.seed = o.seed;
  const Dataset d = make_synthetic_dataset(cfg);
  save_dataset(d, o.out);
  out << "wrote " << d.images.size() << " images, " << d.labels.size() << " labels to " << o.out << '\n';
}

void cmd_corrupt(const Options& o, std::ostream& out) {
  CorruptionConfig cfg =
      o.corruption_config.empty() ? CorruptionConfig{} : load_config(o.corruption_config, parse_corruption_config);
  cfg.gamma = o.gamma;
  cfg.seed = o.seed;
  check_config(cfg);
  const Dataset clean = load_dataset(o.dataset);
  const CorruptionManifest manifest = plan(clean, cfg, execution(o));
  const Dataset noisy = apply(clean, manifest);
  save_dataset(noisy, o.out_noisy);
  save_manifest(manifest, o.out_manifest);
  out << manifest.per_type_count << " errors per type (" << manifest.records.size() << " total), "
      << noisy.labels.size() << " noisy labels\n";
}

void cmd_simulate(const Options& o, std::ostream& out) {
  SimulatorConfig cfg = o.sim_config.empty() ? SimulatorConfig{} : load_config(o.sim_config, parse_simulator_config);
  if (o.seed_given) cfg.seed = o.seed;
  const Dataset clean = load_dataset(o.dataset);
  const DetectorSimulator sim(clean, cfg);
  DetectionMap detections = sim.simulate(execution(o));
  std::size_t injected = 0;
  if (!o.noisy.empty()) {
    const Dataset noisy = load_dataset(o.noisy);
    record_label_queries(sim, noisy, detections, execution(o));
    injected = noisy.labels.size();
  }
  save_detector_output(detections, o.out);
  std::size_t total = 0;
  for (const auto& [image, boxes] : detections) total += boxes.size();
  out << "wrote " << total - injected << " detector boxes";
  if (injected) out << " and " << injected << " label queries";
  out << " to " << o.out << '\n';
}

void cmd_score(const Options& o, std::ostream& out) {
  const Method method = parse_method(o.method);
  const Dataset noisy = load_dataset(o.noisy);
  const PipelineConfig cfg =
      o.pipeline_config.empty() ? PipelineConfig{} : load_config(o.pipeline_config, parse_pipeline_config);
  std::vector<Proposal> proposals;
  if (method == Method::kNaive) {
    if (o.manifest.empty()) throw InputError("--manifest is required for the naive method");
    const NaiveResult r = run_naive(noisy, load_manifest(o.manifest), o.seed);
    out << "naive review cost: " << r.cost << '\n';
    proposals = r.ranking;
  } else {
    if (o.detections.empty()) throw InputError("--detections is required for method " + o.method);
    const DetectionMap detections = load_detector_output(o.detections, noisy.num_classes());
    const RecordedSecondStage source(detections);
    switch (method) {
      case Method::kLoss:
        proposals = run_loss_method(noisy, detections, source, cfg, execution(o));
        break;
      case Method::kScore:
        proposals = run_score_method(noisy, detections, source, cfg, execution(o));
        break;
      case Method::kEntropy:
        proposals = run_entropy_method(noisy, detections, source, cfg, execution(o));
        break;
      case Method::kPd:
        proposals = run_pd(noisy, detections, cfg, execution(o));
        break;
      case Method::kNaive:
        break;
    }
  }
  if (o.no_label_overlap) proposals = filter_no_label_overlap(proposals, noisy, o.alpha);
  save_proposals(proposals, o.out);
  out << "wrote " << proposals.size() << ' ' << o.method << " proposals to " << o.out << '\n';
}

void print_report_line(const EvalReport& r, std::ostream& out) {
  out << std::left << std::setw(9) << r.method << " auroc "
      << (r.auroc ? std::to_string(*r.auroc) : std::string("undefined")) << "  max_f1 " << r.max_f1
      << "  tp " << r.counts.tp << " fp " << r.counts.fp << " fn " << r.counts.fn << '\n';
  for (const auto& [type, t] : r.per_type) {
    out << "  " << std::setw(6) << type << " auroc "
        << (t.auroc ? std::to_string(*t.auroc) : std::string("undefined")) << "  max_f1 " << t.max_f1
        << (t.matchable ? "" : "  (no matchable proposals)") << '\n';
  }
}

void cmd_evaluate(const Options& o, std::ostream& out) {
  const std::vector<Proposal> proposals = load_proposals(o.proposals);
  const CorruptionManifest manifest = load_manifest(o.manifest);
  std::optional<Dataset> noisy;
  if (!o.noisy.empty()) noisy = load_dataset(o.noisy);
  const EvalReport report = evaluate(proposals, manifest, o.alpha, noisy ? &*noisy : nullptr);
  const std::vector<EvalReport> reports{report};
  write_text_file(o.out, reports_to_json(reports));
  if (!o.curves.empty()) write_text_file(o.curves, curves_csv(reports));
  print_report_line(report, out);
}

void cmd_theory(const Options& o, std::ostream& out) {
  const GridConfig cfg = parse_grid_config(read_text_file(o.grid));
  const GridReport report = run_grid(cfg, execution(o));
  write_text_file(o.out, grid_report_json(report));
  out << grid_report_table(report);
  out << (report.all_passed() ? "all checks passed" : "some checks FAILED") << '\n';
}

void cmd_serve(const Options& o, std::ostream& out) {
  ReviewService service(load_session(o.session));
  out << "serving session " << service.session().session_id << " (k=" << service.k() << ") on http://"
      << o.host << ':' << o.port << '\n'
      << std::flush;
  serve(service, o.host, o.port);
}

void cmd_report(const Options& o, std::ostream& out) {
  std::vector<EvalReport> all;
  for (const auto& path : o.inputs) {
    for (auto& r : reports_from_json(read_text_file(path))) all.push_back(std::move(r));
  }
  write_text_file(o.out, curves_csv(all));
  for (const auto& r : all) print_report_line(r, out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"labelaudit: simulate, rank and review label errors in object detection data"};
  app.require_subcommand(1);
  Options o;
  app.add_flag("--serial", o.serial, "Run kernels single-threaded");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic clean dataset");
  synth->add_option("--out", o.out, "Output dataset.json")->required();
  synth->add_option("--config", o.synth_config, "Synth config JSON");
  synth->add_option("--images", o.images, "Number of images");
  synth->add_option("--objects", o.objects, "Mean objects per image");
  synth->add_option("--classes", o.classes, "Number of classes");
  synth->add_option("--seed", o.seed)->each([&](const std::string&) { o.seed_given = true; });

  auto* corrupt = app.add_subcommand("corrupt", "Inject drops, flips, shifts and spawns");
  corrupt->add_option("--dataset", o.dataset, "Clean dataset.json")->required();
  corrupt->add_option("--gamma", o.gamma, "Total noise rate")->required();
  corrupt->add_option("--seed", o.seed)->required();
  corrupt->add_option("--out-noisy", o.out_noisy)->required();
  corrupt->add_option("--out-manifest", o.out_manifest)->required();
  corrupt->add_option("--config", o.corruption_config, "Corruption config JSON");

  auto* simulate = app.add_subcommand("simulate", "Produce detector outputs from the clean dataset");
  simulate->add_option("--dataset", o.dataset, "Clean dataset.json")->required();
  simulate->add_option("--config", o.sim_config, "Simulator config JSON");
  simulate->add_option("--out", o.out, "Output detections.ndjson")->required();
  simulate->add_option("--noisy", o.noisy, "Noisy dataset whose label boxes get second-stage entries");
  simulate->add_option("--seed", o.seed, "Overrides the config seed")
      ->each([&](const std::string&) { o.seed_given = true; });

  auto* score = app.add_subcommand("score", "Rank label-error proposals");
  score->add_option("--method", o.method)
      ->required()
      ->check(CLI::IsMember({"loss", "score", "entropy", "pd", "naive"}));
  score->add_option("--noisy", o.noisy, "Noisy dataset.json")->required();
  score->add_option("--detections", o.detections, "detections.ndjson");
  score->add_option("--out", o.out, "Output proposals.ndjson")->required();
  score->add_option("--config", o.pipeline_config, "Pipeline config JSON");
  score->add_option("--manifest", o.manifest, "Manifest (naive method)");
  score->add_option("--seed", o.seed, "Shuffle seed (naive method)");
  score->add_flag("--require-no-label-overlap", o.no_label_overlap,
                  "Keep only proposals with IoU < alpha to every noisy label");
  score->add_option("--alpha", o.alpha, "IoU threshold for --require-no-label-overlap");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Match proposals to the manifest and score them");
  evaluate_cmd->add_option("--proposals", o.proposals)->required();
  evaluate_cmd->add_option("--manifest", o.manifest)->required();
  evaluate_cmd->add_option("--alpha", o.alpha, "Match IoU threshold")->capture_default_str();
  evaluate_cmd->add_option("--out", o.out, "Output report.json")->required();
  evaluate_cmd->add_option("--noisy", o.noisy, "Noisy dataset, enables per-type metrics");
  evaluate_cmd->add_option("--curves", o.curves, "Also write the F1 curve as CSV");

  auto* theory = app.add_subcommand("theory", "Verify the loss separation bounds numerically");
  theory->add_option("--grid", o.grid, "Grid config JSON")->required();
  theory->add_option("--out", o.out, "Output theory_report.json")->required();

  auto* serve_cmd = app.add_subcommand("serve", "Run the review service");
  serve_cmd->add_option("--session", o.session, "Session JSON")->required();
  serve_cmd->add_option("--host", o.host)->capture_default_str();
  serve_cmd->add_option("--port", o.port)->capture_default_str();

  auto* report = app.add_subcommand("report", "Merge evaluation reports into curves.csv");
  report->add_option("--inputs", o.inputs, "report.json files")->required();
  report->add_option("--out", o.out, "Output curves.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) cmd_synth(o, out);
    else if (*corrupt) cmd_corrupt(o, out);
    else if (*simulate) cmd_simulate(o, out);
    else if (*score) cmd_score(o, out);
    else if (*evaluate_cmd) cmd_evaluate(o, out);
    else if (*theory) cmd_theory(o, out);
    else if (*serve_cmd) cmd_serve(o, out);
    else if (*report) cmd_report(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    for (const auto& v : e.violations()) err << "  " << v << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace labelaudit
