// curate: dataset curation stages over a JSON Lines manifest.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"

#include "foodsg/calibration_server.hpp"
#include "foodsg/diversity.hpp"
#include "foodsg/pipeline.hpp"
#include "foodsg/scl/io.hpp"

using namespace foodsg;

namespace {

int run(Stage stage, const PipelineConfig& cfg, const std::string& manifest, bool force) {
  const auto rep = run_stage(cfg, stage, manifest, RunOptions{force, {}});
  std::cout << to_json(rep).dump(2) << "\n";
  return 0;
}

int evaluate(const PipelineConfig& cfg, const std::string& manifest_path, const std::string& labels_path) {
  const auto m = load_manifest(manifest_path);
  const auto labels = read_labels_csv(labels_path);
  std::vector<const ImageRecord*> records;
  for (const auto& l : labels) {
    const auto* r = m.find_record(l.image_id);
    if (!r) throw NotFoundError("labelled image " + l.image_id + " is not in the manifest");
    records.push_back(r);
  }
  const auto scores = score_records(load_scorer(*cfg.scorer_path), records, cfg.workers);
  const auto ev = evaluate_foodness(labels, [&](const std::string& id) { return scores.at(id); }, cfg.accept_threshold);
  std::cout << json{{"accuracy", ev.accuracy},
                    {"true_food", ev.confusion.true_food},
                    {"false_food", ev.confusion.false_food},
                    {"true_non_food", ev.confusion.true_non_food},
                    {"false_non_food", ev.confusion.false_non_food}}
                   .dump(2)
            << "\n";
  return 0;
}

int train_scorer(const std::string& manifest_path, const std::string& labels_path, const std::string& out,
                 int epochs, double lr, unsigned workers) {
  const auto m = load_manifest(manifest_path);
  const auto labels = read_labels_csv(labels_path);
  std::vector<const ImageRecord*> records;
  for (const auto& l : labels) {
    const auto* r = m.find_record(l.image_id);
    if (!r) throw NotFoundError("labelled image " + l.image_id + " is not in the manifest");
    records.push_back(r);
  }
  auto data = parallel_map(
      records.size(),
      [&](std::size_t i) {
        return LabeledFeatures{extract_features(decode_image(read_file(records[i]->source_path))), labels[i].is_food};
      },
      workers);
  const auto trained = train_baseline(data, epochs, lr);
  save_baseline(trained.scorer, out);
  std::size_t correct = 0;
  for (const auto& d : data) correct += (trained.scorer.score(d.features) >= 0.5) == d.is_food;
  std::cout << json{{"examples", data.size()},
                    {"final_loss", mean_logistic_loss(trained.scorer, data)},
                    {"training_accuracy", static_cast<double>(correct) / static_cast<double>(data.size())},
                    {"scorer", out}}
                   .dump(2)
            << "\n";
  return 0;
}

int serve(const std::string& manifest_path, const std::filesystem::path& log_path, const std::string& host, int port,
          const std::optional<std::filesystem::path>& ui_dir) {
  CalibrationSession session(load_manifest(manifest_path), log_path);
  httplib::Server server;
  mount_calibration_api(server, session, ui_dir);
  std::cerr << "calibration server on http://" << host << ":" << port << " (decisions: " << log_path.string()
            << ")\n";
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

int diversity(const std::string& manifest_path, const std::string& metric,
              std::size_t sample_cap, std::uint64_t seed, const std::string& out, const std::string& encoder,
              const std::string& codec) {
  DiversityOptions opt;
  opt.jpeg = metric == "jpeg" || metric == "both";
  opt.embed = metric == "embed" || metric == "both";
  opt.sample_cap = sample_cap;
  opt.seed = seed;
  opt.codec = codec == "png" ? LosslessCodec::png : LosslessCodec::jpeg;
  const auto m = load_manifest(manifest_path);
  Embedder embed = encoder.empty() ? feature_embedder() : encoder_embedder(scl::load_checkpoint(encoder).encoder);
  const auto report = dataset_report(
      m, [](const ImageRecord& r) { return decode_image(read_file(r.source_path)); }, embed, opt);
  const auto text = to_json(report).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
  return 0;
}

int verify(const std::string& manifest_path) {
  const auto m = load_manifest(manifest_path);
  auto problems = verify_accounting(m);
  for (auto& p : verify_attribution(m)) problems.push_back(std::move(p));
  for (const auto& p : problems) std::cout << p << "\n";
  if (problems.empty()) std::cout << "ok: " << m.history.size() << " reports, " << m.active_count() << " active\n";
  return problems.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image dataset curation pipeline"};
  app.require_subcommand(1);

  PipelineConfig cfg;
  std::string manifest;
  bool force = false;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest, "Manifest path (JSON Lines)")->required();
    sub->add_option("--workers", cfg.workers, "Worker threads");
  };
  auto forcible = [&](CLI::App* sub) { sub->add_flag("--force", force, "Rerun the most recent stage"); };

  std::string root;
  auto* ingest = app.add_subcommand("ingest", "Create a manifest from <root>/<category>/<image> files");
  common(ingest);
  forcible(ingest);
  ingest->add_option("--root", root, "Directory with one subdirectory per category")->required();
  ingest->add_option("--name", cfg.dataset_name, "Dataset name");

  auto* format = app.add_subcommand("format", "Remove truncated, undecodable and undersized images");
  common(format);
  forcible(format);
  format->add_option("--min-side", cfg.min_side, "Minimum width and height")->capture_default_str();

  bool exact = false;
  std::string clusters;
  auto* dedup = app.add_subcommand("dedup", "Remove near-duplicate images within each category");
  common(dedup);
  forcible(dedup);
  dedup->add_option("--threshold", cfg.dedup_threshold, "Hamming threshold over 192 bits")->capture_default_str();
  dedup->add_flag("--exact", exact, "Exact-hash duplicates only (threshold 0)");
  dedup->add_option("--clusters", clusters, "Cluster report path (default <manifest>.clusters.jsonl)");

  std::string scorer;
  std::string eval_labels;
  auto* food = app.add_subcommand("foodness", "Score images and remove non-food ones");
  common(food);
  forcible(food);
  food->add_option("--scorer", scorer, "baseline.bin or scores.csv")->required();
  food->add_option("--accept", cfg.accept_threshold, "Accept threshold; score >= threshold is food")
      ->capture_default_str();
  food->add_option("--eval", eval_labels, "Evaluate against human labels (image_id,is_food) instead of filtering");

  std::string labels;
  std::string scorer_out;
  int epochs = 500;
  double lr = 1.0;
  auto* ftrain = app.add_subcommand("foodness-train", "Fit the baseline foodness scorer on labelled images");
  common(ftrain);
  ftrain->add_option("--labels", labels, "CSV image_id,is_food")->required();
  ftrain->add_option("--out", scorer_out, "Output scorer file")->required();
  ftrain->add_option("--epochs", epochs)->capture_default_str();
  ftrain->add_option("--lr", lr)->capture_default_str();

  int port = 0;
  bool finalize = false;
  std::string host = "127.0.0.1";
  std::string log;
  std::string ui_dir;
  auto* calib = app.add_subcommand("calibrate", "Serve the calibration API or fold its decisions into the manifest");
  common(calib);
  forcible(calib);
  auto* serve_opt = calib->add_option("--serve", port, "Serve the review API on this port");
  auto* fin_opt = calib->add_flag("--finalize", finalize, "Apply the decision log and complete the stage");
  serve_opt->excludes(fin_opt);
  calib->add_option("--host", host)->capture_default_str();
  calib->add_option("--log", log, "Decision log (default <manifest>.decisions.jsonl)");
  calib->add_option("--ui-dir", ui_dir, "Static review UI assets");

  std::string metric = "both";
  std::size_t sample_cap = 2000;
  std::uint64_t seed = 7;
  std::string div_out;
  std::string encoder;
  std::string codec = "jpeg";
  auto* div = app.add_subcommand("diversity", "Per-category diversity metrics");
  common(div);
  div->add_option("--metric", metric)->check(CLI::IsMember({"jpeg", "embed", "both"}))->capture_default_str();
  div->add_option("--sample-cap", sample_cap, "Maximum sampled pairs per category")->capture_default_str();
  div->add_option("--seed", seed)->capture_default_str();
  div->add_option("--out", div_out, "Report path (default stdout)");
  div->add_option("--encoder", encoder, "Encoder checkpoint (default: normalised colour/thumbnail features)");
  div->add_option("--codec", codec, "Lossless codec for the average image")
      ->check(CLI::IsMember({"jpeg", "png"}))
      ->capture_default_str();

  std::string export_dir = "out";
  auto* exp = app.add_subcommand("export", "Copy active images to <out>/<category>/<id>.jpg");
  common(exp);
  forcible(exp);
  exp->add_option("--out", export_dir)->capture_default_str();
  exp->add_option("--floor", cfg.export_floor, "Flag categories with fewer images")->capture_default_str();

  auto* ver = app.add_subcommand("verify", "Check stage accounting and removal attribution");
  common(ver);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!log.empty()) cfg.decisions_log = log;
    if (!clusters.empty()) cfg.clusters_out = clusters;
    if (exact) cfg.dedup_threshold = 0;
    if (!scorer.empty()) cfg.scorer_path = scorer;
    cfg.export_dir = export_dir;

    if (ingest->parsed()) {
      cfg.inputs = categories_from_root(root);
      return run(Stage::ingest, cfg, manifest, force);
    }
    if (format->parsed()) return run(Stage::format, cfg, manifest, force);
    if (dedup->parsed()) return run(Stage::dedup, cfg, manifest, force);
    if (food->parsed()) {
      if (!eval_labels.empty()) return evaluate(cfg, manifest, eval_labels);
      return run(Stage::foodness, cfg, manifest, force);
    }
    if (ftrain->parsed()) return train_scorer(manifest, labels, scorer_out, epochs, lr, cfg.workers);
    if (calib->parsed()) {
      if (finalize) return run(Stage::calibrate, cfg, manifest, force);
      if (serve_opt->count() == 0) throw Error("calibrate needs --serve PORT or --finalize");
      cfg.calibration_port = port;
      cfg.validate();
      std::optional<std::filesystem::path> ui;
      if (!ui_dir.empty()) ui = ui_dir;
      return serve(manifest, decisions_path(cfg, manifest), host, port, ui);
    }
    if (div->parsed()) return diversity(manifest, metric, sample_cap, seed, div_out, encoder, codec);
    if (exp->parsed()) return run(Stage::export_, cfg, manifest, force);
    if (ver->parsed()) return verify(manifest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
