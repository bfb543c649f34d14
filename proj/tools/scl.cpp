// scl: desk-scale supervised contrastive training, evaluation and checks.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "foodsg/scl/gradcheck.hpp"
#include "foodsg/scl/io.hpp"
#include "foodsg/synthetic.hpp"

using namespace foodsg;
using namespace foodsg::scl;

namespace {

std::vector<int> parse_topk(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw Error("--topk needs at least one value");
  return out;
}

int train(int stage, const std::string& config, const std::string& data_dir, const std::string& out,
          const std::string& init, const std::string& curve_path) {
  const TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
  const auto data = load_image_folder(data_dir);
  std::vector<double> curve;
  Checkpoint ck;
  if (stage == 1) {
    auto model = make_model(cfg);
    curve = train_stage1(model, data, cfg);
    ck = Checkpoint{model.encoder, model.projection, std::nullopt, data.class_names};
  } else {
    Encoder encoder;
    if (init.empty()) {
      std::cerr << "warning: no --init checkpoint; probing a randomly initialised encoder\n";
      encoder = make_model(cfg).encoder;
    } else {
      encoder = load_checkpoint(init).encoder;
    }
    auto result = train_stage2(encoder, data, cfg);
    curve = std::move(result.curve);
    ck = Checkpoint{encoder, std::nullopt, result.head, data.class_names};
  }
  save_checkpoint(ck, out);
  if (!curve_path.empty()) write_loss_curve(curve, curve_path);
  std::cout << json{{"stage", stage},
                    {"epochs", curve.size()},
                    {"final_loss", curve.empty() ? json(nullptr) : json(curve.back())},
                    {"checkpoint", out}}
                   .dump(2)
            << "\n";
  return 0;
}

int eval(const std::string& ckpt, const std::string& data_dir, const std::string& topk) {
  const auto ck = load_checkpoint(ckpt);
  auto data = load_image_folder(data_dir);
  if (!ck.class_names.empty() && ck.class_names != data.class_names) {
    throw Error("dataset classes do not match the checkpoint's classes");
  }
  const auto model = ck.classifier();
  const auto logits = predict_logits(model, data);
  json out{{"samples", data.size()}};
  // k larger than the class count is reported as top-|C|.
  for (int k : parse_topk(topk)) {
    k = std::min(k, data.num_classes());
    out["top" + std::to_string(k)] = topk_accuracy(logits, data.labels, k);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int gradcheck(int n, std::uint64_t seed) {
  double worst_scl = 0.0;
  double worst_ce = 0.0;
  for (int i = 0; i < n; ++i) {
    worst_scl = std::max(worst_scl, check_scl_gradient(derive_seed(seed, 1, i)).max_error);
    worst_ce = std::max(worst_ce, check_cross_entropy_gradient(derive_seed(seed, 2, i)).max_error);
  }
  const double tol = 1e-4;
  std::cout << json{{"instances", n},
                    {"scl_max_relative_error", worst_scl},
                    {"cross_entropy_max_relative_error", worst_ce},
                    {"tolerance", tol}}
                   .dump(2)
            << "\n";
  return worst_scl <= tol && worst_ce <= tol ? 0 : 1;
}

int synth(const std::string& out, int per_class, int size, std::uint64_t seed) {
  auto set = synthetic::pattern_dataset(per_class, size, seed);
  Dataset d{std::move(set.images), std::move(set.labels), synthetic::pattern_class_names()};
  save_image_folder(d, out);
  std::cout << "wrote " << d.size() << " images to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised contrastive recognition model"};
  app.require_subcommand(1);

  int stage = 1;
  std::string config;
  std::string data;
  std::string out;
  std::string init;
  std::string curve;
  auto* tr = app.add_subcommand("train", "Stage 1 (contrastive) or stage 2 (linear head on a frozen encoder)");
  tr->add_option("--stage", stage)->check(CLI::IsMember({1, 2}))->required();
  tr->add_option("--config", config, "JSON training config (defaults otherwise)");
  tr->add_option("--data", data, "Image folder: <dir>/<class>/<image>")->required();
  tr->add_option("--out", out, "Checkpoint to write")->required();
  tr->add_option("--init", init, "Stage-1 checkpoint providing the frozen encoder (stage 2)");
  tr->add_option("--curve", curve, "Write the per-epoch loss as CSV");

  std::string ckpt;
  std::string topk = "1,5";
  auto* ev = app.add_subcommand("eval", "Top-k accuracy of a stage-2 checkpoint");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--topk", topk, "Comma-separated k values")->capture_default_str();

  int n = 20;
  std::uint64_t seed = 7;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc->add_option("--n", n, "Random instances per check")->capture_default_str();
  gc->add_option("--seed", seed)->capture_default_str();

  int per_class = 100;
  int size = 64;
  auto* sy = app.add_subcommand("synth", "Write the seeded 3-class pattern dataset as PNG folders");
  sy->add_option("--out", out)->required();
  sy->add_option("--per-class", per_class)->capture_default_str();
  sy->add_option("--size", size)->capture_default_str();
  sy->add_option("--seed", seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (tr->parsed()) return train(stage, config, data, out, init, curve);
    if (ev->parsed()) return eval(ckpt, data, topk);
    if (gc->parsed()) return gradcheck(n, seed);
    if (sy->parsed()) return synth(out, per_class, size, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
