#pragma once

// Files for the recognition model: image-folder datasets, JSON training
// configs, binary checkpoints and loss-curve CSVs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "foodsg/codec.hpp"
#include "foodsg/error.hpp"
#include "foodsg/pipeline.hpp"
#include "foodsg/random.hpp"
#include "foodsg/scl/model.hpp"
#include "foodsg/scl/train.hpp"

namespace foodsg::scl {

namespace fs = std::filesystem;

// <root>/<class>/<image>; classes are the subdirectories in name order.
inline Dataset load_image_folder(const fs::path& root) {
  Dataset d;
  const auto classes = categories_from_root(root);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    d.class_names.push_back(classes[c].name);
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(classes[c].dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
      d.images.push_back(decode_image(read_file(p)));
      d.labels.push_back(static_cast<int>(c));
    }
  }
  if (d.images.empty()) throw Error("no images under " + root.string());
  return d;
}

inline void save_image_folder(const Dataset& d, const fs::path& root) {
  std::vector<int> counter(d.class_names.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int c = d.labels[i];
    const auto dir = root / d.class_names.at(c);
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof name, "%05d.png", counter[c]++);
    write_file(dir / name, encode_png(d.images[i]));
  }
}

// Seeded split: returns (train indices, test indices), each sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, std::size_t n_test,
                                                                                   std::uint64_t seed) {
  if (n_test > n) throw Error("test split larger than the dataset");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

// ---------------------------------------------------------------------------
// Config

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "temperature",   "stage1_lr",     "stage2_lr",         "weight_decay",   "stage1_epochs",
      "stage2_epochs", "batch_size",    "seed",              "input_size",     "conv1_channels",
      "conv2_channels", "embed_dim",    "projection_hidden", "projection_dim", "paper_scale"};
  if (!j.is_object()) throw Error("training config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error("unknown training config key '" + k + "'");
  }
  TrainConfig c = j.value("paper_scale", false) ? TrainConfig::paper_scale() : TrainConfig{};
  try {
    c.temperature = j.value("temperature", c.temperature);
    c.stage1_lr = j.value("stage1_lr", c.stage1_lr);
    c.stage2_lr = j.value("stage2_lr", c.stage2_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.encoder.input_size = j.value("input_size", c.encoder.input_size);
    c.encoder.conv1_channels = j.value("conv1_channels", c.encoder.conv1_channels);
    c.encoder.conv2_channels = j.value("conv2_channels", c.encoder.conv2_channels);
    c.encoder.embed_dim = j.value("embed_dim", c.encoder.embed_dim);
    c.projection_hidden = j.value("projection_hidden", c.projection_hidden);
    c.projection_dim = j.value("projection_dim", c.projection_dim);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return train_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

static_assert(std::endian::native == std::endian::little, "checkpoints store raw little-endian values");

inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'G', 'S', 'C', 'L', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Stage 1 produces encoder + projection; stage 2 produces encoder + head.
struct Checkpoint {
  Encoder encoder;
  std::optional<ProjectionHead> projection;
  std::optional<LinearHead> head;
  std::vector<std::string> class_names;

  Classifier classifier() const {
    if (!head) throw Error("checkpoint has no prediction head");
    return {encoder, *head};
  }
};

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

inline void put_vector(std::ostream& out, const std::vector<double>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_vector(std::istream& in, std::vector<double>& v) {
  const auto n = get<std::uint64_t>(in);
  if (n != v.size()) throw IoError("checkpoint parameter count does not match its configuration");
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint");
}

}  // namespace detail

// Layout: magic[8], u32 version, u32 x 7 shape fields (input_size, conv1,
// conv2, embed_dim, proj_hidden, proj_dim, num_classes; zero when absent),
// encoder params, projection params if any, head params if any, class names.
inline void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const auto& e = ck.encoder.config();
  for (int v : {e.input_size, e.conv1_channels, e.conv2_channels, e.embed_dim}) detail::put<std::uint32_t>(out, v);
  detail::put<std::uint32_t>(out, ck.projection ? ck.projection->hidden_dim() : 0);
  detail::put<std::uint32_t>(out, ck.projection ? ck.projection->out_dim() : 0);
  detail::put<std::uint32_t>(out, ck.head ? ck.head->num_classes() : 0);
  detail::put_vector(out, ck.encoder.params());
  if (ck.projection) detail::put_vector(out, ck.projection->params());
  if (ck.head) detail::put_vector(out, ck.head->params());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.class_names.size()));
  for (const auto& name : ck.class_names) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw IoError("not a checkpoint file");
  if (detail::get<std::uint32_t>(in) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  EncoderConfig e;
  e.input_size = static_cast<int>(detail::get<std::uint32_t>(in));
  e.conv1_channels = static_cast<int>(detail::get<std::uint32_t>(in));
  e.conv2_channels = static_cast<int>(detail::get<std::uint32_t>(in));
  e.embed_dim = static_cast<int>(detail::get<std::uint32_t>(in));
  const auto proj_hidden = static_cast<int>(detail::get<std::uint32_t>(in));
  const auto proj_dim = static_cast<int>(detail::get<std::uint32_t>(in));
  const auto classes = static_cast<int>(detail::get<std::uint32_t>(in));
  Checkpoint ck{Encoder(e), std::nullopt, std::nullopt, {}};
  detail::get_vector(in, ck.encoder.params());
  if (proj_dim > 0) {
    ck.projection.emplace(e.embed_dim, proj_hidden, proj_dim);
    detail::get_vector(in, ck.projection->params());
  }
  if (classes > 0) {
    ck.head.emplace(e.embed_dim, classes);
    detail::get_vector(in, ck.head->params());
  }
  const auto names = detail::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < names; ++i) {
    const auto len = detail::get<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw IoError("truncated checkpoint");
    ck.class_names.push_back(std::move(s));
  }
  return ck;
}

inline void write_loss_curve(const std::vector<double>& curve, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "epoch,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i + 1 << ',' << curve[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace foodsg::scl
