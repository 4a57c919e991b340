#include "adafusion/config.hpp"

#include "adafusion/retrieval_eval.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace adafusion {

namespace {

using nlohmann::json;

json* navigate(json& root, const std::string& dotted_path, bool create) {
  json* node = &root;
  std::istringstream in(dotted_path);
  std::string key;
  while (std::getline(in, key, '.')) {
    if (key.empty()) throw ValidationError("empty key segment in '" + dotted_path + "'");
    if (!node->is_object()) {
      if (!create) return nullptr;
      *node = json::object();
    }
    if (!node->contains(key)) {
      if (!create) return nullptr;
      (*node)[key] = json::object();
    }
    node = &(*node)[key];
  }
  return node;
}

void applyOverride(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override must look like key.path=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  *navigate(root, path, true) = parsed;
}

template <typename T>
T get(const json& node, const std::string& key, T fallback) {
  if (!node.is_object() || !node.contains(key)) return fallback;
  try {
    return node.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

std::string RunConfig::indexDir() const {
  if (!index_dir.empty()) return index_dir;
  return (std::filesystem::path(dataset_root) / "index").string();
}

ModelConfig RunConfig::modelConfig() const {
  ModelConfig model;
  if (width_preset == "width8") {
    model = ModelConfig::width8();
  } else if (width_preset == "paper") {
    model.setDescriptorDim(descriptor_dim);
    model.attention_channels = attention_channels;
    model.fusion_channels = fusion_channels;
  } else {
    throw ValidationError("unknown width_preset '" + width_preset + "'");
  }
  model.adaptive_weights = adaptive_weights;
  model.image_height = preprocess.out_height;
  model.image_width = preprocess.out_width;
  model.voxel_resolution = preprocess.voxel.resolution;
  return model;
}

LoadedConfig parseRunConfig(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const std::string& assignment : overrides) applyOverride(doc, assignment);
  if (const char* env_root = std::getenv("ADAFUSION_DATA_ROOT")) {
    if (env_root[0] != '\0') {
      if (!doc.contains("dataset") || !doc["dataset"].is_object()) {
        doc["dataset"] = json::object();
      }
      doc["dataset"]["root"] = env_root;
    }
  }

  LoadedConfig loaded;
  loaded.canonical = doc.dump();
  loaded.hash = fnv1a64(loaded.canonical);
  RunConfig& cfg = loaded.config;

  const json dataset = doc.value("dataset", json::object());
  cfg.dataset_root = get<std::string>(dataset, "root", "");
  cfg.sequences = get<std::vector<std::string>>(dataset, "sequences", {});
  cfg.max_dt = get<double>(dataset, "max_dt", cfg.max_dt);
  cfg.frame_spacing = get<double>(dataset, "frame_spacing", cfg.frame_spacing);
  cfg.index_dir = get<std::string>(dataset, "index_dir", "");
  if (dataset.contains("split")) {
    const json& split = dataset.at("split");
    const double side = get<double>(split, "side", 100.0);
    for (const auto& box : split.value("boxes", json::array())) {
      if (!box.is_array() || box.size() != 2) {
        throw ValidationError("split.boxes entries must be [cx, cy] pairs");
      }
      cfg.test_boxes.push_back(
          TestBox{Eigen::Vector2d(box[0].get<double>(), box[1].get<double>()), side});
    }
  }

  const json preprocess = doc.value("preprocess", json::object());
  if (preprocess.contains("crop")) {
    const json& crop = preprocess.at("crop");
    if (!crop.is_null()) {
      if (!crop.is_array() || crop.size() != 4) {
        throw ValidationError("preprocess.crop must be [row, col, height, width]");
      }
      cfg.preprocess.crop = CropRect{crop[0].get<int>(), crop[1].get<int>(), crop[2].get<int>(),
                                     crop[3].get<int>()};
    }
  }
  cfg.preprocess.out_height = get<int>(preprocess, "out_height", cfg.preprocess.out_height);
  cfg.preprocess.out_width = get<int>(preprocess, "out_width", cfg.preprocess.out_width);
  cfg.preprocess.ground_clearance =
      get<double>(preprocess, "ground_clearance", cfg.preprocess.ground_clearance);
  if (preprocess.contains("voxel")) {
    const json& voxel = preprocess.at("voxel");
    const auto min = get<std::vector<double>>(voxel, "min", {-36.0, -36.0, -4.0});
    const auto max = get<std::vector<double>>(voxel, "max", {36.0, 36.0, 20.0});
    const auto res = get<std::vector<int>>(voxel, "resolution", {72, 72, 48});
    if (min.size() != 3 || max.size() != 3 || res.size() != 3) {
      throw ValidationError("voxel min/max/resolution must each have 3 entries");
    }
    cfg.preprocess.voxel.min_corner = Eigen::Vector3d(min[0], min[1], min[2]);
    cfg.preprocess.voxel.max_corner = Eigen::Vector3d(max[0], max[1], max[2]);
    cfg.preprocess.voxel.resolution = {res[0], res[1], res[2]};
  }
  if (preprocess.contains("augment")) {
    const json& augment = preprocess.at("augment");
    cfg.preprocess.augment_enabled = get<bool>(augment, "enabled", true);
    const double photometric = get<double>(augment, "photometric", 0.2);
    cfg.preprocess.augment.photometric_low = 1.0 - photometric;
    cfg.preprocess.augment.photometric_high = 1.0 + photometric;
    cfg.preprocess.augment.jitter_sigma =
        get<double>(augment, "jitter_sigma", cfg.preprocess.augment.jitter_sigma);
    cfg.preprocess.augment.jitter_clip =
        get<double>(augment, "jitter_clip", cfg.preprocess.augment.jitter_clip);
  }

  const json model = doc.value("model", json::object());
  cfg.width_preset = get<std::string>(model, "width_preset", cfg.width_preset);
  cfg.descriptor_dim = get<int>(model, "descriptor_dim", cfg.descriptor_dim);
  cfg.attention_channels = get<int>(model, "attention_channels", cfg.attention_channels);
  cfg.fusion_channels = get<int>(model, "fusion_channels", cfg.fusion_channels);
  cfg.adaptive_weights = get<bool>(model, "adaptive_weights", cfg.adaptive_weights);

  const json train = doc.value("train", json::object());
  cfg.train.epochs = get<int>(train, "epochs", cfg.train.epochs);
  cfg.train.batch_size = get<int>(train, "batch_size", cfg.train.batch_size);
  cfg.train.lr_init = get<double>(train, "lr_init", cfg.train.lr_init);
  cfg.train.lr_decay = get<double>(train, "lr_decay", cfg.train.lr_decay);
  cfg.train.patience = get<int>(train, "patience", cfg.train.patience);
  cfg.train.eval_every = get<int>(train, "eval_every", cfg.train.eval_every);
  cfg.train.margin = get<double>(train, "margin", cfg.train.margin);
  cfg.train.slack = get<double>(train, "slack", cfg.train.slack);
  cfg.train.d_pos = get<double>(train, "d_pos", cfg.train.d_pos);
  cfg.train.d_neg = get<double>(train, "d_neg", cfg.train.d_neg);
  cfg.train.neg_cap = get<int>(train, "neg_cap", cfg.train.neg_cap);
  cfg.train.seed = get<std::uint64_t>(train, "seed", cfg.train.seed);
  cfg.val_fraction = get<double>(train, "val_fraction", cfg.val_fraction);
  cfg.checkpoint_path = get<std::string>(train, "checkpoint", cfg.checkpoint_path);
  cfg.train_log_path = get<std::string>(train, "log", cfg.train_log_path);

  const json eval = doc.value("eval", json::object());
  cfg.eval_ns = get<std::vector<int>>(eval, "ns", cfg.eval_ns);
  cfg.eval_metric = get<std::string>(eval, "metric", cfg.eval_metric);
  cfg.d_tp = get<double>(eval, "d_tp", cfg.d_tp);
  cfg.train.val_d_tp = cfg.d_tp;
  cfg.eval_split = get<std::string>(eval, "split", cfg.eval_split);
  cfg.db_path = get<std::string>(eval, "db", cfg.db_path);
  cfg.results_path = get<std::string>(eval, "results", cfg.results_path);
  cfg.weights_report_path = get<std::string>(eval, "weights_report", cfg.weights_report_path);
  cfg.emit_plot = get<bool>(eval, "plot", cfg.emit_plot);

  const json synth = doc.value("synth", json::object());
  cfg.synth.n_places = get<int>(synth, "n_places", cfg.synth.n_places);
  cfg.synth.n_revisits = get<int>(synth, "n_revisits", cfg.synth.n_revisits);
  cfg.synth.seed = get<std::uint64_t>(synth, "seed", cfg.synth.seed);
  cfg.synth.image_height = get<int>(synth, "image_height", cfg.synth.image_height);
  cfg.synth.image_width = get<int>(synth, "image_width", cfg.synth.image_width);
  cfg.synth.points_per_cloud = get<int>(synth, "points_per_cloud", cfg.synth.points_per_cloud);
  cfg.synth_profile = get<std::string>(synth, "profile", cfg.synth_profile);
  if (cfg.synth_profile != "mixed") {
    cfg.synth.profiles = {parseModalityProfile(cfg.synth_profile)};
  }

  if (cfg.eval_split != "test" && cfg.eval_split != "train" && cfg.eval_split != "all") {
    throw ValidationError("eval.split must be test, train or all");
  }
  parseMetric(cfg.eval_metric);  // validates
  return loaded;
}

LoadedConfig loadRunConfig(const std::filesystem::path& path,
                           const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parseRunConfig(std::move(buffer).str(), overrides);
}

}  // namespace adafusion
