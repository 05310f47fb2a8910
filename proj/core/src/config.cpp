#include "dssl/config.hpp"

#include <filesystem>
#include <set>

#include "dssl/io.hpp"
#include "nlohmann/json.hpp"

namespace dssl::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json method_to_json(const ssl::MethodConfig& m) {
  json j;
  j["name"] = ssl::method_name(m);
  if (const auto* b = std::get_if<ssl::ByolConfig>(&m)) {
    j["proj_hidden"] = b->proj_hidden;
    j["proj_out"] = b->proj_out;
    j["pred_hidden"] = b->pred_hidden;
    j["tau"] = b->tau;
    j["tau_cosine"] = b->tau_cosine;
  } else if (const auto* s = std::get_if<ssl::SimSiamConfig>(&m)) {
    j["proj_hidden"] = s->proj_hidden;
    j["proj_out"] = s->proj_out;
    j["pred_hidden"] = s->pred_hidden;
  } else {
    const auto& w = std::get<ssl::SwavConfig>(m);
    j["prototypes"] = w.prototypes;
    j["proj_hidden"] = w.proj_hidden;
    j["proj_out"] = w.proj_out;
    j["temperature"] = w.temperature;
    j["sinkhorn_eps"] = w.sinkhorn.eps;
    j["sinkhorn_iters"] = w.sinkhorn.iters;
    j["n_local_crops"] = w.n_local_crops;
    j["local_size"] = w.local_size;
  }
  return j;
}

ssl::MethodConfig method_from_json(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  if (name == "byol") {
    reject_unknown(j, {"name", "proj_hidden", "proj_out", "pred_hidden", "tau",
                       "tau_cosine"},
                   "method");
    ssl::ByolConfig b;
    maybe(j, "proj_hidden", b.proj_hidden);
    maybe(j, "proj_out", b.proj_out);
    maybe(j, "pred_hidden", b.pred_hidden);
    maybe(j, "tau", b.tau);
    maybe(j, "tau_cosine", b.tau_cosine);
    return b;
  }
  if (name == "simsiam") {
    reject_unknown(j, {"name", "proj_hidden", "proj_out", "pred_hidden"},
                   "method");
    ssl::SimSiamConfig s;
    maybe(j, "proj_hidden", s.proj_hidden);
    maybe(j, "proj_out", s.proj_out);
    maybe(j, "pred_hidden", s.pred_hidden);
    return s;
  }
  if (name == "swav") {
    reject_unknown(j, {"name", "prototypes", "proj_hidden", "proj_out",
                       "temperature", "sinkhorn_eps", "sinkhorn_iters",
                       "n_local_crops", "local_size"},
                   "method");
    ssl::SwavConfig w;
    maybe(j, "prototypes", w.prototypes);
    maybe(j, "proj_hidden", w.proj_hidden);
    maybe(j, "proj_out", w.proj_out);
    maybe(j, "temperature", w.temperature);
    maybe(j, "sinkhorn_eps", w.sinkhorn.eps);
    maybe(j, "sinkhorn_iters", w.sinkhorn.iters);
    maybe(j, "n_local_crops", w.n_local_crops);
    maybe(j, "local_size", w.local_size);
    return w;
  }
  throw ConfigError("unknown method '" + name + "'");
}

}  // namespace

void RunConfig::validate(bool check_paths) const {
  if (dataset.type != "folder" && dataset.type != "synthetic")
    throw ConfigError("dataset.type must be 'folder' or 'synthetic'");
  if (dataset.root.empty()) throw ConfigError("dataset.root is required");
  if (check_paths && dataset.type == "folder" &&
      !fs::is_directory(dataset.root))
    throw ConfigError("dataset.root does not exist: " + dataset.root);
  if (dataset.image_size < 16)
    throw ConfigError("dataset.image_size must be >= 16");

  if (depth.provider != "sidecar" && depth.provider != "zero" &&
      depth.provider != "command")
    throw ConfigError("depth.provider must be sidecar, zero or command");
  if (depth.provider == "command" && depth.command.empty())
    throw ConfigError("depth.provider=command requires depth.command");
  if (!(depth.dropout_p >= 0.0 && depth.dropout_p <= 1.0))
    throw ConfigError("depth.dropout_p must be in [0,1]");
  ssl::adapter_init_from_string(depth.adapter_init);

  if (views.enabled) {
    if (views.k < 1) throw ConfigError("views.k must be >= 1");
    if (!(views.q >= 0.0 && views.q <= 1.0))
      throw ConfigError("views.q must be in [0,1]");
    if (views.num_planes < 2) throw ConfigError("views.num_planes must be >= 2");
    if (!(views.depth_near > 0.0 && views.depth_far > views.depth_near))
      throw ConfigError("views depth range must satisfy 0 < near < far");
    for (double r : {views.range_x, views.range_y, views.range_z})
      if (r < 0.0) throw ConfigError("views ranges must be >= 0");
  }

  encoder_spec().validate();
  ssl::validate(method);
  optim.validate();

  try {
    augment_recipe.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("augment: ") + e.what());
  }

  if (eval.knn_k < 1) throw ConfigError("eval.knn_k must be >= 1");
  if (!(eval.knn_temperature > 0.0))
    throw ConfigError("eval.knn_temperature must be > 0");
  if (eval.knn_every < 0) throw ConfigError("eval.knn_every must be >= 0");
  if (eval.probe_epochs < 1) throw ConfigError("eval.probe_epochs must be >= 1");
  if (eval.probe_grid.empty()) throw ConfigError("eval.probe_grid is empty");
  for (const eval::CorruptionSpec& s : eval.corruptions) {
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("eval.corruptions: ") + e.what());
    }
  }
  eval::depth_mode_from_string(eval.depth_mode);
}

augment::AugmentationPolicy RunConfig::policy() const {
  augment::AugmentationPolicy p;
  p.base_aug = augment_recipe;
  p.base_aug.out_size = dataset.image_size;
  p.use_depth = depth.use_depth;
  p.dropout.p = depth.dropout_p;
  p.use_3d_views = views.enabled;
  p.q = views.q;
  return p;
}

ssl::EncoderSpec RunConfig::encoder_spec() const {
  ssl::EncoderSpec spec;
  spec.backbone = ssl::backbone_from_string(backbone);
  spec.in_channels = depth.use_depth ? 4 : 3;
  spec.feature_dim = feature_dim;
  return spec;
}

std::string RunConfig::to_json() const {
  json j;
  j["dataset"] = {{"root", dataset.root},
                  {"type", dataset.type},
                  {"image_size", dataset.image_size},
                  {"synthetic_train", dataset.synthetic_train},
                  {"synthetic_val", dataset.synthetic_val},
                  {"synthetic_distractor_prob", dataset.synthetic_distractor_prob},
                  {"synthetic_seed", dataset.synthetic_seed}};
  j["depth"] = {{"use_depth", depth.use_depth},
                {"provider", depth.provider},
                {"command", depth.command},
                {"dropout_p", depth.dropout_p},
                {"adapter_init", depth.adapter_init}};
  j["views"] = {{"enabled", views.enabled},
                {"k", views.k},
                {"range_x", views.range_x},
                {"range_y", views.range_y},
                {"range_z", views.range_z},
                {"q", views.q},
                {"num_planes", views.num_planes},
                {"depth_near", views.depth_near},
                {"depth_far", views.depth_far}};
  j["backbone"] = backbone;
  j["feature_dim"] = feature_dim;
  j["method"] = method_to_json(method);
  j["optim"] = {{"optimizer", optim.optimizer},
                {"lr", optim.lr},
                {"momentum", optim.momentum},
                {"weight_decay", optim.weight_decay},
                {"epochs", optim.epochs},
                {"batch_size", optim.batch_size},
                {"seed", optim.seed}};
  j["augment"] = {{"crop_scale_min", augment_recipe.crop_scale_min},
                  {"crop_scale_max", augment_recipe.crop_scale_max},
                  {"crop_aspect_min", augment_recipe.crop_aspect_min},
                  {"crop_aspect_max", augment_recipe.crop_aspect_max},
                  {"flip_prob", augment_recipe.flip_prob},
                  {"jitter_prob", augment_recipe.jitter_prob},
                  {"jitter_strength", augment_recipe.jitter_strength},
                  {"grayscale_prob", augment_recipe.grayscale_prob},
                  {"blur_prob", augment_recipe.blur_prob}};
  json corr = json::array();
  for (const eval::CorruptionSpec& s : eval.corruptions)
    corr.push_back({{"kind", eval::to_string(s.kind)},
                    {"severity", s.severity}});
  j["eval"] = {{"knn_k", eval.knn_k},
               {"knn_temperature", eval.knn_temperature},
               {"knn_every", eval.knn_every},
               {"probe_grid", eval.probe_grid},
               {"probe_epochs", eval.probe_epochs},
               {"corruptions", corr},
               {"depth_mode", eval.depth_mode}};
  return j.dump(2);
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"dataset", "depth", "views", "backbone", "feature_dim",
                  "method", "optim", "augment", "eval"},
                 "config");
  RunConfig cfg;
  try {
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      reject_unknown(d,
                     {"root", "type", "image_size", "synthetic_train",
                      "synthetic_val", "synthetic_distractor_prob",
                      "synthetic_seed"},
                     "dataset");
      maybe(d, "root", cfg.dataset.root);
      maybe(d, "type", cfg.dataset.type);
      maybe(d, "image_size", cfg.dataset.image_size);
      maybe(d, "synthetic_train", cfg.dataset.synthetic_train);
      maybe(d, "synthetic_val", cfg.dataset.synthetic_val);
      maybe(d, "synthetic_distractor_prob",
            cfg.dataset.synthetic_distractor_prob);
      maybe(d, "synthetic_seed", cfg.dataset.synthetic_seed);
    }
    if (j.contains("depth")) {
      const json& d = j["depth"];
      reject_unknown(d, {"use_depth", "provider", "command", "dropout_p",
                         "adapter_init"},
                     "depth");
      maybe(d, "use_depth", cfg.depth.use_depth);
      maybe(d, "provider", cfg.depth.provider);
      maybe(d, "command", cfg.depth.command);
      maybe(d, "dropout_p", cfg.depth.dropout_p);
      maybe(d, "adapter_init", cfg.depth.adapter_init);
    }
    if (j.contains("views")) {
      const json& v = j["views"];
      reject_unknown(v,
                     {"enabled", "k", "range_x", "range_y", "range_z", "q",
                      "num_planes", "depth_near", "depth_far"},
                     "views");
      maybe(v, "enabled", cfg.views.enabled);
      maybe(v, "k", cfg.views.k);
      maybe(v, "range_x", cfg.views.range_x);
      maybe(v, "range_y", cfg.views.range_y);
      maybe(v, "range_z", cfg.views.range_z);
      maybe(v, "q", cfg.views.q);
      maybe(v, "num_planes", cfg.views.num_planes);
      maybe(v, "depth_near", cfg.views.depth_near);
      maybe(v, "depth_far", cfg.views.depth_far);
    }
    maybe(j, "backbone", cfg.backbone);
    maybe(j, "feature_dim", cfg.feature_dim);
    if (j.contains("method")) cfg.method = method_from_json(j["method"]);
    if (j.contains("optim")) {
      const json& o = j["optim"];
      reject_unknown(o,
                     {"optimizer", "lr", "momentum", "weight_decay", "epochs",
                      "batch_size", "seed"},
                     "optim");
      maybe(o, "optimizer", cfg.optim.optimizer);
      maybe(o, "lr", cfg.optim.lr);
      maybe(o, "momentum", cfg.optim.momentum);
      maybe(o, "weight_decay", cfg.optim.weight_decay);
      maybe(o, "epochs", cfg.optim.epochs);
      maybe(o, "batch_size", cfg.optim.batch_size);
      maybe(o, "seed", cfg.optim.seed);
    }
    if (j.contains("augment")) {
      const json& a = j["augment"];
      reject_unknown(a,
                     {"crop_scale_min", "crop_scale_max", "crop_aspect_min",
                      "crop_aspect_max", "flip_prob", "jitter_prob",
                      "jitter_strength", "grayscale_prob", "blur_prob"},
                     "augment");
      maybe(a, "crop_scale_min", cfg.augment_recipe.crop_scale_min);
      maybe(a, "crop_scale_max", cfg.augment_recipe.crop_scale_max);
      maybe(a, "crop_aspect_min", cfg.augment_recipe.crop_aspect_min);
      maybe(a, "crop_aspect_max", cfg.augment_recipe.crop_aspect_max);
      maybe(a, "flip_prob", cfg.augment_recipe.flip_prob);
      maybe(a, "jitter_prob", cfg.augment_recipe.jitter_prob);
      maybe(a, "jitter_strength", cfg.augment_recipe.jitter_strength);
      maybe(a, "grayscale_prob", cfg.augment_recipe.grayscale_prob);
      maybe(a, "blur_prob", cfg.augment_recipe.blur_prob);
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      reject_unknown(e,
                     {"knn_k", "knn_temperature", "knn_every", "probe_grid",
                      "probe_epochs", "corruptions", "depth_mode"},
                     "eval");
      maybe(e, "knn_k", cfg.eval.knn_k);
      maybe(e, "knn_temperature", cfg.eval.knn_temperature);
      maybe(e, "knn_every", cfg.eval.knn_every);
      maybe(e, "probe_grid", cfg.eval.probe_grid);
      maybe(e, "probe_epochs", cfg.eval.probe_epochs);
      maybe(e, "depth_mode", cfg.eval.depth_mode);
      if (e.contains("corruptions")) {
        for (const json& c : e["corruptions"]) {
          reject_unknown(c, {"kind", "severity"}, "eval.corruptions[]");
          eval::CorruptionSpec spec;
          spec.kind = eval::corruption_from_string(c.at("kind").get<std::string>());
          spec.severity = c.at("severity").get<int>();
          cfg.eval.corruptions.push_back(spec);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.augment_recipe.out_size = cfg.dataset.image_size;
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  return parse_config(io::read_text_file(path));
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key.path=value: " + kv);
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);

    json value;
    try {
      value = json::parse(raw);  // numbers, booleans, arrays
    } catch (const json::exception&) {
      value = raw;  // plain string
    }

    json* node = &j;
    size_t start = 0;
    while (true) {
      const size_t dot = path.find('.', start);
      const std::string key = path.substr(
          start, dot == std::string::npos ? std::string::npos : dot - start);
      if (key.empty()) throw ConfigError("bad override path: " + path);
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  return j.dump();
}

std::string run_directory_name(const RunConfig& cfg) {
  const std::string dataset_name =
      fs::path(cfg.dataset.root).filename().string();
  // nlohmann::json serializes objects with sorted keys, so the dump (and
  // hence the hash) is independent of key order in the source document.
  const std::uint64_t h = fnv1a(cfg.to_json());
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%08x",
                static_cast<unsigned>(h & 0xffffffffu));
  return ssl::method_name(cfg.method) + "_" +
         (dataset_name.empty() ? "data" : dataset_name) + "_" +
         std::to_string(cfg.optim.seed) + "_" + hex;
}

}  // namespace dssl::config
