#include "dssl/data.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>

#include "dssl/io.hpp"
#include "nlohmann/json.hpp"

namespace dssl::data {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetManifest load_dataset(const std::string& root, const std::string& split,
                             const LoadConfig& cfg) {
  const fs::path split_dir = fs::path(root) / split;
  if (!fs::is_directory(split_dir))
    throw IoError("dataset split directory not found: " + split_dir.string());

  DatasetManifest m;
  m.root = root;
  m.split = split;

  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory()) m.class_names.push_back(e.path().filename().string());
  std::sort(m.class_names.begin(), m.class_names.end());
  if (m.class_names.empty())
    throw IoError("dataset has no class directories under " +
                  split_dir.string());

  for (size_t label = 0; label < m.class_names.size(); ++label) {
    const fs::path class_dir = split_dir / m.class_names[label];
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(class_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png")
        files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) {
      ManifestEntry entry;
      entry.image_path = f;
      entry.label = static_cast<int>(label);
      const fs::path p(f);
      entry.relpath =
          (fs::path(split) / m.class_names[label] / p.stem()).string();

      fs::path depth = p;
      depth.replace_extension(".dpt");
      if (fs::exists(depth)) {
        entry.depth_path = depth.string();
        if (cfg.verify_shapes) {
          const auto [ih, iw] = io::png_size(f);
          const auto [dh, dw] = io::depth_size(entry.depth_path);
          if (ih != dh || iw != dw)
            throw ShapeError("depth sidecar size mismatch for " + f);
        }
      }
      const fs::path bank = fs::path(root) / ".viewbank" / entry.relpath;
      if (fs::exists(bank / "views.json")) entry.bank_dir = bank.string();
      m.entries.push_back(std::move(entry));
    }
  }
  if (m.entries.empty())
    throw IoError("dataset is empty under " + split_dir.string());
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["root"] = m.root;
  j["split"] = m.split;
  j["class_names"] = m.class_names;
  json entries = json::array();
  for (const ManifestEntry& e : m.entries)
    entries.push_back({{"image", e.image_path},
                       {"depth", e.depth_path},
                       {"bank", e.bank_dir},
                       {"relpath", e.relpath},
                       {"label", e.label}});
  j["entries"] = std::move(entries);
  return j.dump(2);
}

DatasetManifest manifest_from_json(const std::string& text) {
  const json j = json::parse(text);
  DatasetManifest m;
  m.root = j.at("root").get<std::string>();
  m.split = j.at("split").get<std::string>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const json& e : j.at("entries")) {
    ManifestEntry entry;
    entry.image_path = e.at("image").get<std::string>();
    entry.depth_path = e.at("depth").get<std::string>();
    entry.bank_dir = e.at("bank").get<std::string>();
    entry.relpath = e.at("relpath").get<std::string>();
    entry.label = e.at("label").get<int>();
    m.entries.push_back(std::move(entry));
  }
  return m;
}

// ---- synthetic dataset ----

const char* shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::ring: return "ring";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::cross: return "cross";
    case ShapeKind::diamond: return "diamond";
    case ShapeKind::hbars: return "hbars";
    case ShapeKind::checker: return "checker";
  }
  return "unknown";
}

namespace {

bool inside_shape(ShapeKind kind, double u, double v) {
  // (u, v) in [-1, 1]^2 relative to the layer's center and scale.
  const double r = std::sqrt(u * u + v * v);
  switch (kind) {
    case ShapeKind::circle: return r <= 1.0;
    case ShapeKind::ring: return r <= 1.0 && r >= 0.55;
    case ShapeKind::square: return std::abs(u) <= 0.9 && std::abs(v) <= 0.9;
    case ShapeKind::triangle:
      return v >= -0.85 && std::abs(u) <= (v + 0.85) * 0.6;
    case ShapeKind::cross:
      return (std::abs(u) <= 0.33 && std::abs(v) <= 1.0) ||
             (std::abs(v) <= 0.33 && std::abs(u) <= 1.0);
    case ShapeKind::diamond: return std::abs(u) + std::abs(v) <= 1.1;
    case ShapeKind::hbars:
      return std::abs(u) <= 0.95 &&
             (std::abs(v - 0.5) <= 0.22 || std::abs(v + 0.5) <= 0.22);
    case ShapeKind::checker:
      return std::abs(u) <= 0.95 && std::abs(v) <= 0.95 && (u * v >= 0.0);
  }
  return false;
}

void hsv_color(double h, double s, double v, float* out) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  double r, g, b;
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  out[0] = static_cast<float>(r);
  out[1] = static_cast<float>(g);
  out[2] = static_cast<float>(b);
}

}  // namespace

SyntheticSceneSpec sample_scene(const SyntheticConfig& cfg, int split_id,
                                int index) {
  Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(split_id),
                   static_cast<std::uint64_t>(index)));
  SyntheticSceneSpec spec;
  spec.canvas = cfg.canvas;
  spec.class_id = index % kSyntheticClassCount;

  // Backgrounds come from a small shared low-saturation palette. A unique
  // per-image background color would be a trivially learnable instance
  // signature that lets the contrastive objective ignore the shapes.
  const double palette[4] = {0.35, 0.45, 0.55, 0.65};
  const double bg_value = palette[rng.uniform_int(4)] + rng.uniform(-0.03, 0.03);
  hsv_color(rng.uniform(), rng.uniform(0.0, 0.08), bg_value, spec.background);
  spec.background_disparity = static_cast<float>(rng.uniform(0.02, 0.12));

  // Optional small distractor at mid depth, drawn from any shape class.
  if (rng.bernoulli(cfg.distractor_prob)) {
    SyntheticLayer d;
    d.shape = static_cast<ShapeKind>(rng.uniform_int(kSyntheticClassCount));
    hsv_color(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0),
              d.color);
    d.disparity = static_cast<float>(rng.uniform(0.3, 0.5));
    d.center_x = rng.uniform(0.15, 0.85);
    d.center_y = rng.uniform(0.15, 0.85);
    d.scale = rng.uniform(0.08, 0.16);
    spec.layers.push_back(d);
  }

  SyntheticLayer fg;
  fg.shape = static_cast<ShapeKind>(spec.class_id);
  // Class identity correlates with both silhouette and a broad hue band,
  // the way natural classes couple shape with color statistics. The bands
  // overlap by design: hue alone is a noisy cue, the silhouette resolves it.
  const double hue =
      (spec.class_id + rng.uniform(-1.4, 1.4)) / kSyntheticClassCount;
  hsv_color(hue, rng.uniform(0.65, 1.0), rng.uniform(0.75, 1.0), fg.color);
  fg.disparity = static_cast<float>(rng.uniform(0.55, 0.95));
  fg.center_x = rng.uniform(0.38, 0.62);
  fg.center_y = rng.uniform(0.38, 0.62);
  fg.scale = rng.uniform(0.28, 0.42);
  spec.layers.push_back(fg);
  return spec;
}

std::pair<Image, DepthMap> render_scene(const SyntheticSceneSpec& spec) {
  const int n = spec.canvas;
  Image rgb(3, n, n);
  DepthMap depth(n, n);

  // Mild diagonal shading keeps backgrounds from being exactly constant.
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const float shade =
          0.92f + 0.08f * static_cast<float>(x + y) / (2.0f * (n - 1));
      for (int c = 0; c < 3; ++c)
        rgb.at(c, y, x) = std::min(1.0f, spec.background[c] * shade);
      depth.at(y, x) = spec.background_disparity;
    }

  for (const SyntheticLayer& layer : spec.layers) {
    const double cx = layer.center_x * n;
    const double cy = layer.center_y * n;
    const double radius = layer.scale * n;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = (x + 0.5 - cx) / radius;
        const double v = (y + 0.5 - cy) / radius;
        if (std::abs(u) > 1.3 || std::abs(v) > 1.3) continue;
        if (!inside_shape(layer.shape, u, v)) continue;
        if (layer.disparity <= depth.at(y, x)) continue;  // occluded
        for (int c = 0; c < 3; ++c) rgb.at(c, y, x) = layer.color[c];
        depth.at(y, x) = layer.disparity;
      }
  }
  return {std::move(rgb), std::move(depth)};
}

void generate_synthetic_dataset(const SyntheticConfig& cfg, int n_train,
                                int n_val, const std::string& out_root) {
  if (n_train < 1 || n_val < 1)
    throw ValidationError("generate_synthetic_dataset: need n_train, n_val >= 1");
  const struct {
    const char* split;
    int split_id;
    int count;
  } splits[2] = {{"train", 0, n_train}, {"val", 1, n_val}};

  for (const auto& s : splits) {
    for (int i = 0; i < s.count; ++i) {
      const SyntheticSceneSpec spec = sample_scene(cfg, s.split_id, i);
      const fs::path dir = fs::path(out_root) / s.split /
                           shape_name(static_cast<ShapeKind>(spec.class_id));
      fs::create_directories(dir);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "img_%05d", i);
      auto [rgb, depth] = render_scene(spec);
      io::write_png((dir / (std::string(stem) + ".png")).string(), rgb);
      io::write_depth((dir / (std::string(stem) + ".dpt")).string(), depth);
    }
  }
}

// ---- view banks ----

ViewBankResult build_view_bank(DatasetManifest& manifest,
                               const ViewBankConfig& cfg) {
  if (cfg.k < 1) throw ValidationError("view bank: k must be >= 1");
  ViewBankResult result;

  for (ManifestEntry& entry : manifest.entries) {
    const fs::path bank_dir =
        fs::path(manifest.root) / ".viewbank" / entry.relpath;
    const fs::path done = bank_dir / "views.json";
    if (fs::exists(done)) {
      // Complete entries are left untouched.
      ++result.skipped;
      entry.bank_dir = bank_dir.string();
      continue;
    }
    if (entry.depth_path.empty()) {
      result.errors.push_back(entry.image_path + ": no depth sidecar");
      continue;
    }

    try {
      const Image rgb = io::read_png(entry.image_path);
      const DepthMap depth = io::read_depth(entry.depth_path);

      // Seeded by relpath so interrupted and fresh runs agree per sample.
      Rng rng(Rng::mix(cfg.seed, fnv1a(entry.relpath)));
      const fs::path tmp_dir = bank_dir.string() + ".tmp";
      fs::remove_all(tmp_dir);
      fs::create_directories(tmp_dir);

      json views = json::array();
      for (int i = 0; i < cfg.k; ++i) {
        geometry::ViewSpec view;
        view.x_shift = rng.uniform(-cfg.range_x, cfg.range_x);
        view.y_shift = rng.uniform(-cfg.range_y, cfg.range_y);
        view.z_shift = rng.uniform(-cfg.range_z, cfg.range_z);
        const geometry::RenderResult rendered =
            geometry::render_novel_view(rgb, depth, view, cfg.render);
        io::write_png(
            (tmp_dir / ("view_" + std::to_string(i) + ".png")).string(),
            rendered.color);
        views.push_back({{"idx", i},
                         {"x", view.x_shift},
                         {"y", view.y_shift},
                         {"z", view.z_shift}});
      }
      io::write_text_file((tmp_dir / "views.json").string(),
                          json({{"k", cfg.k}, {"views", views}}).dump(2));
      fs::remove_all(bank_dir);
      fs::rename(tmp_dir, bank_dir);
      entry.bank_dir = bank_dir.string();
      ++result.built;
    } catch (const std::exception& e) {
      result.errors.push_back(entry.image_path + ": " + e.what());
    }
  }
  return result;
}

augment::ViewBank open_view_bank(const std::string& bank_dir) {
  const json j = json::parse(io::read_text_file(
      (fs::path(bank_dir) / "views.json").string()));
  augment::ViewBank bank;
  bank.k = j.at("k").get<int>();
  bank.specs.resize(bank.k);
  for (const json& v : j.at("views")) {
    const int idx = v.at("idx").get<int>();
    if (idx < 0 || idx >= bank.k)
      throw IoError("views.json: index out of range in " + bank_dir);
    bank.specs[idx] = {v.at("x").get<double>(), v.at("y").get<double>(),
                       v.at("z").get<double>()};
  }
  bank.get = [bank_dir](int idx) {
    return io::read_png(
        (fs::path(bank_dir) / ("view_" + std::to_string(idx) + ".png"))
            .string());
  };
  return bank;
}

// ---- depth providers ----

namespace {

class SidecarProvider : public DepthProvider {
 public:
  DepthMap depth_for(const Image&, const ManifestEntry& entry) override {
    if (entry.depth_path.empty())
      throw ConfigError("sidecar depth requested but entry has none: " +
                        entry.image_path);
    return io::read_depth(entry.depth_path);
  }
  std::string name() const override { return "sidecar"; }
};

class ZeroProvider : public DepthProvider {
 public:
  DepthMap depth_for(const Image& rgb, const ManifestEntry&) override {
    return DepthMap(rgb.height, rgb.width);
  }
  std::string name() const override { return "zero"; }
};

class CommandProvider : public DepthProvider {
 public:
  CommandProvider(std::string command, std::string tmp_dir)
      : command_(std::move(command)), tmp_dir_(std::move(tmp_dir)) {
    fs::create_directories(tmp_dir_);
  }

  DepthMap depth_for(const Image& rgb, const ManifestEntry& entry) override {
    const fs::path in = fs::path(tmp_dir_) /
                        ("in_" + std::to_string(counter_) + ".png");
    const fs::path out = fs::path(tmp_dir_) /
                         ("out_" + std::to_string(counter_) + ".dpt");
    ++counter_;
    io::write_png(in.string(), rgb);
    const std::string cmd =
        command_ + " " + in.string() + " " + out.string();
    const int rc = std::system(cmd.c_str());
    if (rc != 0)
      throw IoError("depth command failed (" + std::to_string(rc) + "): " +
                    cmd + " (for " + entry.image_path + ")");
    DepthMap d = io::read_depth(out.string());
    fs::remove(in);
    fs::remove(out);
    return normalize_depth(d);
  }
  std::string name() const override { return "command"; }

 private:
  std::string command_;
  std::string tmp_dir_;
  std::int64_t counter_ = 0;
};

}  // namespace

std::unique_ptr<DepthProvider> make_sidecar_provider() {
  return std::make_unique<SidecarProvider>();
}

std::unique_ptr<DepthProvider> make_zero_provider() {
  return std::make_unique<ZeroProvider>();
}

std::unique_ptr<DepthProvider> make_command_provider(const std::string& command,
                                                     const std::string& tmp_dir) {
  return std::make_unique<CommandProvider>(command, tmp_dir);
}

augment::TrainSample load_sample(const ManifestEntry& entry) {
  augment::TrainSample s;
  s.rgb = io::read_png(entry.image_path);
  if (!entry.depth_path.empty()) s.depth = io::read_depth(entry.depth_path);
  if (!entry.bank_dir.empty()) s.bank = open_view_bank(entry.bank_dir);
  return s;
}

}  // namespace dssl::data
