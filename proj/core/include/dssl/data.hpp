#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dssl/augment.hpp"
#include "dssl/geometry.hpp"
#include "dssl/image.hpp"
#include "dssl/rng.hpp"

namespace dssl::data {

struct ManifestEntry {
  std::string image_path;
  std::string depth_path;  // empty when absent
  std::string bank_dir;    // empty when absent
  std::string relpath;     // split/class/stem, used for bank layout and seeds
  int label = 0;
};

struct DatasetManifest {
  std::string root;
  std::string split;  // "train" or "val"
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

struct LoadConfig {
  bool verify_shapes = true;  // check depth sidecars match image sizes
};

// Folder-per-class layout: root/{split}/{class}/*.png with optional *.dpt
// sidecars. Entries are ordered lexicographically by path.
DatasetManifest load_dataset(const std::string& root, const std::string& split,
                             const LoadConfig& cfg = {});

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

// ---- synthetic RGB-D dataset ----

enum class ShapeKind {
  circle, ring, square, triangle, cross, diamond, hbars, checker
};
constexpr int kSyntheticClassCount = 8;
const char* shape_name(ShapeKind kind);

struct SyntheticLayer {
  ShapeKind shape = ShapeKind::circle;
  float color[3] = {0, 0, 0};
  float disparity = 0.0f;  // in (0, 1]; larger = nearer
  double center_x = 0.5, center_y = 0.5;  // unit coordinates
  double scale = 0.35;                    // radius as a fraction of canvas
};

struct SyntheticSceneSpec {
  int canvas = 32;
  float background[3] = {0, 0, 0};
  float background_disparity = 0.05f;
  std::vector<SyntheticLayer> layers;  // ordered far to near
  int class_id = 0;
};

struct SyntheticConfig {
  int canvas = 32;
  double distractor_prob = 0.25;
  std::uint64_t seed = 0;
};

// Deterministic scene draw for sample index `index` of class `index % 8`.
SyntheticSceneSpec sample_scene(const SyntheticConfig& cfg, int split_id,
                                int index);
// Renders RGB and the exact per-pixel disparity map.
std::pair<Image, DepthMap> render_scene(const SyntheticSceneSpec& spec);

// Writes train/val folders with images, exact depth sidecars and balanced
// labels. Regeneration with the same seed is byte-identical.
void generate_synthetic_dataset(const SyntheticConfig& cfg, int n_train,
                                int n_val, const std::string& out_root);

// ---- view banks ----

struct ViewBankConfig {
  int k = 50;
  double range_x = 0.5, range_y = 0.5, range_z = 0.0;
  geometry::RenderConfig render;
  std::uint64_t seed = 0;
};

struct ViewBankResult {
  int built = 0;
  int skipped = 0;
  std::vector<std::string> errors;  // per-sample failures; the run continues
};

// Renders k views per sample into root/.viewbank/{relpath}/view_{i}.png with
// a views.json listing the camera shifts. Idempotent: complete entries are
// skipped, and per-sample seeds depend only on (seed, relpath).
ViewBankResult build_view_bank(DatasetManifest& manifest,
                               const ViewBankConfig& cfg);

// Loads views.json for an entry; the returned bank decodes PNGs on demand.
augment::ViewBank open_view_bank(const std::string& bank_dir);

// ---- depth providers ----

class DepthProvider {
 public:
  virtual ~DepthProvider() = default;
  virtual DepthMap depth_for(const Image& rgb, const ManifestEntry& entry) = 0;
  virtual std::string name() const = 0;
};

// Reads the entry's .dpt sidecar.
std::unique_ptr<DepthProvider> make_sidecar_provider();
// All-zero depth (the "no depth at inference" ablation).
std::unique_ptr<DepthProvider> make_zero_provider();
// Runs `command <in.png> <out.dpt>` on the (possibly corrupted) image; the
// hook point for an external monocular estimator.
std::unique_ptr<DepthProvider> make_command_provider(const std::string& command,
                                                     const std::string& tmp_dir);

// Loads image + optional depth + optional bank for one entry.
augment::TrainSample load_sample(const ManifestEntry& entry);

}  // namespace dssl::data
