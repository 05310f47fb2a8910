#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dssl/data.hpp"
#include "dssl/encoders.hpp"
#include "dssl/image.hpp"
#include "dssl/nn.hpp"
#include "dssl/rng.hpp"

namespace dssl::eval {

// ---- corruptions ----

enum class Corruption {
  gaussian_noise, shot_noise, impulse_noise,
  defocus_blur, motion_blur,
  brightness, contrast,
  pixelate, jpeg
};

Corruption corruption_from_string(const std::string& s);
std::string to_string(Corruption kind);
const std::vector<Corruption>& all_corruptions();
std::string category_of(Corruption kind);  // noise / blur / weather / digital

struct CorruptionSpec {
  Corruption kind = Corruption::gaussian_noise;
  int severity = 3;  // 1..5
  void validate() const;
};

// Published severity schedules; the config reference documents these so
// corrupted evaluations are bit-reproducible.
namespace schedules {
inline constexpr std::array<double, 5> gaussian_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
inline constexpr std::array<double, 5> shot_photons{60.0, 40.0, 25.0, 15.0, 8.0};
inline constexpr std::array<double, 5> impulse_rate{0.02, 0.04, 0.06, 0.09, 0.14};
inline constexpr std::array<int, 5> defocus_radius{1, 2, 3, 5, 7};
inline constexpr std::array<int, 5> motion_length{3, 5, 7, 9, 12};
inline constexpr std::array<double, 5> brightness_delta{0.1, 0.2, 0.3, 0.4, 0.5};
inline constexpr std::array<double, 5> contrast_factor{0.75, 0.6, 0.45, 0.3, 0.2};
inline constexpr std::array<double, 5> pixelate_scale{0.6, 0.5, 0.4, 0.3, 0.25};
inline constexpr std::array<int, 5> jpeg_quality{25, 18, 15, 10, 7};
}  // namespace schedules

Image corrupt(const Image& image, const CorruptionSpec& spec, Rng& rng);

// Parametrized generators behind the severity schedules.
namespace detail {
Image gaussian_noise(const Image& img, double sigma, Rng& rng);
Image shot_noise(const Image& img, double photons, Rng& rng);
Image impulse_noise(const Image& img, double rate, Rng& rng);
Image defocus_blur(const Image& img, int radius);
Image motion_blur(const Image& img, int length, double angle_rad);
Image brightness(const Image& img, double delta);
Image contrast(const Image& img, double factor);
Image pixelate(const Image& img, double scale);
Image jpeg_roundtrip(const Image& img, int quality);
}  // namespace detail

// ---- classifiers over frozen features ----

// Cosine-similarity weighted kNN vote, weights exp(sim / temperature).
// Neighbor ties break toward the lower index, class-score ties toward the
// smaller class id. Returns accuracy in [0, 100].
double knn_eval(const nn::Tensor& train_x, const std::vector<int>& train_y,
                const nn::Tensor& test_x, const std::vector<int>& test_y,
                int k, double temperature);

// Per-sample predictions (used by the report path).
std::vector<int> knn_predict(const nn::Tensor& train_x,
                             const std::vector<int>& train_y,
                             const nn::Tensor& test_x, int k,
                             double temperature);

struct ProbeResult {
  double best_lr = 0.0;
  double best_accuracy = 0.0;
  std::vector<std::pair<double, double>> per_lr;  // (lr, accuracy)
  std::vector<std::string> warnings;
};

// Trains one linear head per grid learning rate (SGD, momentum 0.9) on
// frozen features; returns the best validation accuracy and its lr.
// Non-finite losses skip that lr with a warning.
ProbeResult linear_probe(const nn::Tensor& train_x,
                         const std::vector<int>& train_y,
                         const nn::Tensor& val_x, const std::vector<int>& val_y,
                         const std::vector<double>& lr_grid, int epochs,
                         int batch_size, std::uint64_t seed);

// ---- robustness evaluation ----

enum class DepthMode { sidecar, zero, provider };
DepthMode depth_mode_from_string(const std::string& s);
std::string to_string(DepthMode mode);

struct EvalCell {
  Corruption kind;
  int severity;
  double accuracy;
};

struct EvalReport {
  double top1_clean = 0.0;
  std::vector<EvalCell> cells;
  std::map<std::string, double> category_means;
  double corrupted_mean = 0.0;  // uniform over all (kind, severity) cells
  std::string config_echo;      // JSON
  std::uint64_t seed = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  std::string to_csv() const;
  std::string to_table() const;  // plain-text summary
};

// Recomputes category means and the overall mean from cells.
void aggregate(EvalReport& report);

struct RobustnessConfig {
  std::vector<CorruptionSpec> specs;
  DepthMode depth_mode = DepthMode::sidecar;
  int knn_k = 20;
  double knn_temperature = 0.1;
  std::uint64_t seed = 0;
  int batch_size = 128;
  std::string config_echo;  // copied into the report
};

// Builds a clean-train kNN bank, evaluates the clean val split and every
// (kind, severity) cell. For 4-channel encoders depth_mode selects the
// depth fed at evaluation; per-image corruption rngs depend only on
// (seed, kind, severity, index) so single cells match full grids.
EvalReport robustness_eval(ssl::Backbone& encoder,
                           const data::DatasetManifest& train,
                           const data::DatasetManifest& val,
                           const RobustnessConfig& cfg,
                           data::DepthProvider* provider = nullptr);

// Stacks an image (+ optional depth channel) into a [C,H,W] input tensor.
nn::Tensor to_input_tensor(const Image& rgb, const DepthMap* depth,
                           int in_channels);

}  // namespace dssl::eval
