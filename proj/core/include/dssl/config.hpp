#pragma once

#include <string>
#include <vector>

#include "dssl/augment.hpp"
#include "dssl/eval.hpp"
#include "dssl/ssl.hpp"

namespace dssl::config {

struct DatasetSection {
  std::string root;
  std::string type = "folder";  // "folder" or "synthetic"
  int image_size = 32;
  // Used when type == "synthetic" and root does not exist yet.
  int synthetic_train = 800;
  int synthetic_val = 200;
  double synthetic_distractor_prob = 0.25;
  std::uint64_t synthetic_seed = 0;
};

struct DepthSection {
  bool use_depth = false;
  std::string provider = "sidecar";  // sidecar | zero | command
  std::string command;               // for provider == "command"
  double dropout_p = 0.5;
  std::string adapter_init = "zero";  // zero | mean_rgb
};

struct ViewsSection {
  bool enabled = false;
  int k = 50;
  double range_x = 0.5, range_y = 0.5, range_z = 0.0;
  double q = 1.0;
  int num_planes = 32;
  double depth_near = 1.0, depth_far = 100.0;
};

struct EvalSection {
  int knn_k = 20;
  double knn_temperature = 0.1;
  int knn_every = 0;  // epochs between kNN validations during pretraining
  std::vector<double> probe_grid = {0.2, 0.5, 0.8, 5.0};
  int probe_epochs = 100;
  std::vector<eval::CorruptionSpec> corruptions;  // empty = full grid
  std::string depth_mode = "sidecar";
};

struct RunConfig {
  DatasetSection dataset;
  DepthSection depth;
  ViewsSection views;
  std::string backbone = "tiny_conv";
  int feature_dim = 128;
  ssl::MethodConfig method = ssl::ByolConfig{};
  ssl::OptimConfig optim;
  augment::BaseAugRecipe augment_recipe;
  EvalSection eval;

  void validate(bool check_paths) const;
  augment::AugmentationPolicy policy() const;
  ssl::EncoderSpec encoder_spec() const;

  // Fully resolved config: every behavior-affecting default appears.
  std::string to_json() const;
};

// Parses a config JSON document; unknown keys anywhere are rejected.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

// Applies dotted-key overrides ("optim.lr=0.02") onto the JSON document
// before parsing.
std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides);

// {method}_{dataset}_{seed}_{hash(config)} — stable across reorderings of
// the config document.
std::string run_directory_name(const RunConfig& cfg);

}  // namespace dssl::config
