#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cli.hpp"
#include "dssl/io.hpp"
#include "nlohmann/json.hpp"

namespace dssl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct LoadedSample {
  augment::TrainSample sample;
  int label = 0;
};

LoadedSample load_for_training(const data::ManifestEntry& entry,
                               const augment::AugmentationPolicy& policy) {
  LoadedSample out;
  out.sample.rgb = io::read_png(entry.image_path);
  out.label = entry.label;
  if (policy.use_depth) {
    if (entry.depth_path.empty())
      throw ConfigError("depth requested but no sidecar for " +
                        entry.image_path);
    out.sample.depth = io::read_depth(entry.depth_path);
  }
  if (policy.use_3d_views) {
    if (entry.bank_dir.empty())
      throw ConfigError("3d views requested but no view bank for " +
                        entry.image_path + " (run `dssl viewbank` first)");
    out.sample.bank = data::open_view_bank(entry.bank_dir);
  }
  return out;
}

nn::Tensor stack_views(const std::vector<const augment::AugmentedView*>& views,
                       int in_channels) {
  const augment::AugmentedView& first = *views.front();
  const int h = first.rgb.height, w = first.rgb.width;
  const int b = static_cast<int>(views.size());
  nn::Tensor out(nn::Shape{b, in_channels, h, w});
  const size_t npix = static_cast<size_t>(h) * w;
  for (int i = 0; i < b; ++i) {
    const augment::AugmentedView& v = *views[i];
    if (v.rgb.height != h || v.rgb.width != w)
      throw ShapeError("stack_views: inconsistent view sizes");
    double* dst = out.ptr() + static_cast<size_t>(i) * in_channels * npix;
    for (int c = 0; c < 3; ++c)
      for (size_t p = 0; p < npix; ++p)
        dst[static_cast<size_t>(c) * npix + p] = v.rgb.plane(c)[p];
    if (in_channels == 4) {
      if (v.depth) {
        for (size_t p = 0; p < npix; ++p)
          dst[static_cast<size_t>(3) * npix + p] = v.depth->values[p];
      } else {
        std::fill(dst + 3 * npix, dst + 4 * npix, 0.0);
      }
    }
  }
  return out;
}

std::optional<double> knn_validation(ssl::TrainState& state,
                                     const config::RunConfig& cfg,
                                     const data::DatasetManifest& train,
                                     const data::DatasetManifest& val) {
  auto features_of = [&](const data::DatasetManifest& m,
                         std::vector<int>& labels) {
    std::vector<nn::Tensor> inputs;
    inputs.reserve(m.entries.size());
    const int in_ch = state.encoder_spec.in_channels;
    for (const data::ManifestEntry& e : m.entries) {
      const Image rgb = io::read_png(e.image_path);
      if (in_ch == 4) {
        DepthMap depth = e.depth_path.empty()
                             ? DepthMap(rgb.height, rgb.width)
                             : io::read_depth(e.depth_path);
        inputs.push_back(eval::to_input_tensor(rgb, &depth, 4));
      } else {
        inputs.push_back(eval::to_input_tensor(rgb, nullptr, 3));
      }
      labels.push_back(e.label);
    }
    return ssl::extract_features(*state.online_backbone, inputs, 128);
  };
  std::vector<int> train_y, val_y;
  const nn::Tensor train_x = features_of(train, train_y);
  const nn::Tensor val_x = features_of(val, val_y);
  const int k = std::min(cfg.eval.knn_k, train_x.dim(0));
  return eval::knn_eval(train_x, train_y, val_x, val_y, k,
                        cfg.eval.knn_temperature);
}

void rewrite_metrics_up_to(const std::string& path, std::int64_t epoch_limit) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("epoch").get<std::int64_t>() < epoch_limit) kept += line + "\n";
    } catch (const json::exception&) {
      // A kill mid-write can leave a torn last line; drop it.
    }
  }
  in.close();
  io::write_text_file(path, kept);
}

}  // namespace

void ensure_dataset(const config::RunConfig& cfg) {
  if (cfg.dataset.type == "synthetic" &&
      !fs::exists(fs::path(cfg.dataset.root) / "train")) {
    data::SyntheticConfig synth;
    synth.canvas = cfg.dataset.image_size;
    synth.distractor_prob = cfg.dataset.synthetic_distractor_prob;
    synth.seed = cfg.dataset.synthetic_seed;
    data::generate_synthetic_dataset(synth, cfg.dataset.synthetic_train,
                                     cfg.dataset.synthetic_val,
                                     cfg.dataset.root);
  }
}

PretrainOutcome pretrain(const config::RunConfig& cfg,
                         const std::string& out_root, int stop_after) {
  cfg.validate(false);
  ensure_dataset(cfg);
  // Path validation runs after synthetic generation may have created root.
  cfg.validate(true);

  const fs::path run_dir = fs::path(out_root) / config::run_directory_name(cfg);
  fs::create_directories(run_dir);
  io::write_text_file((run_dir / "config.json").string(), cfg.to_json());

  data::DatasetManifest train = data::load_dataset(cfg.dataset.root, "train");
  data::DatasetManifest val = data::load_dataset(cfg.dataset.root, "val");

  const augment::AugmentationPolicy policy = cfg.policy();
  const bool is_swav = std::holds_alternative<ssl::SwavConfig>(cfg.method);
  augment::MultiCropPlan crop_plan;
  if (is_swav) {
    const auto& swav = std::get<ssl::SwavConfig>(cfg.method);
    crop_plan.n_local = swav.n_local_crops;
    crop_plan.local_size = swav.local_size;
  }

  const std::string ckpt_path = (run_dir / "last.ckpt").string();
  const std::string metrics_path = (run_dir / "metrics.jsonl").string();

  ssl::TrainState state = fs::exists(ckpt_path)
                              ? ssl::load_checkpoint(ckpt_path)
                              : ssl::TrainState::init(cfg.encoder_spec(),
                                                      cfg.method, cfg.optim);
  const int n = static_cast<int>(train.entries.size());
  const int batch = std::min(cfg.optim.batch_size, n);
  const std::int64_t steps_per_epoch = (n + batch - 1) / batch;
  state.total_steps = steps_per_epoch * cfg.optim.epochs;
  rewrite_metrics_up_to(metrics_path, state.epoch);

  PretrainOutcome outcome;
  outcome.run_dir = run_dir.string();

  std::ofstream metrics(metrics_path, std::ios::app);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  const std::int64_t last_epoch =
      stop_after > 0 ? std::min<std::int64_t>(cfg.optim.epochs,
                                              state.epoch + stop_after)
                     : cfg.optim.epochs;
  for (std::int64_t epoch = state.epoch; epoch < last_epoch; ++epoch) {
    // All per-epoch randomness is derived from (seed, epoch) so a resumed
    // run replays the exact same stream.
    Rng epoch_rng(Rng::mix(cfg.optim.seed, 0xE50C, epoch));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[epoch_rng.uniform_int(i + 1)]);

    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (int start = 0; start + batch <= n; start += batch) {
      std::vector<augment::AugmentedPair> pairs;
      std::vector<std::vector<augment::AugmentedView>> crops;
      for (int i = 0; i < batch; ++i) {
        const LoadedSample loaded =
            load_for_training(train.entries[order[start + i]], policy);
        if (is_swav)
          crops.push_back(augment::make_multicrop(loaded.sample, policy,
                                                  crop_plan, epoch_rng));
        else
          pairs.push_back(augment::make_pair(loaded.sample, policy, epoch_rng));
      }

      ssl::Batch b;
      const int in_ch = state.encoder_spec.in_channels;
      if (is_swav) {
        std::vector<const augment::AugmentedView*> view;
        view.resize(batch);
        const int n_crops = static_cast<int>(crops.front().size());
        for (int c = 0; c < n_crops; ++c) {
          for (int i = 0; i < batch; ++i) view[i] = &crops[i][c];
          nn::Tensor t = stack_views(view, in_ch);
          if (c == 0)
            b.view_a = std::move(t);
          else if (c == 1)
            b.view_b = std::move(t);
          else
            b.local_crops.push_back(std::move(t));
        }
      } else {
        std::vector<const augment::AugmentedView*> va(batch), vb(batch);
        for (int i = 0; i < batch; ++i) {
          va[i] = &pairs[i].view_a;
          vb[i] = &pairs[i].view_b;
        }
        b.view_a = stack_views(va, in_ch);
        b.view_b = stack_views(vb, in_ch);
      }

      const double lr =
          ssl::cosine_lr(cfg.optim.lr, state.step, state.total_steps);
      const ssl::StepMetrics m = ssl::train_step(state, b, lr);
      loss_sum += m.loss;
      ++batches;
    }

    state.epoch = epoch + 1;
    const double mean_loss =
        batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;

    json record;
    record["epoch"] = epoch;
    record["loss"] = mean_loss;
    record["lr"] = ssl::cosine_lr(cfg.optim.lr, state.step, state.total_steps);
    std::optional<double> knn;
    if (cfg.eval.knn_every > 0 && ((epoch + 1) % cfg.eval.knn_every == 0 ||
                                   epoch + 1 == cfg.optim.epochs)) {
      knn = knn_validation(state, cfg, train, val);
      record["knn_val"] = *knn;
    }
    metrics << record.dump() << "\n";
    metrics.flush();

    ssl::save_checkpoint(state, ckpt_path);
    outcome.epochs_completed = static_cast<int>(epoch) + 1;
    outcome.final_loss = mean_loss;
    outcome.final_knn = knn;
  }
  return outcome;
}

}  // namespace dssl::cli
