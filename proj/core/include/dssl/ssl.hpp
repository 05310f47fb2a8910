#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dssl/encoders.hpp"
#include "dssl/nn.hpp"
#include "dssl/rng.hpp"

namespace dssl::ssl {

struct ByolConfig {
  int proj_hidden = 4096;
  int proj_out = 256;
  int pred_hidden = 4096;
  double tau = 0.99;  // EMA momentum for the target network
  bool tau_cosine = false;
  void validate() const;
};

struct SimSiamConfig {
  int proj_hidden = 2048;
  int proj_out = 2048;
  int pred_hidden = 512;
  void validate() const;
};

struct SinkhornConfig {
  double eps = 0.05;
  int iters = 3;
  void validate() const;
};

struct SwavConfig {
  int prototypes = 256;
  int proj_hidden = 2048;
  int proj_out = 128;
  double temperature = 0.1;
  SinkhornConfig sinkhorn;
  int n_local_crops = 6;
  int local_size = 16;
  void validate() const;
};

using MethodConfig = std::variant<ByolConfig, SimSiamConfig, SwavConfig>;

std::string method_name(const MethodConfig& cfg);
void validate(const MethodConfig& cfg);

// ---- losses ----

// Symmetric BYOL loss: mean_B[2 - 2 cos(pred_a, targ_b)] +
// mean_B[2 - 2 cos(pred_b, targ_a)]. Target inputs are detached internally.
nn::Var byol_loss(const nn::Var& pred_a, const nn::Var& targ_b,
                  const nn::Var& pred_b, const nn::Var& targ_a);

// 0.5 D(p1, stopgrad(z2)) + 0.5 D(p2, stopgrad(z1)) with D = -cosine.
nn::Var simsiam_loss(const nn::Var& p1, const nn::Var& z2, const nn::Var& p2,
                     const nn::Var& z1);

// Target network update: target = tau * target + (1 - tau) * online.
void ema_update(const std::vector<nn::ParamRef>& target,
                const std::vector<nn::ParamRef>& online, double tau);
void ema_update_buffers(const std::vector<nn::BufferRef>& target,
                        const std::vector<nn::BufferRef>& online, double tau);

// Sinkhorn-Knopp on exp(scores / eps): alternating column scaling to 1/P
// and row scaling to 1/B; the result is rescaled so each row sums to 1.
nn::Tensor sinkhorn(const nn::Tensor& scores, double eps, int iters);
// Iterates until both marginals deviate from uniform by at most tol.
nn::Tensor sinkhorn_converged(const nn::Tensor& scores, double eps,
                              double tol = 1e-6, int max_iters = 10000);

// crop_features: unit-normalized projections, the first n_global entries are
// the global crops. Codes come from the global crops only, with no gradient.
nn::Var swav_loss(const std::vector<nn::Var>& crop_features,
                  const nn::Var& prototypes, double temperature,
                  const SinkhornConfig& sinkhorn_cfg, int n_global = 2);

// ---- training ----

struct OptimConfig {
  std::string optimizer = "sgd";  // swav defaults to adam
  double lr = 0.06;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 100;
  int batch_size = 256;
  std::uint64_t seed = 0;
  void validate() const;
};

struct Batch {
  nn::Tensor view_a, view_b;           // [B, C, H, W]
  std::vector<nn::Tensor> local_crops;  // swav only
};

struct StepMetrics {
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainState {
  EncoderSpec encoder_spec;
  MethodConfig method;
  OptimConfig optim;

  std::unique_ptr<Backbone> online_backbone;
  nn::Mlp projector;
  nn::Mlp predictor;  // byol / simsiam

  std::unique_ptr<Backbone> target_backbone;  // byol
  nn::Mlp target_projector;                   // byol

  nn::Var prototypes;  // swav, [P, proj_out], rows unit-norm

  std::unique_ptr<nn::Optimizer> optimizer;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::int64_t total_steps = 0;  // set by the trainer; 0 disables schedules
  Rng rng;

  std::vector<nn::ParamRef> trainable_params();
  std::vector<nn::ParamRef> target_params();
  std::vector<nn::BufferRef> buffers();          // BN running stats etc.
  std::vector<nn::BufferRef> target_buffers();

  double current_tau() const;

  static TrainState init(const EncoderSpec& enc, const MethodConfig& method,
                         const OptimConfig& optim);
};

// One optimization step. BYOL also advances the EMA target; SwAV
// re-normalizes prototype rows. Deterministic given the batch.
StepMetrics train_step(TrainState& state, const Batch& batch, double lr);

// Cosine decay to zero over the run.
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

// Eval-mode features, [N, feature_dim].
nn::Tensor extract_features(Backbone& backbone,
                            const std::vector<nn::Tensor>& inputs,
                            int batch_size = 128);

// ---- checkpointing ----
// Versioned container: magic, JSON header (configs, epoch, rng, tensor
// directory), then raw little-endian float64 payloads.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace dssl::ssl
