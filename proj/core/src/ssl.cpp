#include "dssl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dssl/io.hpp"
#include "nlohmann/json.hpp"

namespace dssl::ssl {

using nlohmann::json;

void ByolConfig::validate() const {
  if (proj_hidden < 1 || proj_out < 1 || pred_hidden < 1)
    throw ValidationError("byol: head dimensions must be positive");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ValidationError("byol: tau must be in [0,1]");
}

void SimSiamConfig::validate() const {
  if (proj_hidden < 1 || proj_out < 1 || pred_hidden < 1)
    throw ValidationError("simsiam: head dimensions must be positive");
}

void SinkhornConfig::validate() const {
  if (!(eps > 0.0)) throw ValidationError("sinkhorn: eps must be > 0");
  if (iters < 1) throw ValidationError("sinkhorn: iters must be >= 1");
}

void SwavConfig::validate() const {
  if (prototypes < 2) throw ValidationError("swav: needs at least 2 prototypes");
  if (proj_hidden < 1 || proj_out < 1)
    throw ValidationError("swav: head dimensions must be positive");
  if (!(temperature > 0.0))
    throw ValidationError("swav: temperature must be > 0");
  sinkhorn.validate();
  if (n_local_crops < 0) throw ValidationError("swav: n_local_crops must be >= 0");
  if (local_size < 1) throw ValidationError("swav: local_size must be >= 1");
}

std::string method_name(const MethodConfig& cfg) {
  if (std::holds_alternative<ByolConfig>(cfg)) return "byol";
  if (std::holds_alternative<SimSiamConfig>(cfg)) return "simsiam";
  return "swav";
}

void validate(const MethodConfig& cfg) {
  std::visit([](const auto& c) { c.validate(); }, cfg);
}

void OptimConfig::validate() const {
  if (optimizer != "sgd" && optimizer != "adam")
    throw ValidationError("optimizer must be 'sgd' or 'adam'");
  if (!(lr >= 0.0)) throw ValidationError("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ValidationError("momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  if (epochs < 1 || batch_size < 2)
    throw ValidationError("epochs >= 1 and batch_size >= 2 required");
}

// ---- losses ----

nn::Var byol_loss(const nn::Var& pred_a, const nn::Var& targ_b,
                  const nn::Var& pred_b, const nn::Var& targ_a) {
  const nn::Var term_ab =
      nn::affine(nn::mean_all(nn::rowwise_cosine(pred_a, nn::detach(targ_b))),
                 -2.0, 2.0);
  const nn::Var term_ba =
      nn::affine(nn::mean_all(nn::rowwise_cosine(pred_b, nn::detach(targ_a))),
                 -2.0, 2.0);
  return nn::add(term_ab, term_ba);
}

nn::Var simsiam_loss(const nn::Var& p1, const nn::Var& z2, const nn::Var& p2,
                     const nn::Var& z1) {
  const nn::Var d1 = nn::mean_all(nn::rowwise_cosine(p1, nn::detach(z2)));
  const nn::Var d2 = nn::mean_all(nn::rowwise_cosine(p2, nn::detach(z1)));
  return nn::affine(nn::add(d1, d2), -0.5, 0.0);
}

void ema_update(const std::vector<nn::ParamRef>& target,
                const std::vector<nn::ParamRef>& online, double tau) {
  if (target.size() != online.size())
    throw ShapeError("ema_update: parameter list size mismatch");
  for (size_t i = 0; i < target.size(); ++i) {
    nn::Tensor& t = target[i].var->value;
    const nn::Tensor& o = online[i].var->value;
    if (!t.same_shape(o))
      throw ShapeError("ema_update: shape mismatch at " + target[i].name);
    for (std::int64_t j = 0; j < t.size(); ++j)
      t.data[j] = tau * t.data[j] + (1.0 - tau) * o.data[j];
  }
}

void ema_update_buffers(const std::vector<nn::BufferRef>& target,
                        const std::vector<nn::BufferRef>& online, double tau) {
  if (target.size() != online.size())
    throw ShapeError("ema_update_buffers: list size mismatch");
  for (size_t i = 0; i < target.size(); ++i) {
    nn::Tensor& t = *target[i].tensor;
    const nn::Tensor& o = *online[i].tensor;
    if (t.size() != o.size()) continue;  // uninitialized running stats
    for (std::int64_t j = 0; j < t.size(); ++j)
      t.data[j] = tau * t.data[j] + (1.0 - tau) * o.data[j];
  }
}

// ---- sinkhorn ----

namespace {

nn::Tensor sinkhorn_impl(const nn::Tensor& scores, double eps, int iters,
                         double tol, bool until_converged, int max_iters) {
  if (scores.shape.size() != 2)
    throw ShapeError("sinkhorn: expects a 2-D score matrix");
  const int b = scores.dim(0), p = scores.dim(1);
  if (b < 1 || p < 1) throw ShapeError("sinkhorn: empty matrix");
  if (!(eps > 0.0)) throw ValidationError("sinkhorn: eps must be > 0");
  for (double v : scores.data)
    if (!std::isfinite(v)) throw NumericError("sinkhorn: non-finite scores");

  double mx = scores.data[0];
  for (double v : scores.data) mx = std::max(mx, v);

  nn::Tensor q(nn::Shape{b, p});
  for (std::int64_t i = 0; i < scores.size(); ++i)
    q.data[i] = std::max(std::exp((scores.data[i] - mx) / eps), 1e-300);

  const double row_target = 1.0 / b;
  const double col_target = 1.0 / p;
  const int limit = until_converged ? max_iters : iters;
  for (int it = 0; it < limit; ++it) {
    for (int j = 0; j < p; ++j) {
      double s = 0.0;
      for (int i = 0; i < b; ++i) s += q.data[static_cast<size_t>(i) * p + j];
      const double scale = col_target / s;
      for (int i = 0; i < b; ++i) q.data[static_cast<size_t>(i) * p + j] *= scale;
    }
    for (int i = 0; i < b; ++i) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) s += q.data[static_cast<size_t>(i) * p + j];
      const double scale = row_target / s;
      for (int j = 0; j < p; ++j) q.data[static_cast<size_t>(i) * p + j] *= scale;
    }
    if (until_converged) {
      // Rows are exact after row scaling; convergence is measured on columns.
      double dev = 0.0;
      for (int j = 0; j < p; ++j) {
        double s = 0.0;
        for (int i = 0; i < b; ++i) s += q.data[static_cast<size_t>(i) * p + j];
        dev = std::max(dev, std::abs(s - col_target));
      }
      if (dev <= tol) break;
    }
  }
  // Per-sample assignment distribution: rows sum to 1.
  for (std::int64_t i = 0; i < q.size(); ++i) q.data[i] *= b;
  return q;
}

}  // namespace

nn::Tensor sinkhorn(const nn::Tensor& scores, double eps, int iters) {
  if (iters < 1) throw ValidationError("sinkhorn: iters must be >= 1");
  return sinkhorn_impl(scores, eps, iters, 0.0, false, 0);
}

nn::Tensor sinkhorn_converged(const nn::Tensor& scores, double eps, double tol,
                              int max_iters) {
  return sinkhorn_impl(scores, eps, 0, tol, true, max_iters);
}

nn::Var swav_loss(const std::vector<nn::Var>& crop_features,
                  const nn::Var& prototypes, double temperature,
                  const SinkhornConfig& sinkhorn_cfg, int n_global) {
  if (n_global < 2)
    throw ConfigError("swav_loss: needs at least 2 global crops");
  if (static_cast<int>(crop_features.size()) < n_global)
    throw ConfigError("swav_loss: fewer crops than globals");
  if (!(temperature > 0.0))
    throw ValidationError("swav_loss: temperature must be > 0");
  sinkhorn_cfg.validate();

  const int n_crops = static_cast<int>(crop_features.size());
  std::vector<nn::Var> scores;
  scores.reserve(n_crops);
  for (const nn::Var& z : crop_features)
    scores.push_back(nn::matmul_nt(z, prototypes));

  std::vector<nn::Tensor> codes;
  codes.reserve(n_global);
  for (int g = 0; g < n_global; ++g)
    codes.push_back(
        sinkhorn(scores[g]->value, sinkhorn_cfg.eps, sinkhorn_cfg.iters));

  nn::Var total;
  for (int g = 0; g < n_global; ++g) {
    nn::Var sub;
    for (int c = 0; c < n_crops; ++c) {
      if (c == g) continue;
      nn::Var ce = nn::soft_cross_entropy(
          nn::affine(scores[c], 1.0 / temperature, 0.0), codes[g]);
      sub = sub ? nn::add(sub, ce) : ce;
    }
    sub = nn::affine(sub, 1.0 / (n_crops - 1), 0.0);
    total = total ? nn::add(total, sub) : sub;
  }
  total = nn::affine(total, 1.0 / n_global, 0.0);
  if (!std::isfinite(total->value.data[0]))
    throw NumericError("swav_loss: non-finite loss");
  return total;
}

// ---- training ----

namespace {

nn::Mlp make_byol_head(int in, int hidden, int out, Rng& rng) {
  return nn::Mlp({{in, hidden, true, true}, {hidden, out, false, false}}, rng);
}

nn::Mlp make_simsiam_projector(int in, int hidden, int out, Rng& rng) {
  return nn::Mlp({{in, hidden, true, true},
                  {hidden, hidden, true, true},
                  {hidden, out, true, false}},
                 rng);
}

nn::Var normalized_rows_param(int rows, int cols, Rng& rng) {
  nn::Tensor t(nn::Shape{rows, cols});
  for (double& v : t.data) v = rng.normal();
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double v = t.data[static_cast<size_t>(r) * cols + c];
      s += v * v;
    }
    const double inv = 1.0 / std::sqrt(std::max(s, 1e-24));
    for (int c = 0; c < cols; ++c)
      t.data[static_cast<size_t>(r) * cols + c] *= inv;
  }
  return nn::make_param(std::move(t));
}

void renormalize_prototype_rows(nn::Var& prototypes) {
  nn::Tensor& t = prototypes->value;
  const int rows = t.dim(0), cols = t.dim(1);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double v = t.data[static_cast<size_t>(r) * cols + c];
      s += v * v;
    }
    const double inv = 1.0 / std::sqrt(std::max(s, 1e-24));
    for (int c = 0; c < cols; ++c)
      t.data[static_cast<size_t>(r) * cols + c] *= inv;
  }
}

}  // namespace

TrainState TrainState::init(const EncoderSpec& enc, const MethodConfig& method,
                            const OptimConfig& optim) {
  enc.validate();
  ssl::validate(method);
  optim.validate();

  TrainState s;
  s.encoder_spec = enc;
  s.method = method;
  s.optim = optim;
  s.rng = Rng(optim.seed);

  Rng init_rng(Rng::mix(optim.seed, 0x5eed));
  s.online_backbone = make_backbone(enc, init_rng);
  const int fd = enc.feature_dim;

  if (const auto* byol = std::get_if<ByolConfig>(&method)) {
    s.projector = make_byol_head(fd, byol->proj_hidden, byol->proj_out, init_rng);
    s.predictor = make_byol_head(byol->proj_out, byol->pred_hidden,
                                 byol->proj_out, init_rng);
    s.target_backbone = s.online_backbone->clone();
    Rng clone_rng(0);
    s.target_projector =
        make_byol_head(fd, byol->proj_hidden, byol->proj_out, clone_rng);
    // Target starts as an exact copy of the online projector.
    std::vector<nn::ParamRef> op, tp;
    s.projector.collect("proj", op);
    s.target_projector.collect("proj", tp);
    for (size_t i = 0; i < op.size(); ++i) tp[i].var->value = op[i].var->value;
  } else if (const auto* sim = std::get_if<SimSiamConfig>(&method)) {
    s.projector =
        make_simsiam_projector(fd, sim->proj_hidden, sim->proj_out, init_rng);
    s.predictor = nn::Mlp({{sim->proj_out, sim->pred_hidden, true, true},
                           {sim->pred_hidden, sim->proj_out, false, false}},
                          init_rng);
  } else {
    const auto& swav = std::get<SwavConfig>(method);
    s.projector = nn::Mlp({{fd, swav.proj_hidden, true, true},
                           {swav.proj_hidden, swav.proj_out, false, false}},
                          init_rng);
    s.prototypes =
        normalized_rows_param(swav.prototypes, swav.proj_out, init_rng);
  }

  if (optim.optimizer == "adam") {
    s.optimizer = std::make_unique<nn::Adam>(0.9, 0.999, 1e-8,
                                             optim.weight_decay);
  } else {
    s.optimizer = std::make_unique<nn::Sgd>(optim.momentum, optim.weight_decay);
  }
  s.optimizer->init(s.trainable_params());
  return s;
}

std::vector<nn::ParamRef> TrainState::trainable_params() {
  std::vector<nn::ParamRef> out;
  online_backbone->collect(out);
  projector.collect("projector", out);
  predictor.collect("predictor", out);
  if (prototypes) out.push_back({"prototypes", prototypes});
  return out;
}

std::vector<nn::ParamRef> TrainState::target_params() {
  std::vector<nn::ParamRef> out;
  if (target_backbone) target_backbone->collect(out);
  target_projector.collect("target_projector", out);
  return out;
}

std::vector<nn::BufferRef> TrainState::buffers() {
  std::vector<nn::BufferRef> out;
  online_backbone->collect_buffers(out);
  projector.collect_buffers("projector", out);
  predictor.collect_buffers("predictor", out);
  return out;
}

std::vector<nn::BufferRef> TrainState::target_buffers() {
  std::vector<nn::BufferRef> out;
  if (target_backbone) target_backbone->collect_buffers(out);
  target_projector.collect_buffers("target_projector", out);
  return out;
}

double TrainState::current_tau() const {
  const auto* byol = std::get_if<ByolConfig>(&method);
  if (!byol) return 1.0;
  if (!byol->tau_cosine || total_steps <= 0) return byol->tau;
  // Cosine ramp from tau to 1 over the run.
  const double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 1.0 - (1.0 - byol->tau) * (std::cos(M_PI * progress) + 1.0) / 2.0;
}

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

StepMetrics train_step(TrainState& state, const Batch& batch, double lr) {
  const std::vector<nn::ParamRef> params = state.trainable_params();
  nn::zero_grad(params);

  nn::Var loss;
  if (std::holds_alternative<ByolConfig>(state.method)) {
    const nn::Var xa = nn::make_constant(batch.view_a);
    const nn::Var xb = nn::make_constant(batch.view_b);
    const nn::Var pa = state.predictor.forward(
        state.projector.forward(state.online_backbone->forward(xa, true), true),
        true);
    const nn::Var pb = state.predictor.forward(
        state.projector.forward(state.online_backbone->forward(xb, true), true),
        true);
    const nn::Var ta = state.target_projector.forward(
        state.target_backbone->forward(xa, true), true);
    const nn::Var tb = state.target_projector.forward(
        state.target_backbone->forward(xb, true), true);
    loss = byol_loss(pa, tb, pb, ta);
  } else if (std::holds_alternative<SimSiamConfig>(state.method)) {
    const nn::Var xa = nn::make_constant(batch.view_a);
    const nn::Var xb = nn::make_constant(batch.view_b);
    const nn::Var z1 = state.projector.forward(
        state.online_backbone->forward(xa, true), true);
    const nn::Var z2 = state.projector.forward(
        state.online_backbone->forward(xb, true), true);
    const nn::Var p1 = state.predictor.forward(z1, true);
    const nn::Var p2 = state.predictor.forward(z2, true);
    loss = simsiam_loss(p1, z2, p2, z1);
  } else {
    const auto& swav = std::get<SwavConfig>(state.method);
    std::vector<nn::Var> features;
    features.push_back(nn::l2_normalize_rows(state.projector.forward(
        state.online_backbone->forward(nn::make_constant(batch.view_a), true),
        true)));
    features.push_back(nn::l2_normalize_rows(state.projector.forward(
        state.online_backbone->forward(nn::make_constant(batch.view_b), true),
        true)));
    for (const nn::Tensor& crop : batch.local_crops)
      features.push_back(nn::l2_normalize_rows(state.projector.forward(
          state.online_backbone->forward(nn::make_constant(crop), true), true)));
    loss = swav_loss(features, state.prototypes, swav.temperature,
                     swav.sinkhorn, 2);
  }

  const double loss_value = loss->value.data[0];
  if (!std::isfinite(loss_value))
    throw NumericError("train_step: non-finite loss; training aborted");

  nn::backward(loss);
  const double gnorm = nn::grad_norm(params);
  state.optimizer->step(params, lr);

  if (std::holds_alternative<ByolConfig>(state.method)) {
    const double tau = state.current_tau();
    std::vector<nn::ParamRef> online;
    state.online_backbone->collect(online);
    state.projector.collect("projector", online);
    std::vector<nn::ParamRef> target = state.target_params();
    ema_update(target, online, tau);

    std::vector<nn::BufferRef> online_buf;
    state.online_backbone->collect_buffers(online_buf);
    state.projector.collect_buffers("projector", online_buf);
    ema_update_buffers(state.target_buffers(), online_buf, tau);
  }
  if (std::holds_alternative<SwavConfig>(state.method))
    renormalize_prototype_rows(state.prototypes);

  ++state.step;
  return {loss_value, gnorm};
}

nn::Tensor extract_features(Backbone& backbone,
                            const std::vector<nn::Tensor>& inputs,
                            int batch_size) {
  if (inputs.empty()) return nn::Tensor(nn::Shape{0, backbone.spec().feature_dim});
  const int fd = backbone.spec().feature_dim;
  const int n = static_cast<int>(inputs.size());
  nn::Tensor out(nn::Shape{n, fd});
  int pos = 0;
  while (pos < n) {
    const int count = std::min(batch_size, n - pos);
    const nn::Tensor& first = inputs[pos];
    nn::Tensor stacked(nn::Shape{count, first.dim(1), first.dim(2), first.dim(3)});
    const std::int64_t stride = first.size();
    for (int i = 0; i < count; ++i) {
      if (!inputs[pos + i].same_shape(first))
        throw ShapeError("extract_features: inconsistent input shapes");
      std::copy(inputs[pos + i].data.begin(), inputs[pos + i].data.end(),
                stacked.data.begin() + static_cast<size_t>(i) * stride);
    }
    const nn::Var feats =
        backbone.forward(nn::make_constant(std::move(stacked)), false);
    std::copy(feats->value.data.begin(), feats->value.data.end(),
              out.data.begin() + static_cast<size_t>(pos) * fd);
    pos += count;
  }
  return out;
}

// ---- checkpoint ----

namespace {

constexpr char kCheckpointMagic[8] = {'D', 'S', 'S', 'L', 'C', 'K', 'P', '1'};

json method_to_json(const MethodConfig& m) {
  json j;
  j["name"] = method_name(m);
  if (const auto* b = std::get_if<ByolConfig>(&m)) {
    j["proj_hidden"] = b->proj_hidden;
    j["proj_out"] = b->proj_out;
    j["pred_hidden"] = b->pred_hidden;
    j["tau"] = b->tau;
    j["tau_cosine"] = b->tau_cosine;
  } else if (const auto* s = std::get_if<SimSiamConfig>(&m)) {
    j["proj_hidden"] = s->proj_hidden;
    j["proj_out"] = s->proj_out;
    j["pred_hidden"] = s->pred_hidden;
  } else {
    const auto& w = std::get<SwavConfig>(m);
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

MethodConfig method_from_json(const json& j) {
  const std::string name = j.at("name").get<std::string>();
  if (name == "byol") {
    ByolConfig b;
    b.proj_hidden = j.at("proj_hidden").get<int>();
    b.proj_out = j.at("proj_out").get<int>();
    b.pred_hidden = j.at("pred_hidden").get<int>();
    b.tau = j.at("tau").get<double>();
    b.tau_cosine = j.at("tau_cosine").get<bool>();
    return b;
  }
  if (name == "simsiam") {
    SimSiamConfig s;
    s.proj_hidden = j.at("proj_hidden").get<int>();
    s.proj_out = j.at("proj_out").get<int>();
    s.pred_hidden = j.at("pred_hidden").get<int>();
    return s;
  }
  if (name == "swav") {
    SwavConfig w;
    w.prototypes = j.at("prototypes").get<int>();
    w.proj_hidden = j.at("proj_hidden").get<int>();
    w.proj_out = j.at("proj_out").get<int>();
    w.temperature = j.at("temperature").get<double>();
    w.sinkhorn.eps = j.at("sinkhorn_eps").get<double>();
    w.sinkhorn.iters = j.at("sinkhorn_iters").get<int>();
    w.n_local_crops = j.at("n_local_crops").get<int>();
    w.local_size = j.at("local_size").get<int>();
    return w;
  }
  throw ConfigError("checkpoint: unknown method '" + name + "'");
}

struct TensorEntry {
  std::string name;
  nn::Tensor* tensor;
};

std::vector<TensorEntry> checkpoint_tensors(TrainState& s) {
  std::vector<TensorEntry> out;
  for (const nn::ParamRef& p : s.trainable_params())
    out.push_back({"param." + p.name, &p.var->value});
  for (const nn::ParamRef& p : s.target_params())
    out.push_back({"target." + p.name, &p.var->value});
  for (const nn::BufferRef& b : s.buffers())
    out.push_back({"buffer." + b.name, b.tensor});
  for (const nn::BufferRef& b : s.target_buffers())
    out.push_back({"target_buffer." + b.name, b.tensor});
  for (const nn::BufferRef& b : s.optimizer->state_buffers())
    out.push_back({"optim." + b.name, b.tensor});
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  TrainState& s = const_cast<TrainState&>(state);
  json header;
  header["format_version"] = 1;
  header["method"] = method_to_json(s.method);
  header["encoder"] = {{"backbone", to_string(s.encoder_spec.backbone)},
                       {"in_channels", s.encoder_spec.in_channels},
                       {"feature_dim", s.encoder_spec.feature_dim}};
  header["optim"] = {{"optimizer", s.optim.optimizer},
                     {"lr", s.optim.lr},
                     {"momentum", s.optim.momentum},
                     {"weight_decay", s.optim.weight_decay},
                     {"epochs", s.optim.epochs},
                     {"batch_size", s.optim.batch_size},
                     {"seed", s.optim.seed}};
  header["epoch"] = s.epoch;
  header["step"] = s.step;
  header["total_steps"] = s.total_steps;
  header["rng"] = s.rng.state_string();

  const std::vector<TensorEntry> tensors = checkpoint_tensors(s);
  json dir = json::array();
  for (const TensorEntry& t : tensors)
    dir.push_back({{"name", t.name}, {"shape", t.tensor->shape}});
  header["tensors"] = dir;

  std::string bytes;
  bytes.append(kCheckpointMagic, 8);
  const std::string hdr = header.dump();
  const std::uint64_t hlen = hdr.size();
  bytes.append(reinterpret_cast<const char*>(&hlen), 8);
  bytes.append(hdr);
  for (const TensorEntry& t : tensors)
    bytes.append(reinterpret_cast<const char*>(t.tensor->data.data()),
                 t.tensor->data.size() * sizeof(double));
  io::atomic_write_bytes(path, bytes);
}

TrainState load_checkpoint(const std::string& path) {
  const std::string bytes = io::read_text_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw IoError(path + " is not a checkpoint");
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (bytes.size() < 16 + hlen) throw IoError(path + ": truncated header");
  const json header = json::parse(bytes.substr(16, hlen));
  if (header.at("format_version").get<int>() != 1)
    throw IoError(path + ": unsupported checkpoint version");

  EncoderSpec enc;
  enc.backbone =
      backbone_from_string(header.at("encoder").at("backbone").get<std::string>());
  enc.in_channels = header.at("encoder").at("in_channels").get<int>();
  enc.feature_dim = header.at("encoder").at("feature_dim").get<int>();

  OptimConfig optim;
  const json& oj = header.at("optim");
  optim.optimizer = oj.at("optimizer").get<std::string>();
  optim.lr = oj.at("lr").get<double>();
  optim.momentum = oj.at("momentum").get<double>();
  optim.weight_decay = oj.at("weight_decay").get<double>();
  optim.epochs = oj.at("epochs").get<int>();
  optim.batch_size = oj.at("batch_size").get<int>();
  optim.seed = oj.at("seed").get<std::uint64_t>();

  TrainState s = TrainState::init(enc, method_from_json(header.at("method")),
                                  optim);
  s.epoch = header.at("epoch").get<std::int64_t>();
  s.step = header.at("step").get<std::int64_t>();
  s.total_steps = header.at("total_steps").get<std::int64_t>();
  s.rng.set_state_string(header.at("rng").get<std::string>());

  const std::vector<TensorEntry> tensors = checkpoint_tensors(s);
  const json& dir = header.at("tensors");
  if (dir.size() != tensors.size())
    throw IoError(path + ": tensor directory mismatch");

  size_t offset = 16 + hlen;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = dir[i].at("name").get<std::string>();
    if (name != tensors[i].name)
      throw IoError(path + ": tensor order mismatch at " + name);
    const auto shape = dir[i].at("shape").get<nn::Shape>();
    nn::Tensor& dst = *tensors[i].tensor;
    if (nn::numel(shape) != dst.size()) {
      dst = nn::Tensor(shape);
    }
    const size_t nbytes = dst.data.size() * sizeof(double);
    if (offset + nbytes > bytes.size())
      throw IoError(path + ": truncated tensor payload");
    std::memcpy(dst.data.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
  }
  if (offset != bytes.size()) throw IoError(path + ": trailing bytes");
  return s;
}

}  // namespace dssl::ssl
