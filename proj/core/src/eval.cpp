#include "dssl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dssl/io.hpp"
#include "dssl/ssl.hpp"
#include "nlohmann/json.hpp"

namespace dssl::eval {

using nlohmann::json;

// ---- kNN ----

namespace {

std::vector<double> l2_normalized(const nn::Tensor& x) {
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.data);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = out[static_cast<size_t>(i) * d + j];
      s += v * v;
    }
    const double inv = 1.0 / std::sqrt(std::max(s, 1e-24));
    for (int j = 0; j < d; ++j) out[static_cast<size_t>(i) * d + j] *= inv;
  }
  return out;
}

}  // namespace

std::vector<int> knn_predict(const nn::Tensor& train_x,
                             const std::vector<int>& train_y,
                             const nn::Tensor& test_x, int k,
                             double temperature) {
  if (train_x.shape.size() != 2 || test_x.shape.size() != 2)
    throw ShapeError("knn: features must be 2-D");
  const int n_train = train_x.dim(0), d = train_x.dim(1);
  const int n_test = test_x.dim(0);
  if (n_train < 1 || n_test < 1) throw ValidationError("knn: empty feature set");
  if (test_x.dim(1) != d) throw ShapeError("knn: feature dim mismatch");
  if (static_cast<int>(train_y.size()) != n_train)
    throw ShapeError("knn: labels not aligned with features");
  if (k < 1) throw ValidationError("knn: k must be >= 1");
  if (k > n_train) throw ValidationError("knn: k exceeds train size");
  if (!(temperature > 0.0))
    throw ValidationError("knn: temperature must be > 0");

  const int n_classes =
      1 + *std::max_element(train_y.begin(), train_y.end());
  const std::vector<double> tr = l2_normalized(train_x);
  const std::vector<double> te = l2_normalized(test_x);

  std::vector<int> pred(n_test);
  std::vector<std::pair<double, int>> sims(n_train);
  std::vector<double> scores(n_classes);
  for (int i = 0; i < n_test; ++i) {
    for (int t = 0; t < n_train; ++t) {
      double s = 0.0;
      const double* a = te.data() + static_cast<size_t>(i) * d;
      const double* b = tr.data() + static_cast<size_t>(t) * d;
      for (int j = 0; j < d; ++j) s += a[j] * b[j];
      sims[t] = {s, t};
    }
    // Stable neighbor ordering: similarity descending, then index ascending.
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::fill(scores.begin(), scores.end(), 0.0);
    for (int t = 0; t < k; ++t)
      scores[train_y[sims[t].second]] += std::exp(sims[t].first / temperature);
    int best = 0;
    for (int c = 1; c < n_classes; ++c)
      if (scores[c] > scores[best]) best = c;  // ties keep the smaller id
    pred[i] = best;
  }
  return pred;
}

double knn_eval(const nn::Tensor& train_x, const std::vector<int>& train_y,
                const nn::Tensor& test_x, const std::vector<int>& test_y,
                int k, double temperature) {
  const std::vector<int> pred =
      knn_predict(train_x, train_y, test_x, k, temperature);
  if (pred.size() != test_y.size())
    throw ShapeError("knn: test labels not aligned");
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test_y[i]) ++correct;
  return 100.0 * correct / static_cast<double>(pred.size());
}

// ---- linear probe ----

ProbeResult linear_probe(const nn::Tensor& train_x,
                         const std::vector<int>& train_y,
                         const nn::Tensor& val_x, const std::vector<int>& val_y,
                         const std::vector<double>& lr_grid, int epochs,
                         int batch_size, std::uint64_t seed) {
  if (train_x.shape.size() != 2 || val_x.shape.size() != 2)
    throw ShapeError("linear_probe: features must be 2-D");
  if (lr_grid.empty()) throw ValidationError("linear_probe: empty lr grid");
  const int n = train_x.dim(0), d = train_x.dim(1);
  const int n_classes = 1 + *std::max_element(train_y.begin(), train_y.end());

  ProbeResult result;
  for (double lr : lr_grid) {
    Rng rng(Rng::mix(seed, fnv1a("probe"), static_cast<std::uint64_t>(lr * 1e6)));
    nn::Linear head(d, n_classes, rng);
    std::vector<nn::ParamRef> params;
    head.collect("head", params);
    nn::Sgd opt(0.9, 0.0);
    opt.init(params);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    bool diverged = false;
    const std::int64_t total_steps =
        static_cast<std::int64_t>(epochs) * ((n + batch_size - 1) / batch_size);
    std::int64_t step = 0;

    for (int epoch = 0; epoch < epochs && !diverged; ++epoch) {
      // Fisher-Yates with the probe rng; deterministic given the seed.
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(i + 1)]);
      for (int start = 0; start < n && !diverged; start += batch_size) {
        const int count = std::min(batch_size, n - start);
        nn::Tensor xb(nn::Shape{count, d});
        nn::Tensor targets(nn::Shape{count, n_classes});
        for (int i = 0; i < count; ++i) {
          const int src = order[start + i];
          std::copy(train_x.data.begin() + static_cast<size_t>(src) * d,
                    train_x.data.begin() + static_cast<size_t>(src + 1) * d,
                    xb.data.begin() + static_cast<size_t>(i) * d);
          targets.data[static_cast<size_t>(i) * n_classes + train_y[src]] = 1.0;
        }
        nn::zero_grad(params);
        const nn::Var logits = head(nn::make_constant(std::move(xb)));
        const nn::Var loss = nn::soft_cross_entropy(logits, targets);
        if (!std::isfinite(loss->value.data[0])) {
          diverged = true;
          break;
        }
        nn::backward(loss);
        opt.step(params, ssl::cosine_lr(lr, step, total_steps));
        ++step;
      }
    }
    if (diverged) {
      result.warnings.push_back("lr " + std::to_string(lr) +
                                " diverged (non-finite loss); skipped");
      continue;
    }

    const nn::Var logits = head(nn::make_constant(val_x));
    int correct = 0;
    for (int i = 0; i < val_x.dim(0); ++i) {
      const double* row = logits->value.ptr() + static_cast<size_t>(i) * n_classes;
      int best = 0;
      for (int c = 1; c < n_classes; ++c)
        if (row[c] > row[best]) best = c;
      if (best == val_y[i]) ++correct;
    }
    const double acc = 100.0 * correct / static_cast<double>(val_x.dim(0));
    result.per_lr.emplace_back(lr, acc);
    if (acc > result.best_accuracy) {
      result.best_accuracy = acc;
      result.best_lr = lr;
    }
  }
  if (result.per_lr.empty())
    throw NumericError("linear_probe: every grid lr diverged");
  return result;
}

// ---- report ----

DepthMode depth_mode_from_string(const std::string& s) {
  if (s == "sidecar") return DepthMode::sidecar;
  if (s == "zero") return DepthMode::zero;
  if (s == "provider") return DepthMode::provider;
  throw ConfigError("unknown depth mode '" + s + "'");
}

std::string to_string(DepthMode mode) {
  switch (mode) {
    case DepthMode::sidecar: return "sidecar";
    case DepthMode::zero: return "zero";
    case DepthMode::provider: return "provider";
  }
  return "unknown";
}

void aggregate(EvalReport& report) {
  std::map<std::string, std::pair<double, int>> acc;
  double total = 0.0;
  for (const EvalCell& cell : report.cells) {
    auto& [sum, count] = acc[category_of(cell.kind)];
    sum += cell.accuracy;
    ++count;
    total += cell.accuracy;
  }
  report.category_means.clear();
  for (const auto& [category, pair] : acc)
    report.category_means[category] = pair.first / pair.second;
  report.corrupted_mean =
      report.cells.empty() ? 0.0 : total / static_cast<double>(report.cells.size());
}

std::string EvalReport::to_json() const {
  json j;
  j["top1_clean"] = top1_clean;
  json cells_j = json::array();
  for (const EvalCell& c : cells)
    cells_j.push_back({{"kind", eval::to_string(c.kind)},
                       {"severity", c.severity},
                       {"accuracy", c.accuracy}});
  j["cells"] = std::move(cells_j);
  j["category_means"] = category_means;
  j["corrupted_mean"] = corrupted_mean;
  j["seed"] = seed;
  j["config"] = config_echo.empty() ? json::object() : json::parse(config_echo);
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.top1_clean = j.at("top1_clean").get<double>();
  for (const json& c : j.at("cells"))
    r.cells.push_back({corruption_from_string(c.at("kind").get<std::string>()),
                       c.at("severity").get<int>(),
                       c.at("accuracy").get<double>()});
  r.category_means =
      j.at("category_means").get<std::map<std::string, double>>();
  r.corrupted_mean = j.at("corrupted_mean").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_echo = j.at("config").dump();
  return r;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "kind,severity,accuracy\n";
  os << "clean,0," << top1_clean << "\n";
  for (const EvalCell& c : cells)
    os << eval::to_string(c.kind) << "," << c.severity << "," << c.accuracy
       << "\n";
  return os.str();
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "Top-1 Acc.  Corrupted";
  for (const auto& [cat, _] : category_means) os << "  " << cat;
  os << "\n" << top1_clean << "  " << corrupted_mean;
  for (const auto& [_, mean] : category_means) os << "  " << mean;
  os << "\n";
  return os.str();
}

// ---- robustness eval ----

nn::Tensor to_input_tensor(const Image& rgb, const DepthMap* depth,
                           int in_channels) {
  if (in_channels != 3 && in_channels != 4)
    throw ShapeError("to_input_tensor: in_channels must be 3 or 4");
  require_rgb(rgb, "to_input_tensor");
  nn::Tensor t(nn::Shape{1, in_channels, rgb.height, rgb.width});
  const size_t npix = rgb.pixel_count();
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < npix; ++i)
      t.data[static_cast<size_t>(c) * npix + i] = rgb.plane(c)[i];
  if (in_channels == 4 && depth) {
    require_aligned(rgb, *depth, "to_input_tensor");
    for (size_t i = 0; i < npix; ++i)
      t.data[static_cast<size_t>(3) * npix + i] = depth->values[i];
  }
  return t;
}

namespace {

struct FeatureBank {
  nn::Tensor features;
  std::vector<int> labels;
};

DepthMap depth_for_eval(const Image& rgb, const data::ManifestEntry& entry,
                        DepthMode mode, data::DepthProvider* provider) {
  switch (mode) {
    case DepthMode::zero: return DepthMap(rgb.height, rgb.width);
    case DepthMode::sidecar: {
      if (entry.depth_path.empty())
        throw ConfigError("depth_mode=sidecar but no sidecar for " +
                          entry.image_path);
      return io::read_depth(entry.depth_path);
    }
    case DepthMode::provider: {
      if (!provider)
        throw ConfigError("depth_mode=provider but no provider given");
      return provider->depth_for(rgb, entry);
    }
  }
  throw ConfigError("unhandled depth mode");
}

FeatureBank extract_bank(ssl::Backbone& encoder,
                         const data::DatasetManifest& manifest,
                         const RobustnessConfig& cfg,
                         data::DepthProvider* provider,
                         const CorruptionSpec* spec) {
  const int in_ch = encoder.spec().in_channels;
  std::vector<nn::Tensor> inputs;
  inputs.reserve(manifest.entries.size());
  FeatureBank bank;
  bank.labels.reserve(manifest.entries.size());
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const data::ManifestEntry& entry = manifest.entries[i];
    Image rgb = io::read_png(entry.image_path);
    if (spec) {
      Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(spec->kind),
                       static_cast<std::uint64_t>(spec->severity), i));
      rgb = corrupt(rgb, *spec, rng);
    }
    if (in_ch == 4) {
      const DepthMap depth =
          depth_for_eval(rgb, entry, cfg.depth_mode, provider);
      inputs.push_back(to_input_tensor(rgb, &depth, 4));
    } else {
      inputs.push_back(to_input_tensor(rgb, nullptr, 3));
    }
    bank.labels.push_back(entry.label);
  }
  bank.features = ssl::extract_features(encoder, inputs, cfg.batch_size);
  return bank;
}

}  // namespace

EvalReport robustness_eval(ssl::Backbone& encoder,
                           const data::DatasetManifest& train,
                           const data::DatasetManifest& val,
                           const RobustnessConfig& cfg,
                           data::DepthProvider* provider) {
  if (cfg.specs.empty())
    throw ConfigError("robustness_eval: no corruption specs given");
  for (const CorruptionSpec& s : cfg.specs) s.validate();
  if (cfg.depth_mode == DepthMode::provider && !provider &&
      encoder.spec().in_channels == 4)
    throw ConfigError("robustness_eval: provider mode needs a depth provider");

  const FeatureBank train_bank =
      extract_bank(encoder, train, cfg, provider, nullptr);
  const FeatureBank clean_val =
      extract_bank(encoder, val, cfg, provider, nullptr);

  EvalReport report;
  report.seed = cfg.seed;
  report.config_echo = cfg.config_echo;
  report.top1_clean =
      knn_eval(train_bank.features, train_bank.labels, clean_val.features,
               clean_val.labels, cfg.knn_k, cfg.knn_temperature);

  for (const CorruptionSpec& spec : cfg.specs) {
    const FeatureBank cell_bank =
        extract_bank(encoder, val, cfg, provider, &spec);
    const double acc =
        knn_eval(train_bank.features, train_bank.labels, cell_bank.features,
                 cell_bank.labels, cfg.knn_k, cfg.knn_temperature);
    report.cells.push_back({spec.kind, spec.severity, acc});
  }
  aggregate(report);
  return report;
}

}  // namespace dssl::eval
