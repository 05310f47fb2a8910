#include "cli.hpp"

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "dssl/io.hpp"
#include "dssl/plot.hpp"
#include "nlohmann/json.hpp"

namespace dssl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kExitConfig;
  } catch (const NumericError&) {
    return kExitNumeric;
  } catch (const IoError&) {
    return kExitIo;
  } catch (...) {
    return kExitError;
  }
}

namespace {

config::RunConfig load_run_config(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  std::string text = io::read_text_file(path);
  if (!overrides.empty()) text = config::apply_overrides(text, overrides);
  config::RunConfig cfg = config::parse_config(text);
  if (const char* env_root = std::getenv("DSSL_DATA_ROOT"))
    if (*env_root) cfg.dataset.root = env_root;
  return cfg;
}

std::unique_ptr<data::DepthProvider> provider_for(const config::RunConfig& cfg,
                                                  const std::string& tmp_dir) {
  if (cfg.depth.provider == "zero") return data::make_zero_provider();
  if (cfg.depth.provider == "command")
    return data::make_command_provider(cfg.depth.command, tmp_dir);
  return data::make_sidecar_provider();
}

std::vector<eval::CorruptionSpec> resolve_specs(const config::RunConfig& cfg) {
  if (!cfg.eval.corruptions.empty()) return cfg.eval.corruptions;
  std::vector<eval::CorruptionSpec> specs;
  for (eval::Corruption kind : eval::all_corruptions())
    for (int s = 1; s <= 5; ++s) specs.push_back({kind, s});
  return specs;
}

struct FeatureSets {
  nn::Tensor train_x, val_x;
  std::vector<int> train_y, val_y;
};

FeatureSets extract_clean_features(ssl::TrainState& state,
                                   const config::RunConfig& cfg) {
  FeatureSets out;
  const data::DatasetManifest train =
      data::load_dataset(cfg.dataset.root, "train");
  const data::DatasetManifest val = data::load_dataset(cfg.dataset.root, "val");
  auto features_of = [&](const data::DatasetManifest& m,
                         std::vector<int>& labels) {
    std::vector<nn::Tensor> inputs;
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
  out.train_x = features_of(train, out.train_y);
  out.val_x = features_of(val, out.val_y);
  return out;
}

}  // namespace

void cmd_render(const std::string& image_path, const std::string& depth_path,
                double x, double y, double z, int num_planes,
                const std::string& out_path) {
  const Image rgb = io::read_png(image_path);
  const DepthMap depth = io::read_depth(depth_path);
  geometry::RenderConfig cfg;
  cfg.num_planes = num_planes;
  const geometry::RenderResult out =
      geometry::render_novel_view(rgb, depth, {x, y, z}, cfg);
  io::write_png(out_path, out.color);
}

data::ViewBankResult cmd_viewbank(const config::RunConfig& cfg) {
  cfg.validate(true);
  data::DatasetManifest train = data::load_dataset(cfg.dataset.root, "train");
  data::ViewBankConfig bank;
  bank.k = cfg.views.k;
  bank.range_x = cfg.views.range_x;
  bank.range_y = cfg.views.range_y;
  bank.range_z = cfg.views.range_z;
  bank.render.num_planes = cfg.views.num_planes;
  bank.render.depth_near = cfg.views.depth_near;
  bank.render.depth_far = cfg.views.depth_far;
  bank.seed = cfg.optim.seed;
  return data::build_view_bank(train, bank);
}

void cmd_corrupt(const std::string& image_path, const std::string& kind,
                 int severity, std::uint64_t seed, const std::string& out_path) {
  const Image rgb = io::read_png(image_path);
  eval::CorruptionSpec spec;
  spec.kind = eval::corruption_from_string(kind);
  spec.severity = severity;
  Rng rng(seed);
  io::write_png(out_path, eval::corrupt(rgb, spec, rng));
}

double cmd_knn(const std::string& checkpoint_path, const config::RunConfig& cfg) {
  cfg.validate(true);
  ssl::TrainState state = ssl::load_checkpoint(checkpoint_path);
  const FeatureSets f = extract_clean_features(state, cfg);
  const int k = std::min(cfg.eval.knn_k, f.train_x.dim(0));
  return eval::knn_eval(f.train_x, f.train_y, f.val_x, f.val_y, k,
                        cfg.eval.knn_temperature);
}

eval::ProbeResult cmd_linear_probe(const std::string& checkpoint_path,
                                   const config::RunConfig& cfg) {
  cfg.validate(true);
  ssl::TrainState state = ssl::load_checkpoint(checkpoint_path);
  const FeatureSets f = extract_clean_features(state, cfg);
  return eval::linear_probe(f.train_x, f.train_y, f.val_x, f.val_y,
                            cfg.eval.probe_grid, cfg.eval.probe_epochs,
                            std::min(256, f.train_x.dim(0)), cfg.optim.seed);
}

eval::EvalReport cmd_report_eval(const std::string& checkpoint_path,
                                 const config::RunConfig& cfg,
                                 const std::string& out_dir) {
  cfg.validate(true);
  ssl::TrainState state = ssl::load_checkpoint(checkpoint_path);
  const data::DatasetManifest train =
      data::load_dataset(cfg.dataset.root, "train");
  const data::DatasetManifest val = data::load_dataset(cfg.dataset.root, "val");

  eval::RobustnessConfig rc;
  rc.specs = resolve_specs(cfg);
  rc.depth_mode = eval::depth_mode_from_string(cfg.eval.depth_mode);
  rc.knn_k = cfg.eval.knn_k;
  rc.knn_temperature = cfg.eval.knn_temperature;
  rc.seed = cfg.optim.seed;
  rc.config_echo = cfg.to_json();

  fs::create_directories(out_dir);
  std::unique_ptr<data::DepthProvider> provider =
      provider_for(cfg, (fs::path(out_dir) / ".depth_tmp").string());
  const eval::EvalReport report = eval::robustness_eval(
      *state.online_backbone, train, val, rc, provider.get());

  io::write_text_file((fs::path(out_dir) / "eval.json").string(),
                      report.to_json());
  io::write_text_file((fs::path(out_dir) / "eval.csv").string(),
                      report.to_csv());
  io::write_text_file((fs::path(out_dir) / "eval.txt").string(),
                      report.to_table());
  return report;
}

void cmd_report_sweep(const std::string& sweep_json_path,
                      const std::string& out_dir) {
  const json sweep = json::parse(io::read_text_file(sweep_json_path));
  if (!sweep.contains("cells") || !sweep["cells"].is_array() ||
      sweep["cells"].empty())
    throw ConfigError("sweep config needs a non-empty 'cells' array");
  const std::string parameter =
      sweep.value("parameter", std::string("parameter"));

  fs::create_directories(out_dir);
  std::vector<SweepCell> cells;
  for (const json& c : sweep["cells"]) {
    SweepCell cell;
    cell.label = c.at("label").get<std::string>();
    cell.parameter = c.value("parameter", 0.0);
    cell.report_path = c.at("report").get<std::string>();
    cells.push_back(cell);
  }

  std::string csv = "label,parameter,top1_clean,corrupted_mean";
  std::string table = parameter + "  Top-1  Corrupted\n";
  plot::Series clean_series{"top1", {}, {}};
  plot::Series corr_series{"corrupted", {}, {}};
  bool first = true;
  std::vector<std::string> categories;
  for (const SweepCell& cell : cells) {
    const eval::EvalReport r =
        eval::EvalReport::from_json(io::read_text_file(cell.report_path));
    if (first) {
      for (const auto& [cat, _] : r.category_means) {
        csv += "," + cat;
        categories.push_back(cat);
      }
      csv += "\n";
      first = false;
    }
    char line[256];
    std::snprintf(line, sizeof(line), "%s  %.2f  %.2f\n", cell.label.c_str(),
                  r.top1_clean, r.corrupted_mean);
    table += line;
    csv += cell.label + "," + std::to_string(cell.parameter) + "," +
           std::to_string(r.top1_clean) + "," + std::to_string(r.corrupted_mean);
    for (const std::string& cat : categories) {
      const auto it = r.category_means.find(cat);
      csv += "," + std::to_string(it == r.category_means.end() ? 0.0 : it->second);
    }
    csv += "\n";
    clean_series.x.push_back(cell.parameter);
    clean_series.y.push_back(r.top1_clean);
    corr_series.x.push_back(cell.parameter);
    corr_series.y.push_back(r.corrupted_mean);
  }

  io::write_text_file((fs::path(out_dir) / "sweep.csv").string(), csv);
  io::write_text_file((fs::path(out_dir) / "sweep.txt").string(), table);
  plot::write_line_plot((fs::path(out_dir) / "sweep.png").string(),
                        "accuracy vs " + parameter, parameter, "accuracy",
                        {clean_series, corr_series});
  std::cout << table;
}

int run_cli(std::vector<std::string> args) {
  CLI::App app{"depth-aware self-supervised learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_root = "runs", checkpoint, out_path, out_dir;
  std::vector<std::string> overrides;

  auto add_config = [&](CLI::App* cmd, bool required = true) {
    auto* opt = cmd->add_option("--config", config_path, "run config JSON");
    if (required) opt->required();
    cmd->add_option("--set", overrides,
                    "dotted-key config overrides, e.g. optim.lr=0.01");
  };

  CLI::App* p_pretrain = app.add_subcommand("pretrain", "run SSL pretraining");
  add_config(p_pretrain);
  p_pretrain->add_option("--out", out_root, "runs directory");

  CLI::App* p_render =
      app.add_subcommand("render", "render one novel view from RGB + depth");
  std::string image_path, depth_path;
  std::vector<double> shift{0.0, 0.0, 0.0};
  int num_planes = 32;
  p_render->add_option("--image", image_path)->required();
  p_render->add_option("--depth", depth_path)->required();
  p_render->add_option("--shift", shift, "x y z camera shifts")
      ->expected(3);
  p_render->add_option("--planes", num_planes);
  p_render->add_option("--out", out_path)->required();

  CLI::App* p_viewbank =
      app.add_subcommand("viewbank", "pre-render the per-sample view bank");
  add_config(p_viewbank);

  CLI::App* p_corrupt = app.add_subcommand("corrupt", "corrupt one image");
  std::string kind = "gaussian_noise";
  int severity = 3;
  std::uint64_t seed = 0;
  p_corrupt->add_option("--image", image_path)->required();
  p_corrupt->add_option("--kind", kind);
  p_corrupt->add_option("--severity", severity);
  p_corrupt->add_option("--seed", seed);
  p_corrupt->add_option("--out", out_path)->required();

  CLI::App* p_knn = app.add_subcommand("knn", "kNN evaluation of a checkpoint");
  add_config(p_knn);
  p_knn->add_option("--checkpoint", checkpoint)->required();

  CLI::App* p_probe =
      app.add_subcommand("linear-probe", "linear probe over a lr grid");
  add_config(p_probe);
  p_probe->add_option("--checkpoint", checkpoint)->required();

  CLI::App* p_report =
      app.add_subcommand("report", "robustness report or sweep rendering");
  std::string sweep_path;
  auto* report_cfg = p_report->add_option("--config", config_path);
  p_report->add_option("--set", overrides);
  p_report->add_option("--checkpoint", checkpoint);
  p_report->add_option("--sweep", sweep_path, "sweep JSON of report cells");
  p_report->add_option("--out", out_dir, "output directory")->required();

  args.insert(args.begin(), "dssl");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (p_pretrain->parsed()) {
      const PretrainOutcome out =
          pretrain(load_run_config(config_path, overrides), out_root);
      std::cout << "run_dir " << out.run_dir << "\n"
                << "epochs " << out.epochs_completed << "\n"
                << "final_loss " << out.final_loss << "\n";
      if (out.final_knn) std::cout << "final_knn " << *out.final_knn << "\n";
    } else if (p_render->parsed()) {
      cmd_render(image_path, depth_path, shift[0], shift[1], shift[2],
                 num_planes, out_path);
    } else if (p_viewbank->parsed()) {
      const data::ViewBankResult r =
          cmd_viewbank(load_run_config(config_path, overrides));
      std::cout << "built " << r.built << " skipped " << r.skipped << "\n";
      for (const std::string& e : r.errors) std::cerr << "error: " << e << "\n";
    } else if (p_corrupt->parsed()) {
      cmd_corrupt(image_path, kind, severity, seed, out_path);
    } else if (p_knn->parsed()) {
      std::cout << "knn_accuracy "
                << cmd_knn(checkpoint, load_run_config(config_path, overrides))
                << "\n";
    } else if (p_probe->parsed()) {
      const eval::ProbeResult r =
          cmd_linear_probe(checkpoint, load_run_config(config_path, overrides));
      std::cout << "best_lr " << r.best_lr << "\n"
                << "best_accuracy " << r.best_accuracy << "\n";
      for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
    } else if (p_report->parsed()) {
      if (!sweep_path.empty()) {
        cmd_report_sweep(sweep_path, out_dir);
      } else {
        if (checkpoint.empty() || report_cfg->count() == 0)
          throw ConfigError(
              "report needs either --sweep or --checkpoint with --config");
        const eval::EvalReport r = cmd_report_eval(
            checkpoint, load_run_config(config_path, overrides), out_dir);
        std::cout << r.to_table();
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "dssl: " << e.what() << "\n";
    return exit_code_for_current_exception();
  }
  return kExitOk;
}

}  // namespace dssl::cli
