#include <filesystem>
#include <fstream>

#include "cli.hpp"
#include "doctest.h"
#include "dssl/io.hpp"
#include "nlohmann/json.hpp"

using namespace dssl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("dssl_cli_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string tiny_config_json(const std::string& root) {
  json j;
  j["dataset"] = {{"root", root},
                  {"type", "synthetic"},
                  {"image_size", 16},
                  {"synthetic_train", 48},
                  {"synthetic_val", 16},
                  {"synthetic_seed", 3}};
  j["backbone"] = "tiny_conv";
  j["feature_dim"] = 16;
  j["method"] = {{"name", "byol"}, {"proj_hidden", 32}, {"proj_out", 16},
                 {"pred_hidden", 32}};
  j["optim"] = {{"lr", 0.05}, {"epochs", 4}, {"batch_size", 16}, {"seed", 5}};
  j["eval"] = {{"knn_every", 2}, {"knn_k", 5}};
  return j.dump();
}

std::vector<json> read_metrics(const fs::path& run_dir) {
  std::ifstream in(run_dir / "metrics.jsonl");
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("config: unknown keys are rejected with a config error") {
  CHECK_THROWS_AS(config::parse_config(R"({"optim": {"lr": 0.1, "lr2": 3}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"surprise": 1})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config("not json"), ConfigError);
}

TEST_CASE("config: probability and range validation") {
  config::RunConfig cfg = config::parse_config(R"({"dataset":{"root":"x"}})");
  cfg.depth.dropout_p = 1.5;
  CHECK_THROWS_AS(cfg.validate(false), ConfigError);
  cfg.depth.dropout_p = 0.5;
  cfg.views.enabled = true;
  cfg.views.q = -0.1;
  CHECK_THROWS_AS(cfg.validate(false), ConfigError);
}

TEST_CASE("config: folder roots must exist at path-checked validation") {
  config::RunConfig cfg = config::parse_config(
      R"({"dataset":{"root":"/definitely/not/a/real/path"}})");
  cfg.validate(false);  // structural validation alone passes
  CHECK_THROWS_AS(cfg.validate(true), ConfigError);
}

TEST_CASE("config: dotted-key overrides reach nested sections") {
  const std::string base = R"({"dataset": {"root": "r"}})";
  const std::string text = config::apply_overrides(
      base, {"optim.lr=0.25", "method.name=swav", "depth.use_depth=true"});
  const config::RunConfig cfg = config::parse_config(text);
  CHECK(cfg.optim.lr == 0.25);
  CHECK(ssl::method_name(cfg.method) == "swav");
  CHECK(cfg.depth.use_depth);
  CHECK_THROWS_AS(config::apply_overrides(base, {"no_equals_sign"}),
                  ConfigError);
}

TEST_CASE("config: echo is reproducible and drives the run dir name") {
  config::RunConfig cfg = config::parse_config(tiny_config_json("/tmp/ds"));
  const config::RunConfig echoed = config::parse_config(cfg.to_json());
  CHECK(echoed.to_json() == cfg.to_json());

  const std::string name = config::run_directory_name(cfg);
  CHECK(name.rfind("byol_ds_5_", 0) == 0);
  // Different seed, different name.
  config::RunConfig other = cfg;
  other.optim.seed = 6;
  CHECK(config::run_directory_name(other) != name);
}

TEST_CASE("cli: bad config file exits with code 2") {
  TempDir tmp("badcfg");
  const std::string cfg_path = (tmp.path / "bad.json").string();
  io::write_text_file(cfg_path, R"({"bogus_key": 1})");
  CHECK(cli::run_cli({"pretrain", "--config", cfg_path}) == cli::kExitConfig);
}

TEST_CASE("cli: missing files exit with code 4") {
  TempDir tmp("missing");
  CHECK(cli::run_cli({"render", "--image", "/nope.png", "--depth", "/nope.dpt",
                      "--out", (tmp.path / "o.png").string()}) == cli::kExitIo);
}

TEST_CASE("cli: render with zero shift reproduces the input image") {
  TempDir tmp("render");
  Rng rng(1);
  Image img(3, 16, 16);
  for (float& v : img.data)
    v = static_cast<float>(rng.uniform_int(256)) / 255.0f;
  DepthMap depth(16, 16);
  for (float& v : depth.values) v = static_cast<float>(rng.uniform());
  const std::string img_path = (tmp.path / "in.png").string();
  const std::string depth_path = (tmp.path / "in.dpt").string();
  const std::string out_path = (tmp.path / "out.png").string();
  io::write_png(img_path, img);
  io::write_depth(depth_path, depth);

  CHECK(cli::run_cli({"render", "--image", img_path, "--depth", depth_path,
                      "--shift", "0", "0", "0", "--out", out_path}) == 0);
  const Image out = io::read_png(out_path);
  float linf = 0.0f;
  for (size_t i = 0; i < img.data.size(); ++i)
    linf = std::max(linf, std::abs(out.data[i] - img.data[i]));
  CHECK(linf <= 1e-6f);
}

TEST_CASE("cli: corrupt subcommand is deterministic given a seed") {
  TempDir tmp("corrupt");
  Image img(3, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = (x + y + c) / 40.0f;
  const std::string in = (tmp.path / "in.png").string();
  io::write_png(in, img);
  const std::string out1 = (tmp.path / "o1.png").string();
  const std::string out2 = (tmp.path / "o2.png").string();
  CHECK(cli::run_cli({"corrupt", "--image", in, "--kind", "gaussian_noise",
                      "--severity", "3", "--seed", "9", "--out", out1}) == 0);
  CHECK(cli::run_cli({"corrupt", "--image", in, "--kind", "gaussian_noise",
                      "--severity", "3", "--seed", "9", "--out", out2}) == 0);
  CHECK(io::read_text_file(out1) == io::read_text_file(out2));
  CHECK(cli::run_cli({"corrupt", "--image", in, "--kind", "made_up",
                      "--out", out1}) == cli::kExitConfig);
}

TEST_CASE("cli: pretrain writes echo, metrics and checkpoints; resume matches") {
  TempDir tmp("pretrain");
  const std::string root = (tmp.path / "data").string();
  const config::RunConfig cfg = config::parse_config(tiny_config_json(root));

  // Uninterrupted reference run.
  const std::string out_a = (tmp.path / "runs_a").string();
  const cli::PretrainOutcome a = cli::pretrain(cfg, out_a);
  CHECK(a.epochs_completed == 4);
  CHECK(fs::exists(fs::path(a.run_dir) / "config.json"));
  CHECK(fs::exists(fs::path(a.run_dir) / "last.ckpt"));
  const std::vector<json> metrics_a = read_metrics(a.run_dir);
  REQUIRE(metrics_a.size() == 4);
  CHECK(metrics_a[1].contains("knn_val"));  // knn_every = 2

  // Config echo alone reproduces the run.
  const config::RunConfig echoed = config::parse_config(
      io::read_text_file((fs::path(a.run_dir) / "config.json").string()));
  CHECK(echoed.to_json() == cfg.to_json());

  // Interrupted run: stop after 2 epochs, then resume to completion.
  const std::string out_b = (tmp.path / "runs_b").string();
  const cli::PretrainOutcome b1 = cli::pretrain(cfg, out_b, 2);
  CHECK(b1.epochs_completed == 2);
  const cli::PretrainOutcome b2 = cli::pretrain(cfg, out_b);
  CHECK(b2.epochs_completed == 4);
  const std::vector<json> metrics_b = read_metrics(b2.run_dir);
  REQUIRE(metrics_b.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(metrics_b[e].at("loss").get<double>() ==
          doctest::Approx(metrics_a[e].at("loss").get<double>())
              .epsilon(1e-12));
  }

  // knn and linear-probe subcommands run against the final checkpoint.
  const std::string cfg_path = (tmp.path / "cfg.json").string();
  json probe_cfg = json::parse(tiny_config_json(root));
  probe_cfg["eval"]["probe_epochs"] = 5;
  probe_cfg["eval"]["probe_grid"] = {0.5, 5.0};
  io::write_text_file(cfg_path, probe_cfg.dump());
  const std::string ckpt = (fs::path(a.run_dir) / "last.ckpt").string();
  CHECK(cli::run_cli({"knn", "--config", cfg_path, "--checkpoint", ckpt}) == 0);
  CHECK(cli::run_cli({"linear-probe", "--config", cfg_path, "--checkpoint",
                      ckpt}) == 0);
}

TEST_CASE("cli: swav and simsiam pretraining paths run end to end") {
  TempDir tmp("methods");
  const std::string root = (tmp.path / "data").string();

  json j = json::parse(tiny_config_json(root));
  j["optim"]["epochs"] = 2;
  j["eval"]["knn_every"] = 0;

  SUBCASE("swav multi-crop") {
    j["method"] = {{"name", "swav"}, {"prototypes", 16}, {"proj_hidden", 32},
                   {"proj_out", 8}, {"n_local_crops", 2}, {"local_size", 16},
                   {"sinkhorn_iters", 3}};
    j["optim"]["optimizer"] = "adam";
    j["optim"]["lr"] = 0.001;
    const config::RunConfig cfg = config::parse_config(j.dump());
    const cli::PretrainOutcome out =
        cli::pretrain(cfg, (tmp.path / "runs").string());
    CHECK(out.epochs_completed == 2);
    CHECK(std::isfinite(out.final_loss));
  }

  SUBCASE("simsiam with depth channel and dropout") {
    j["method"] = {{"name", "simsiam"}, {"proj_hidden", 32}, {"proj_out", 16},
                   {"pred_hidden", 8}};
    j["depth"] = {{"use_depth", true}, {"dropout_p", 0.5}};
    const config::RunConfig cfg = config::parse_config(j.dump());
    const cli::PretrainOutcome out =
        cli::pretrain(cfg, (tmp.path / "runs").string());
    CHECK(out.epochs_completed == 2);
    CHECK(std::isfinite(out.final_loss));
    // The checkpointed encoder is 4-channel.
    ssl::TrainState st =
        ssl::load_checkpoint(out.run_dir + "/last.ckpt");
    CHECK(st.encoder_spec.in_channels == 4);
  }
}

TEST_CASE("cli: viewbank then 3d-view pretraining end to end") {
  TempDir tmp("views3d");
  const std::string root = (tmp.path / "data").string();
  json j = json::parse(tiny_config_json(root));
  j["optim"]["epochs"] = 2;
  j["eval"]["knn_every"] = 0;
  j["views"] = {{"enabled", true}, {"k", 3}, {"range_x", 0.3},
                {"range_y", 0.3}, {"range_z", 0.0}, {"q", 0.5},
                {"num_planes", 8}};
  const config::RunConfig cfg = config::parse_config(j.dump());

  // Bank building needs the dataset first.
  cli::ensure_dataset(cfg);
  const data::ViewBankResult bank = cli::cmd_viewbank(cfg);
  CHECK(bank.built == 48);
  CHECK(bank.errors.empty());

  const cli::PretrainOutcome out =
      cli::pretrain(cfg, (tmp.path / "runs").string());
  CHECK(out.epochs_completed == 2);
  CHECK(std::isfinite(out.final_loss));
}

TEST_CASE("cli: report sweep renders rows equal to the underlying reports") {
  TempDir tmp("sweep");
  eval::EvalReport r1;
  r1.top1_clean = 81.25;
  r1.cells = {{eval::Corruption::gaussian_noise, 3, 62.5}};
  eval::aggregate(r1);
  eval::EvalReport r2;
  r2.top1_clean = 75.0;
  r2.cells = {{eval::Corruption::gaussian_noise, 3, 68.75}};
  eval::aggregate(r2);
  io::write_text_file((tmp.path / "r1.json").string(), r1.to_json());
  io::write_text_file((tmp.path / "r2.json").string(), r2.to_json());

  json sweep;
  sweep["parameter"] = "dropout_p";
  sweep["cells"] = json::array();
  sweep["cells"].push_back({{"label", "p=0.0"},
                            {"parameter", 0.0},
                            {"report", (tmp.path / "r1.json").string()}});
  sweep["cells"].push_back({{"label", "p=0.5"},
                            {"parameter", 0.5},
                            {"report", (tmp.path / "r2.json").string()}});
  io::write_text_file((tmp.path / "sweep.json").string(), sweep.dump());

  const std::string out = (tmp.path / "out").string();
  CHECK(cli::run_cli({"report", "--sweep", (tmp.path / "sweep.json").string(),
                      "--out", out}) == 0);
  const std::string csv = io::read_text_file(out + "/sweep.csv");
  CHECK(csv.find("p=0.0,0.000000,81.250000,62.500000") != std::string::npos);
  CHECK(csv.find("p=0.5,0.500000,75.000000,68.750000") != std::string::npos);
  CHECK(fs::exists(fs::path(out) / "sweep.png"));
  CHECK(fs::exists(fs::path(out) / "sweep.txt"));
}
