#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dssl/data.hpp"
#include "dssl/io.hpp"

using namespace dssl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("dssl_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const fs::path& p) {
  return io::read_text_file(p.string());
}

void write_fixture_image(const fs::path& p, int h, int w, float fill) {
  Image img(3, h, w);
  for (float& v : img.data) v = fill;
  io::write_png(p.string(), img);
}

}  // namespace

TEST_CASE("depth sidecar round trip is byte-identical") {
  TempDir tmp("sidecar");
  Rng rng(1);
  DepthMap d(7, 5);
  for (float& v : d.values) v = static_cast<float>(rng.uniform());
  const std::string path = (tmp.path / "a.dpt").string();
  io::write_depth(path, d);
  const std::string first = file_bytes(path);
  const DepthMap loaded = io::read_depth(path);
  CHECK(loaded.values == d.values);
  io::write_depth(path, loaded);
  CHECK(file_bytes(path) == first);
}

TEST_CASE("png round trip preserves 8-bit data") {
  TempDir tmp("png");
  Rng rng(2);
  Image img(3, 9, 11);
  for (float& v : img.data)
    v = static_cast<float>(rng.uniform_int(256)) / 255.0f;
  const std::string path = (tmp.path / "x.png").string();
  io::write_png(path, img);
  const Image loaded = io::read_png(path);
  REQUIRE(loaded.same_shape(img));
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(loaded.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
}

TEST_CASE("load_dataset: fixture with 2 classes x 2 images") {
  TempDir tmp("manifest");
  for (const char* cls : {"ant", "bee"}) {
    fs::create_directories(tmp.path / "train" / cls);
    write_fixture_image(tmp.path / "train" / cls / "a.png", 8, 8, 0.5f);
    write_fixture_image(tmp.path / "train" / cls / "b.png", 8, 8, 0.25f);
  }
  // One depth sidecar present, others absent.
  DepthMap d(8, 8);
  io::write_depth((tmp.path / "train" / "ant" / "a.dpt").string(), d);

  const data::DatasetManifest m =
      data::load_dataset(tmp.path.string(), "train");
  REQUIRE(m.entries.size() == 4);
  CHECK(m.class_names == std::vector<std::string>{"ant", "bee"});
  CHECK(m.entries[0].label == 0);
  CHECK(m.entries[1].label == 0);
  CHECK(m.entries[2].label == 1);
  CHECK(m.entries[3].label == 1);
  CHECK_FALSE(m.entries[0].depth_path.empty());
  CHECK(m.entries[1].depth_path.empty());

  // Deterministic reload.
  const data::DatasetManifest m2 =
      data::load_dataset(tmp.path.string(), "train");
  for (size_t i = 0; i < m.entries.size(); ++i)
    CHECK(m.entries[i].image_path == m2.entries[i].image_path);

  // JSON cache round trip.
  const data::DatasetManifest m3 =
      data::manifest_from_json(data::manifest_to_json(m));
  CHECK(m3.entries.size() == m.entries.size());
  CHECK(m3.class_names == m.class_names);
}

TEST_CASE("load_dataset: shape-mismatched sidecar is an error") {
  TempDir tmp("mismatch");
  fs::create_directories(tmp.path / "train" / "c");
  write_fixture_image(tmp.path / "train" / "c" / "a.png", 8, 8, 0.1f);
  io::write_depth((tmp.path / "train" / "c" / "a.dpt").string(),
                  DepthMap(4, 4));
  CHECK_THROWS_AS(data::load_dataset(tmp.path.string(), "train"), ShapeError);
}

TEST_CASE("load_dataset: empty roots are errors") {
  TempDir tmp("empty");
  CHECK_THROWS_AS(data::load_dataset(tmp.path.string(), "train"), IoError);
  fs::create_directories(tmp.path / "train");
  CHECK_THROWS_AS(data::load_dataset(tmp.path.string(), "train"), IoError);
}

TEST_CASE("synthetic dataset: byte-identical regeneration and balance") {
  TempDir tmp1("synth1");
  TempDir tmp2("synth2");
  data::SyntheticConfig cfg;
  cfg.canvas = 16;
  cfg.seed = 42;
  data::generate_synthetic_dataset(cfg, 32, 16, tmp1.path.string());
  data::generate_synthetic_dataset(cfg, 32, 16, tmp2.path.string());

  const data::DatasetManifest m1 =
      data::load_dataset(tmp1.path.string(), "train");
  const data::DatasetManifest m2 =
      data::load_dataset(tmp2.path.string(), "train");
  REQUIRE(m1.entries.size() == 32);
  REQUIRE(m2.entries.size() == 32);
  for (size_t i = 0; i < m1.entries.size(); ++i) {
    CHECK(file_bytes(m1.entries[i].image_path) ==
          file_bytes(m2.entries[i].image_path));
    CHECK(file_bytes(m1.entries[i].depth_path) ==
          file_bytes(m2.entries[i].depth_path));
  }

  // 32 train over 8 classes: exactly 4 per class.
  std::vector<int> counts(8, 0);
  for (const auto& e : m1.entries) ++counts[e.label];
  for (int c : counts) CHECK(c == 4);
}

TEST_CASE("synthetic dataset: foreground is nearer than the background") {
  data::SyntheticConfig cfg;
  cfg.canvas = 24;
  cfg.distractor_prob = 0.0;
  for (int i = 0; i < 8; ++i) {
    const data::SyntheticSceneSpec spec = data::sample_scene(cfg, 0, i);
    auto [rgb, depth] = data::render_scene(spec);
    REQUIRE(spec.layers.size() == 1);
    const auto& fg = spec.layers.back();
    // Shape pixels carry the layer disparity; everything else is background.
    float max_disp = 0.0f;
    for (float v : depth.values) max_disp = std::max(max_disp, v);
    CHECK(max_disp == fg.disparity);
    CHECK(max_disp > spec.background_disparity);
    CHECK(depth.at(0, 0) == spec.background_disparity);
  }
}

TEST_CASE("view bank: identity render, idempotence, interrupted resume") {
  TempDir tmp("bank");
  data::SyntheticConfig synth;
  synth.canvas = 16;
  synth.seed = 7;
  data::generate_synthetic_dataset(synth, 8, 8, tmp.path.string());
  data::DatasetManifest m = data::load_dataset(tmp.path.string(), "train");

  data::ViewBankConfig cfg;
  cfg.k = 1;
  cfg.range_x = cfg.range_y = cfg.range_z = 0.0;
  cfg.render.num_planes = 8;

  SUBCASE("zero-range bank reproduces the source images") {
    const data::ViewBankResult r = data::build_view_bank(m, cfg);
    CHECK(r.built == 8);
    CHECK(r.errors.empty());
    for (const auto& e : m.entries) {
      REQUIRE_FALSE(e.bank_dir.empty());
      const augment::ViewBank bank = data::open_view_bank(e.bank_dir);
      REQUIRE(bank.k == 1);
      const Image view = bank.get(0);
      const Image src = io::read_png(e.image_path);
      float linf = 0.0f;
      for (size_t i = 0; i < src.data.size(); ++i)
        linf = std::max(linf, std::abs(view.data[i] - src.data[i]));
      // PNG quantization adds at most half a level on top of the render.
      CHECK(linf <= 1.0f / 255.0f);
    }
  }

  SUBCASE("rebuild skips complete entries") {
    data::build_view_bank(m, cfg);
    const data::ViewBankResult again = data::build_view_bank(m, cfg);
    CHECK(again.built == 0);
    CHECK(again.skipped == 8);
  }

  SUBCASE("interrupted run completes to the same byte-identical bank") {
    data::ViewBankConfig wide = cfg;
    wide.k = 2;
    wide.range_x = 0.3;
    wide.seed = 5;

    data::DatasetManifest full = data::load_dataset(tmp.path.string(), "train");
    data::build_view_bank(full, wide);
    std::vector<std::string> reference;
    for (const auto& e : full.entries)
      for (int i = 0; i < wide.k; ++i)
        reference.push_back(file_bytes(
            fs::path(e.bank_dir) / ("view_" + std::to_string(i) + ".png")));

    // Wipe, then simulate an interruption: build only the first 3 samples.
    fs::remove_all(tmp.path / ".viewbank");
    data::DatasetManifest partial =
        data::load_dataset(tmp.path.string(), "train");
    data::DatasetManifest head = partial;
    head.entries.resize(3);
    data::build_view_bank(head, wide);

    data::DatasetManifest resumed =
        data::load_dataset(tmp.path.string(), "train");
    const data::ViewBankResult r = data::build_view_bank(resumed, wide);
    CHECK(r.skipped == 3);
    CHECK(r.built == 5);
    size_t idx = 0;
    for (const auto& e : resumed.entries)
      for (int i = 0; i < wide.k; ++i)
        CHECK(file_bytes(fs::path(e.bank_dir) /
                         ("view_" + std::to_string(i) + ".png")) ==
              reference[idx++]);
  }

  SUBCASE("missing depth is a per-sample error, not fatal") {
    fs::remove(m.entries[0].depth_path);
    data::DatasetManifest reloaded =
        data::load_dataset(tmp.path.string(), "train");
    const data::ViewBankResult r = data::build_view_bank(reloaded, cfg);
    CHECK(r.errors.size() == 1);
    CHECK(r.built == 7);
  }
}

TEST_CASE("depth providers: sidecar, zero and command hook") {
  TempDir tmp("providers");
  fs::create_directories(tmp.path / "train" / "c");
  write_fixture_image(tmp.path / "train" / "c" / "a.png", 6, 6, 0.5f);
  DepthMap d(6, 6);
  for (size_t i = 0; i < d.values.size(); ++i)
    d.values[i] = static_cast<float>(i) / 35.0f;
  io::write_depth((tmp.path / "train" / "c" / "a.dpt").string(), d);
  const data::DatasetManifest m =
      data::load_dataset(tmp.path.string(), "train");
  const Image rgb = io::read_png(m.entries[0].image_path);

  CHECK(data::make_sidecar_provider()->depth_for(rgb, m.entries[0]).values ==
        d.values);
  CHECK(data::make_zero_provider()->depth_for(rgb, m.entries[0]).all_zero());

  // The command hook contract: `cmd <in.png> <out.dpt>`. A stub script
  // stands in for an external monocular estimator.
  const std::string canned = (tmp.path / "canned.dpt").string();
  io::write_depth(canned, d);
  const std::string script = (tmp.path / "estimator.sh").string();
  io::write_text_file(script, "#!/bin/sh\ncp \"" + canned + "\" \"$2\"\n");
  fs::permissions(script, fs::perms::owner_all);
  auto provider =
      data::make_command_provider(script, (tmp.path / "tmp").string());
  const DepthMap got = provider->depth_for(rgb, m.entries[0]);
  CHECK(got.height == 6);
  CHECK(got.width == 6);
  // Command output is min-max normalized to [0,1] like any estimator depth.
  CHECK(got.values == normalize_depth(d).values);
}
