#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "dssl/data.hpp"
#include "dssl/eval.hpp"
#include "dssl/io.hpp"

using namespace dssl;
using namespace dssl::eval;
namespace fs = std::filesystem;

namespace {

nn::Tensor rows(std::vector<std::vector<double>> data) {
  const int n = static_cast<int>(data.size());
  const int d = static_cast<int>(data[0].size());
  nn::Tensor t(nn::Shape{n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) t.data[i * d + j] = data[i][j];
  return t;
}

nn::Tensor random_rows(Rng& rng, int n, int d) {
  nn::Tensor t(nn::Shape{n, d});
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Independent brute-force classifier: repeated max extraction instead of a
// sort, same tie conventions.
int brute_force_predict(const nn::Tensor& train_x,
                        const std::vector<int>& train_y, const double* query,
                        int d, int k, double temperature) {
  const int n = train_x.dim(0);
  auto cosine = [&](int t) {
    double dot = 0.0, nq = 0.0, nt = 0.0;
    for (int j = 0; j < d; ++j) {
      dot += query[j] * train_x.data[t * d + j];
      nq += query[j] * query[j];
      nt += train_x.data[t * d + j] * train_x.data[t * d + j];
    }
    return dot / std::sqrt(std::max(nq, 1e-24) * std::max(nt, 1e-24));
  };
  std::vector<bool> used(n, false);
  const int n_classes = 1 + *std::max_element(train_y.begin(), train_y.end());
  std::vector<double> scores(n_classes, 0.0);
  for (int pick = 0; pick < k; ++pick) {
    int best = -1;
    double best_sim = -INFINITY;
    for (int t = 0; t < n; ++t) {
      if (used[t]) continue;
      const double s = cosine(t);
      if (s > best_sim) {
        best_sim = s;
        best = t;
      }
    }
    used[best] = true;
    scores[train_y[best]] += std::exp(best_sim / temperature);
  }
  int best_class = 0;
  for (int c = 1; c < n_classes; ++c)
    if (scores[c] > scores[best_class]) best_class = c;
  return best_class;
}

Image gradient_image(int h, int w) {
  Image img(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(c, y, x) =
            0.15f + 0.7f * (x + y + 7.0f * c) / (h + w + 21.0f);
  return img;
}

}  // namespace

TEST_CASE("knn: unique duplicate train point wins at k=1") {
  const nn::Tensor train = rows({{1, 0}, {0, 1}, {-1, 0}});
  const std::vector<int> labels{2, 1, 0};
  const nn::Tensor test = rows({{0.9, 0.05}});
  CHECK(knn_eval(train, labels, test, {2}, 1, 0.1) == 100.0);
}

TEST_CASE("knn: two separated clusters classify perfectly at k=3") {
  Rng rng(1);
  std::vector<std::vector<double>> train_rows;
  std::vector<int> train_y;
  for (int i = 0; i < 10; ++i) {
    train_rows.push_back({1.0 + 0.05 * rng.normal(), 0.05 * rng.normal()});
    train_y.push_back(0);
    train_rows.push_back({-1.0 + 0.05 * rng.normal(), 0.05 * rng.normal()});
    train_y.push_back(1);
  }
  std::vector<std::vector<double>> test_rows;
  std::vector<int> test_y;
  for (int i = 0; i < 6; ++i) {
    test_rows.push_back({1.0 + 0.05 * rng.normal(), 0.05 * rng.normal()});
    test_y.push_back(0);
    test_rows.push_back({-1.0 + 0.05 * rng.normal(), 0.05 * rng.normal()});
    test_y.push_back(1);
  }
  CHECK(knn_eval(rows(train_rows), train_y, rows(test_rows), test_y, 3, 0.1) ==
        100.0);
}

TEST_CASE("knn: matches the brute-force oracle exactly on random instances") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 10 + static_cast<int>(rng.uniform_int(91));  // <= 100
    const int d = 3 + static_cast<int>(rng.uniform_int(6));
    const int classes = 2 + static_cast<int>(rng.uniform_int(4));
    const int k = 1 + static_cast<int>(rng.uniform_int(std::min(n, 8)));
    const nn::Tensor train = random_rows(rng, n, d);
    std::vector<int> train_y(n);
    for (int& y : train_y) y = static_cast<int>(rng.uniform_int(classes));
    const nn::Tensor test = random_rows(rng, 12, d);

    const std::vector<int> pred = knn_predict(train, train_y, test, k, 0.1);
    for (int i = 0; i < 12; ++i)
      CHECK(pred[i] == brute_force_predict(train, train_y,
                                           test.data.data() + i * d, d, k,
                                           0.1));
  }
}

TEST_CASE("knn: input validation") {
  const nn::Tensor train = rows({{1, 0}, {0, 1}});
  const std::vector<int> y{0, 1};
  const nn::Tensor test = rows({{1, 0}});
  CHECK_THROWS_AS(knn_eval(train, y, test, {0}, 0, 0.1), ValidationError);
  CHECK_THROWS_AS(knn_eval(train, y, test, {0}, 3, 0.1), ValidationError);
}

TEST_CASE("knn: permuted labels fall to chance within 3 sigma") {
  Rng rng(3);
  const int n = 400, classes = 4;
  const nn::Tensor train = random_rows(rng, n, 8);
  const nn::Tensor test = random_rows(rng, n, 8);
  std::vector<int> train_y(n), test_y(n);
  for (int i = 0; i < n; ++i) {
    train_y[i] = static_cast<int>(rng.uniform_int(classes));
    test_y[i] = static_cast<int>(rng.uniform_int(classes));
  }
  const double acc = knn_eval(train, train_y, test, test_y, 10, 0.1) / 100.0;
  const double p = 1.0 / classes;
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(acc - p) <= 3.5 * sigma);
}

TEST_CASE("linear probe: separable blobs reach 99% for some grid lr") {
  Rng rng(4);
  auto blob = [&](double cx, double cy) {
    return std::vector<double>{cx + 0.1 * rng.normal(), cy + 0.1 * rng.normal()};
  };
  std::vector<std::vector<double>> train_rows, val_rows;
  std::vector<int> train_y, val_y;
  for (int i = 0; i < 60; ++i) {
    train_rows.push_back(blob(2, 0));
    train_y.push_back(0);
    train_rows.push_back(blob(-2, 1));
    train_y.push_back(1);
  }
  for (int i = 0; i < 20; ++i) {
    val_rows.push_back(blob(2, 0));
    val_y.push_back(0);
    val_rows.push_back(blob(-2, 1));
    val_y.push_back(1);
  }
  const ProbeResult r =
      linear_probe(rows(train_rows), train_y, rows(val_rows), val_y,
                   {0.2, 0.5, 0.8, 5.0}, 30, 32, 0);
  CHECK(r.best_accuracy >= 99.0);
}

TEST_CASE("linear probe: constant features reach only the class prior") {
  std::vector<std::vector<double>> train_rows(90, {1.0, 1.0});
  std::vector<std::vector<double>> val_rows(30, {1.0, 1.0});
  std::vector<int> train_y, val_y;
  for (int i = 0; i < 90; ++i) train_y.push_back(i < 60 ? 0 : 1);
  for (int i = 0; i < 30; ++i) val_y.push_back(i < 20 ? 0 : 1);
  const ProbeResult r = linear_probe(rows(train_rows), train_y, rows(val_rows),
                                     val_y, {0.5}, 20, 16, 0);
  CHECK(r.best_accuracy == doctest::Approx(100.0 * 20 / 30.0));
}

TEST_CASE("linear probe: diverging lr is skipped with a warning") {
  Rng rng(40);
  // Enormous feature magnitudes with an enormous lr overflow the logits.
  nn::Tensor train_x = random_rows(rng, 64, 4);
  for (double& v : train_x.data) v *= 1e8;
  nn::Tensor val_x = random_rows(rng, 16, 4);
  std::vector<int> train_y(64), val_y(16);
  for (int i = 0; i < 64; ++i) train_y[i] = i % 2;
  for (int i = 0; i < 16; ++i) val_y[i] = i % 2;

  const ProbeResult r = linear_probe(train_x, train_y, val_x, val_y,
                                     {1e300, 0.5}, 3, 16, 0);
  CHECK(r.per_lr.size() == 1);
  CHECK(r.warnings.size() == 1);
  CHECK(r.best_lr == 0.5);

  CHECK_THROWS_AS(linear_probe(train_x, train_y, val_x, val_y, {1e300}, 3, 16, 0),
                  NumericError);
}

TEST_CASE("corrupt: gaussian severity strictly decreases PSNR") {
  const Image img = gradient_image(24, 24);
  double prev = INFINITY;
  for (int s = 1; s <= 5; ++s) {
    Rng rng(77);  // same noise field, scaled by the severity sigma
    const Image out = corrupt(img, {Corruption::gaussian_noise, s}, rng);
    const double cur = psnr(img, out);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("corrupt: brightness with zero delta is the identity") {
  const Image img = gradient_image(8, 8);
  const Image out = detail::brightness(img, 0.0);
  CHECK(out.data == img.data);
}

TEST_CASE("corrupt: impulse noise at rate 1 makes every pixel binary") {
  Rng rng(5);
  const Image img = gradient_image(12, 12);
  const Image out = detail::impulse_noise(img, 1.0, rng);
  for (float v : out.data) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("corrupt: determinism under a fixed seed") {
  const Image img = gradient_image(16, 16);
  for (Corruption kind : all_corruptions()) {
    Rng r1(123), r2(123);
    const Image a = corrupt(img, {kind, 3}, r1);
    const Image b = corrupt(img, {kind, 3}, r2);
    CHECK(a.data == b.data);
  }
}

TEST_CASE("corrupt: unknown kind strings are rejected") {
  CHECK_THROWS_AS(corruption_from_string("fog_of_war"), ConfigError);
  const Image img = gradient_image(8, 8);
  Rng rng(1);
  CHECK_THROWS_AS(corrupt(img, {Corruption::gaussian_noise, 9}, rng),
                  ValidationError);
}

TEST_CASE("report: aggregation is recomputable from cells") {
  EvalReport r;
  r.top1_clean = 80.0;
  r.cells = {{Corruption::gaussian_noise, 1, 70.0},
             {Corruption::shot_noise, 1, 60.0},
             {Corruption::defocus_blur, 2, 50.0},
             {Corruption::brightness, 3, 90.0},
             {Corruption::jpeg, 4, 40.0}};
  aggregate(r);
  CHECK(r.category_means.at("noise") == doctest::Approx(65.0).epsilon(1e-12));
  CHECK(r.category_means.at("blur") == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r.category_means.at("weather") == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(r.category_means.at("digital") == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(r.corrupted_mean == doctest::Approx((70 + 60 + 50 + 90 + 40) / 5.0));

  const EvalReport back = EvalReport::from_json(r.to_json());
  CHECK(back.cells.size() == r.cells.size());
  CHECK(back.category_means == r.category_means);
  CHECK(back.to_csv() == r.to_csv());
}

TEST_CASE("robustness_eval: single-spec run equals the full-grid cell") {
  // Synthetic mini dataset + tiny encoder; the per-cell rng depends only on
  // (seed, kind, severity, index) so grids and single cells agree.
  namespace dd = dssl::data;
  const fs::path root = fs::temp_directory_path() / "dssl_robust";
  fs::remove_all(root);
  dd::SyntheticConfig synth;
  synth.canvas = 16;
  synth.seed = 9;
  dd::generate_synthetic_dataset(synth, 24, 16, root.string());
  const dd::DatasetManifest train = dd::load_dataset(root.string(), "train");
  const dd::DatasetManifest val = dd::load_dataset(root.string(), "val");

  ssl::EncoderSpec spec;
  spec.backbone = ssl::BackboneKind::tiny_conv;
  spec.in_channels = 3;
  spec.feature_dim = 16;
  Rng init(5);
  std::unique_ptr<ssl::Backbone> enc = ssl::make_backbone(spec, init);
  // Batch-norm needs one training pass before eval mode works.
  {
    Rng r(6);
    nn::Tensor x(nn::Shape{8, 3, 16, 16});
    for (double& v : x.data) v = r.uniform();
    (void)enc->forward(nn::make_constant(x), true);
  }

  RobustnessConfig cfg;
  cfg.specs = {{Corruption::gaussian_noise, 2},
               {Corruption::contrast, 3},
               {Corruption::jpeg, 1}};
  cfg.knn_k = 5;
  cfg.seed = 31;

  const EvalReport full = robustness_eval(*enc, train, val, cfg);

  RobustnessConfig single = cfg;
  single.specs = {{Corruption::contrast, 3}};
  const EvalReport one = robustness_eval(*enc, train, val, single);

  CHECK(one.top1_clean == full.top1_clean);
  CHECK(one.cells.size() == 1);
  CHECK(one.cells[0].accuracy == full.cells[1].accuracy);
  fs::remove_all(root);
}
