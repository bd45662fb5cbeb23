#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "attdicnn/rng.hpp"
#include "attdicnn/sampling.hpp"

using namespace attdicnn;
using namespace attdicnn::sampling;

namespace {

layout::FdlImage tiny_image(Rng& rng, int label, int side = 8) {
  layout::FdlImage img;
  img.side = side;
  img.label = label;
  img.pixels.resize(static_cast<std::size_t>(side) * side);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

ImageDataset tiny_dataset(const std::vector<std::size_t>& counts, std::uint64_t seed = 5) {
  Rng rng(seed);
  ImageDataset ds;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    ds.class_names.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) {
      ds.images.push_back(tiny_image(rng, static_cast<int>(c)));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("minmax_normalize maps the range onto [0,1]") {
  CHECK(minmax_normalize({0.0, 5.0, 10.0}) == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("constant series normalize to zeros") {
  CHECK(minmax_normalize({3.0, 3.0, 3.0}) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("normalized output attains 0 and 1 for non-constant input") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(50);
    for (double& v : s) v = rng.uniform(-100, 100);
    auto n = minmax_normalize(s);
    CHECK(*std::min_element(n.begin(), n.end()) == 0.0);
    CHECK(*std::max_element(n.begin(), n.end()) == 1.0);
  }
}

TEST_CASE("smote raises every class to the majority count") {
  auto ds = tiny_dataset({10, 4});
  SamplerConfig cfg;
  auto out = smote_balance(ds, cfg);
  auto counts = out.class_counts();
  CHECK(counts == std::vector<std::size_t>{10, 10});
  CHECK(out.images.size() == 20);
}

TEST_CASE("smote preserves the originals as a prefix") {
  auto ds = tiny_dataset({6, 3, 5});
  auto out = smote_balance(ds, {});
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(out.images[i].pixels == ds.images[i].pixels);
    CHECK(out.labels[i] == ds.labels[i]);
    CHECK_FALSE(out.synthetic[i]);
  }
  for (std::size_t i = ds.images.size(); i < out.images.size(); ++i)
    CHECK(out.synthetic[i]);
}

TEST_CASE("synthetics lie componentwise inside the minority class envelope") {
  auto ds = tiny_dataset({12, 5});
  auto out = smote_balance(ds, {});
  std::size_t dim = ds.images[0].pixels.size();
  std::vector<float> lo(dim, 1e9f), hi(dim, -1e9f);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    if (ds.labels[i] != 1) continue;
    for (std::size_t p = 0; p < dim; ++p) {
      lo[p] = std::min(lo[p], ds.images[i].pixels[p]);
      hi[p] = std::max(hi[p], ds.images[i].pixels[p]);
    }
  }
  for (std::size_t i = ds.images.size(); i < out.images.size(); ++i) {
    REQUIRE(out.labels[i] == 1);
    for (std::size_t p = 0; p < dim; ++p) {
      CHECK(out.images[i].pixels[p] >= lo[p]);
      CHECK(out.images[i].pixels[p] <= hi[p]);
    }
  }
}

TEST_CASE("smote is deterministic under the seed") {
  auto ds = tiny_dataset({9, 4, 6});
  SamplerConfig cfg;
  cfg.seed = 99;
  auto a = smote_balance(ds, cfg);
  auto b = smote_balance(ds, cfg);
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i)
    CHECK(a.images[i].pixels == b.images[i].pixels);

  cfg.seed = 100;
  auto c = smote_balance(ds, cfg);
  bool any_different = false;
  for (std::size_t i = ds.images.size(); i < a.images.size(); ++i)
    if (a.images[i].pixels != c.images[i].pixels) any_different = true;
  CHECK(any_different);
}

TEST_CASE("already balanced input gains no synthetics") {
  auto ds = tiny_dataset({7, 7});
  auto out = smote_balance(ds, {});
  CHECK(out.images.size() == ds.images.size());
}

TEST_CASE("a class below two samples is rejected by name") {
  auto ds = tiny_dataset({5, 1});
  try {
    smote_balance(ds, {});
    FAIL("expected error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("c1") != std::string::npos);
  }
}

TEST_CASE("stratified split honors per-class proportions exactly on round numbers") {
  auto ds = tiny_dataset({50, 50});
  auto [train, test] = stratified_split(ds, 0.8, 13);
  CHECK(train.size() == 80);
  CHECK(test.size() == 20);
  auto tc = train.class_counts();
  CHECK(tc == std::vector<std::size_t>{40, 40});
  auto vc = test.class_counts();
  CHECK(vc == std::vector<std::size_t>{10, 10});
}

TEST_CASE("split is disjoint and exhaustive") {
  auto ds = tiny_dataset({13, 7, 21});
  auto [train_idx, test_idx] = stratified_split_indices(ds.labels, 0.8, 4);
  std::set<std::size_t> seen;
  for (auto i : train_idx) seen.insert(i);
  for (auto i : test_idx) {
    CHECK(seen.find(i) == seen.end());
    seen.insert(i);
  }
  CHECK(seen.size() == ds.labels.size());
}

TEST_CASE("split is a deterministic function of labels and seed") {
  auto ds = tiny_dataset({20, 15});
  auto a = stratified_split_indices(ds.labels, 0.8, 7);
  auto b = stratified_split_indices(ds.labels, 0.8, 7);
  CHECK(a == b);
  auto c = stratified_split_indices(ds.labels, 0.8, 8);
  CHECK(a != c);
}

TEST_CASE("kfold: 100 samples 50/50 over 10 folds gives 5+5 per fold") {
  auto ds = tiny_dataset({50, 50});
  auto folds = stratified_kfold(ds.labels, 10, 13);
  REQUIRE(folds.size() == 10);
  for (const auto& fold : folds) {
    CHECK(fold.val_idx.size() == 10);
    std::size_t c0 = 0;
    for (auto i : fold.val_idx) c0 += ds.labels[i] == 0;
    CHECK(c0 == 5);
  }
}

TEST_CASE("kfold validation folds partition the indices") {
  auto ds = tiny_dataset({17, 23, 30});
  auto folds = stratified_kfold(ds.labels, 5, 3);
  std::set<std::size_t> seen;
  for (const auto& fold : folds) {
    for (auto i : fold.val_idx) {
      CHECK(seen.find(i) == seen.end());
      seen.insert(i);
    }
    CHECK(fold.train_idx.size() + fold.val_idx.size() == ds.labels.size());
  }
  CHECK(seen.size() == ds.labels.size());
}

TEST_CASE("kfold per-class counts differ by at most one across folds") {
  auto ds = tiny_dataset({19, 28});
  auto folds = stratified_kfold(ds.labels, 6, 5);
  for (int cls = 0; cls < 2; ++cls) {
    std::size_t lo = static_cast<std::size_t>(-1), hi = 0;
    for (const auto& fold : folds) {
      std::size_t count = 0;
      for (auto i : fold.val_idx) count += ds.labels[i] == cls;
      lo = std::min(lo, count);
      hi = std::max(hi, count);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("kfold rejects more folds than the minority count") {
  auto ds = tiny_dataset({30, 4});
  CHECK_THROWS(stratified_kfold(ds.labels, 5, 1));
}
