#include "attdicnn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "attdicnn/rng.hpp"

namespace attdicnn::sampling {

std::vector<std::size_t> ImageDataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (int label : labels) {
    if (label < 0 || label >= static_cast<int>(counts.size()))
      throw std::out_of_range("label " + std::to_string(label) + " outside class list");
    ++counts[static_cast<std::size_t>(label)];
  }
  return counts;
}

std::vector<double> minmax_normalize(const std::vector<double>& series) {
  if (series.empty()) return {};
  auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(series.size());
  if (hi == lo) return out;  // constant series -> zeros
  double range = hi - lo;
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - lo) / range;
  return out;
}

namespace {

double squared_distance(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace

ImageDataset smote_balance(const ImageDataset& dataset, const SamplerConfig& config) {
  if (dataset.images.size() != dataset.labels.size())
    throw std::invalid_argument("image/label count mismatch");
  if (config.k_neighbors < 1) throw std::invalid_argument("k_neighbors must be >= 1");

  auto counts = dataset.class_counts();
  std::size_t majority = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());

  ImageDataset out = dataset;
  out.synthetic.assign(dataset.images.size(), false);
  if (!dataset.synthetic.empty()) out.synthetic = dataset.synthetic;
  out.synthetic.resize(dataset.images.size(), false);
  out.source_ids.resize(dataset.images.size());

  Rng rng(config.seed);

  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::size_t have = counts[c];
    if (have == majority) continue;
    if (have < 2)
      throw std::invalid_argument("class \"" + dataset.class_names[c] +
                                  "\" has fewer than 2 samples; SMOTE needs neighbors");

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
      if (dataset.labels[i] == static_cast<int>(c)) members.push_back(i);

    // k is capped at class size - 1 so small classes still balance.
    std::size_t k = std::min<std::size_t>(config.k_neighbors, members.size() - 1);

    // Neighbor lists among originals of the class, by Euclidean pixel distance.
    std::vector<std::vector<std::size_t>> neighbors(members.size());
    for (std::size_t a = 0; a < members.size(); ++a) {
      std::vector<std::pair<double, std::size_t>> scored;
      scored.reserve(members.size() - 1);
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (a == b) continue;
        scored.emplace_back(squared_distance(dataset.images[members[a]].pixels,
                                             dataset.images[members[b]].pixels),
                            b);
      }
      std::sort(scored.begin(), scored.end());
      for (std::size_t t = 0; t < k; ++t) neighbors[a].push_back(scored[t].second);
    }

    for (std::size_t need = majority - have, made = 0; made < need; ++made) {
      std::size_t base = rng.uniform_index(members.size());
      std::size_t nn = neighbors[base][rng.uniform_index(k)];
      double u = rng.uniform();

      const auto& a = dataset.images[members[base]];
      const auto& b = dataset.images[members[nn]];
      layout::FdlImage synth;
      synth.side = a.side;
      synth.label = static_cast<int>(c);
      synth.pixels.resize(a.pixels.size());
      for (std::size_t p = 0; p < a.pixels.size(); ++p) {
        double va = a.pixels[p], vb = b.pixels[p];
        double v = va + u * (vb - va);
        double lo = std::min(va, vb), hi = std::max(va, vb);
        synth.pixels[p] = static_cast<float>(v < lo ? lo : (v > hi ? hi : v));
      }
      out.images.push_back(std::move(synth));
      out.labels.push_back(static_cast<int>(c));
      out.synthetic.push_back(true);
      out.source_ids.push_back("smote_" + dataset.class_names[c] + "_" +
                               std::to_string(made));
    }
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    const std::vector<int>& labels, double ratio, std::uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("split ratio must lie in (0, 1)");

  int n_classes = 0;
  for (int l : labels) n_classes = std::max(n_classes, l + 1);

  std::vector<std::vector<std::size_t>> per_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw std::out_of_range("negative label");
    per_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  Rng rng(seed);
  for (auto& members : per_class) rng.shuffle(members);

  // Largest-remainder apportionment of the train totals.
  std::size_t target_train =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(labels.size())));
  std::vector<std::size_t> train_count(per_class.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    double quota = ratio * static_cast<double>(per_class[c].size());
    train_count[c] = static_cast<std::size_t>(std::floor(quota));
    assigned += train_count[c];
    remainders.emplace_back(-(quota - std::floor(quota)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (const auto& [neg_rem, c] : remainders) {
    if (assigned >= target_train) break;
    if (train_count[c] < per_class[c].size()) {
      ++train_count[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> train, test;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (std::size_t i = 0; i < per_class[c].size(); ++i)
      (i < train_count[c] ? train : test).push_back(per_class[c][i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

std::pair<ImageDataset, ImageDataset> stratified_split(const ImageDataset& dataset,
                                                       double ratio, std::uint64_t seed) {
  auto [train_idx, test_idx] = stratified_split_indices(dataset.labels, ratio, seed);
  return {subset(dataset, train_idx), subset(dataset, test_idx)};
}

std::vector<Fold> stratified_kfold(const std::vector<int>& labels, int folds,
                                   std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");

  int n_classes = 0;
  for (int l : labels) n_classes = std::max(n_classes, l + 1);
  std::vector<std::vector<std::size_t>> per_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    per_class[static_cast<std::size_t>(labels[i])].push_back(i);

  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (!per_class[c].empty() && per_class[c].size() < static_cast<std::size_t>(folds))
      throw std::invalid_argument("class " + std::to_string(c) + " has " +
                                  std::to_string(per_class[c].size()) +
                                  " samples, fewer than " + std::to_string(folds) +
                                  " folds");

  Rng rng(seed);
  for (auto& members : per_class) rng.shuffle(members);

  std::vector<Fold> out(static_cast<std::size_t>(folds));
  for (auto& members : per_class)
    for (std::size_t i = 0; i < members.size(); ++i)
      out[i % static_cast<std::size_t>(folds)].val_idx.push_back(members[i]);

  for (int f = 0; f < folds; ++f) {
    auto& fold = out[static_cast<std::size_t>(f)];
    std::sort(fold.val_idx.begin(), fold.val_idx.end());
    std::vector<bool> in_val(labels.size(), false);
    for (std::size_t i : fold.val_idx) in_val[i] = true;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!in_val[i]) fold.train_idx.push_back(i);
  }
  return out;
}

ImageDataset subset(const ImageDataset& dataset, const std::vector<std::size_t>& indices) {
  ImageDataset out;
  out.class_names = dataset.class_names;
  out.seed = dataset.seed;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(dataset.images[i]);
    out.labels.push_back(dataset.labels[i]);
    if (i < dataset.source_ids.size()) out.source_ids.push_back(dataset.source_ids[i]);
    out.synthetic.push_back(i < dataset.synthetic.size() ? bool(dataset.synthetic[i])
                                                         : false);
  }
  return out;
}

}  // namespace attdicnn::sampling
