#ifndef ATTDICNN_SAMPLING_HPP
#define ATTDICNN_SAMPLING_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attdicnn/layout.hpp"

namespace attdicnn::sampling {

struct ImageDataset {
  std::vector<layout::FdlImage> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> source_ids;   // parallel to images when known
  std::vector<bool> synthetic;           // marks SMOTE outputs
  std::uint64_t seed = 13;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> class_counts() const;
};

struct SamplerConfig {
  int k_neighbors = 5;
  std::uint64_t seed = 13;
  double split_ratio = 0.8;
  int folds = 10;
};

// (x - min) / (max - min); a constant series maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& series);

// SMOTE on flattened pixel vectors: every class is raised to the majority
// count by interpolating between a minority sample and one of its k nearest
// same-class neighbors. Originals are preserved and synthetics flagged.
ImageDataset smote_balance(const ImageDataset& dataset, const SamplerConfig& config);

// Per-class proportional split with largest-remainder rounding; shuffling is
// a deterministic function of (labels, seed).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    const std::vector<int>& labels, double ratio, std::uint64_t seed);

std::pair<ImageDataset, ImageDataset> stratified_split(const ImageDataset& dataset,
                                                       double ratio, std::uint64_t seed);

struct Fold {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
};

// Stratified k-fold: validation folds partition the indices and per-class
// counts differ by at most one across folds.
std::vector<Fold> stratified_kfold(const std::vector<int>& labels, int folds,
                                   std::uint64_t seed);

ImageDataset subset(const ImageDataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace attdicnn::sampling

#endif
