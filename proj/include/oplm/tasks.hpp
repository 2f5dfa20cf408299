#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oplm/tensor.hpp"

namespace oplm {

using Rng = std::mt19937_64;

enum class TaskKind { Regression, Classification };

/// A set of (input, target) pairs stored row-wise.
struct Examples {
  Tensor inputs;   // [n x input_dim]
  Tensor targets;  // [n x output_dim]

  std::size_t size() const { return inputs.rank() == 2 ? inputs.rows() : 0; }
  std::size_t input_dim() const { return inputs.cols(); }
  std::size_t output_dim() const { return targets.cols(); }

  /// Rows reordered so that row i of the result is row order[i].
  Examples permuted(const std::vector<std::size_t>& order) const;
};

struct TaskMeta {
  TaskKind kind = TaskKind::Regression;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  double amplitude = 0.0;  // sine only
  double phase = 0.0;      // sine only
};

struct Task {
  Examples support;
  Examples query;
  TaskMeta meta;
};

/// Throws ContractError when the support is empty or the two sets disagree on dims.
void validate_task(const Task& task);

/// y = amplitude * sin(x - phase)
struct SineTask {
  double amplitude = 1.0;
  double phase = 0.0;

  static constexpr double kMinAmplitude = 0.1;
  static constexpr double kMaxAmplitude = 5.0;
  static constexpr double kMinInput = -5.0;
  static constexpr double kMaxInput = 5.0;

  double operator()(double x) const;
  Examples sample(Rng& rng, std::size_t n) const;
};

SineTask sample_sine_parameters(Rng& rng);
Task sample_sine_task(Rng& rng, std::size_t k_shot, std::size_t queries = 50);

/// N-way k-shot episode around fresh unit-norm class centers in `dim`
/// dimensions; each example is its center plus spread * N(0, I).
Task sample_synthetic_episode(Rng& rng, std::size_t n_way, std::size_t k_shot,
                              std::size_t queries_per_class, std::size_t dim, double spread);

/// Grayscale images grouped by class, pixels scaled to [0, 1] and flattened.
struct ImageDataset {
  std::vector<std::string> class_names;
  std::vector<std::vector<Tensor>> images;  // images[class][i], rank 1
  std::size_t width = 0;
  std::size_t height = 0;
  std::string split = "all";

  std::size_t class_count() const { return class_names.size(); }
  std::size_t pixel_count() const { return width * height; }
};

/// Reads root/<class>/<image> for PGM (P2/P5) and PNG files. Classes and files
/// are visited in sorted order.
ImageDataset load_image_dataset(const std::filesystem::path& root);

/// Decodes a single image file to grayscale [0, 1]; sets width/height.
Tensor load_grayscale_image(const std::filesystem::path& file, std::size_t& width,
                            std::size_t& height);

/// Partitions classes (in stored order) into disjoint train/val/test datasets.
struct DatasetSplits {
  ImageDataset train, val, test;
};
DatasetSplits split_by_class(const ImageDataset& ds, std::size_t train_classes,
                             std::size_t val_classes);

/// Samples n_way classes without replacement, then k_shot + queries_per_class
/// distinct images per class. Labels are a random relabeling onto 0..N-1.
Task sample_image_episode(const ImageDataset& ds, Rng& rng, std::size_t n_way, std::size_t k_shot,
                          std::size_t queries_per_class);

/// Index of the largest entry in each row.
std::vector<std::size_t> argmax_rows(const Tensor& m);

}  // namespace oplm
