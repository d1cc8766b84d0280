#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdvit/tensor.hpp"
#include "sdvit/vit.hpp"

namespace sdvit {

// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * num_classes + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;
};

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

// Mean per-class recall over classes that have at least one true sample.
double bma(const ConfusionMatrix& cm);

struct ClassScores {
  double precision = 0.0;  // 0 when the class is never predicted
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct WeightedScores {
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;     // support-weighted, equals accuracy
  double f1 = 0.0;
  std::vector<ClassScores> per_class;
};

WeightedScores weighted_prf(const ConfusionMatrix& cm);

struct BinaryReport {
  std::uint64_t tp = 0, fn = 0, tn = 0, fp = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

using MalignantFn = std::function<bool(int)>;

// Collapses the matrix to malignant (positive) vs benign. Defaults to the
// lesion taxonomy's malignant set.
BinaryReport binary_cancer_report(const ConfusionMatrix& cm, const MalignantFn& malignant = {});

struct MetricsReport {
  ConfusionMatrix confusion;
  double bma = 0.0;
  WeightedScores weighted;
  BinaryReport cancer;
};

MetricsReport make_report(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

// Long-form `metric,value` rows followed by the confusion matrix block.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

struct BenchReport {
  double items_per_second = 0.0;
  std::size_t samples = 0;
  double seconds = 0.0;  // timed region of the median repetition
  std::size_t repetitions = 0;
  std::size_t warmup_batches = 0;
  std::size_t batch_size = 0;
  int threads = 1;
  std::uint64_t param_count = 0;
};

// Times eval-mode forward passes over `images` ([N, C, H, W], already in
// memory) after `warmup_batches` untimed batches; reports the median of `reps`.
BenchReport bench_throughput(const ViTModel& model, const Tensor& images, std::size_t batch_size,
                             std::size_t warmup_batches, std::size_t reps);

void write_bench_csv(std::span<const BenchReport> rows, std::span<const std::string> names,
                     const std::filesystem::path& path);

enum class Projection { pca, tsne };

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  double learning_rate = 200.0;
};

// `embeddings` is row-major [n, dim]. Returns row-major [n, 2].
std::vector<double> project_embeddings(std::span<const float> embeddings, std::size_t n, std::size_t dim,
                                       Projection method, std::uint64_t seed, const TsneConfig& tsne = {});

void write_projection_csv(std::span<const double> points, std::span<const int> labels,
                          const std::filesystem::path& path);

}  // namespace sdvit
