#include "sdvit/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "sdvit/data.hpp"
#include "sdvit/errors.hpp"
#include "sdvit/kernels.hpp"

namespace sdvit {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < num_classes; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < num_classes; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  if (preds.size() != labels.size()) {
    throw InvalidArgument("confusion_matrix: " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
  }
  if (num_classes == 0) throw InvalidArgument("confusion_matrix: num_classes must be >= 1");
  ConfusionMatrix cm{num_classes, std::vector<std::uint64_t>(num_classes * num_classes, 0)};
  const auto in_range = [&](int v) { return v >= 0 && static_cast<std::size_t>(v) < num_classes; };
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!in_range(preds[i]) || !in_range(labels[i])) {
      throw InvalidArgument("confusion_matrix: value out of range at index " + std::to_string(i));
    }
    cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]))++;
  }
  return cm;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm, const char* who) {
  if (cm.total() == 0) throw InvalidArgument(std::string(who) + ": confusion matrix is empty");
}

double ratio(std::uint64_t a, std::uint64_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

double bma(const ConfusionMatrix& cm) {
  require_nonempty(cm, "bma");
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) {
    const auto support = cm.row_sum(c);
    if (support == 0) continue;
    sum += ratio(cm.at(c, c), support);
    ++classes;
  }
  return sum / static_cast<double>(classes);
}

WeightedScores weighted_prf(const ConfusionMatrix& cm) {
  require_nonempty(cm, "weighted_prf");
  WeightedScores w;
  const double total = static_cast<double>(cm.total());
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) {
    ClassScores s;
    s.support = cm.row_sum(c);
    s.precision = ratio(cm.at(c, c), cm.col_sum(c));
    s.recall = ratio(cm.at(c, c), s.support);
    s.f1 = harmonic(s.precision, s.recall);
    const double weight = static_cast<double>(s.support) / total;
    w.precision += weight * s.precision;
    w.f1 += weight * s.f1;
    trace += cm.at(c, c);
    w.per_class.push_back(s);
  }
  w.accuracy = static_cast<double>(trace) / total;
  // support/total * tp/support summed over classes is trace/total; taking it
  // in that form keeps weighted recall and accuracy equal to the last bit.
  w.recall = w.accuracy;
  return w;
}

BinaryReport binary_cancer_report(const ConfusionMatrix& cm, const MalignantFn& malignant) {
  const MalignantFn is_pos = malignant ? malignant : MalignantFn(&ClassTaxonomy::malignant);
  BinaryReport r;
  for (std::size_t t = 0; t < cm.num_classes; ++t) {
    for (std::size_t p = 0; p < cm.num_classes; ++p) {
      const bool tp = is_pos(static_cast<int>(t)), pp = is_pos(static_cast<int>(p));
      const auto n = cm.at(t, p);
      if (tp && pp) r.tp += n;
      if (tp && !pp) r.fn += n;
      if (!tp && pp) r.fp += n;
      if (!tp && !pp) r.tn += n;
    }
  }
  r.accuracy = ratio(r.tp + r.tn, r.tp + r.tn + r.fp + r.fn);
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

MetricsReport make_report(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  MetricsReport r;
  r.confusion = confusion_matrix(preds, labels, num_classes);
  r.bma = bma(r.confusion);
  r.weighted = weighted_prf(r.confusion);
  r.cancer = binary_cancer_report(r.confusion);
  return r;
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "metric,value\n";
  out << "bma," << report.bma << '\n';
  out << "accuracy," << report.weighted.accuracy << '\n';
  out << "weighted_precision," << report.weighted.precision << '\n';
  out << "weighted_recall," << report.weighted.recall << '\n';
  out << "weighted_f1," << report.weighted.f1 << '\n';
  const auto& names = ClassTaxonomy::short_names();
  for (std::size_t c = 0; c < report.weighted.per_class.size(); ++c) {
    const std::string name = c < names.size() ? names[c] : "class" + std::to_string(c);
    const ClassScores& s = report.weighted.per_class[c];
    out << "precision_" << name << ',' << s.precision << '\n';
    out << "recall_" << name << ',' << s.recall << '\n';
    out << "f1_" << name << ',' << s.f1 << '\n';
    out << "support_" << name << ',' << s.support << '\n';
  }
  out << "cancer_accuracy," << report.cancer.accuracy << '\n';
  out << "cancer_precision," << report.cancer.precision << '\n';
  out << "cancer_recall," << report.cancer.recall << '\n';
  out << "cancer_f1," << report.cancer.f1 << '\n';
  out << "cancer_tp," << report.cancer.tp << '\n';
  out << "cancer_fn," << report.cancer.fn << '\n';
  out << "cancer_tn," << report.cancer.tn << '\n';
  out << "cancer_fp," << report.cancer.fp << '\n';
  out << '\n' << "true\\pred";
  const std::size_t k = report.confusion.num_classes;
  for (std::size_t p = 0; p < k; ++p) out << ',' << (p < names.size() ? names[p] : std::to_string(p));
  out << '\n';
  for (std::size_t t = 0; t < k; ++t) {
    out << (t < names.size() ? names[t] : std::to_string(t));
    for (std::size_t p = 0; p < k; ++p) out << ',' << report.confusion.at(t, p);
    out << '\n';
  }
}

BenchReport bench_throughput(const ViTModel& model, const Tensor& images, std::size_t batch_size,
                             std::size_t warmup_batches, std::size_t reps) {
  if (images.ndim() != 4 || images.dim(0) == 0) throw InvalidArgument("bench_throughput: no samples");
  if (batch_size == 0 || reps == 0) throw InvalidArgument("bench_throughput: batch_size and reps must be >= 1");
  if (warmup_batches == 0) throw InvalidArgument("bench_throughput: warmup must be >= 1");
  NoGradGuard no_grad;
  const std::size_t n = images.dim(0);
  const std::size_t per = images.numel() / n;
  std::vector<Tensor> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    Shape shape = images.shape();
    shape[0] = b;
    std::vector<float> data(images.data().begin() + start * per, images.data().begin() + (start + b) * per);
    batches.emplace_back(shape, std::move(data));
  }
  for (std::size_t w = 0; w < warmup_batches; ++w) forward(model, batches[w % batches.size()], Mode::eval);

  std::vector<double> seconds;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const Tensor& b : batches) forward(model, b, Mode::eval);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(seconds.begin(), seconds.end());
  BenchReport report;
  report.samples = n;
  report.seconds = seconds[(seconds.size() - 1) / 2];
  report.items_per_second = static_cast<double>(n) / report.seconds;
  report.repetitions = reps;
  report.warmup_batches = warmup_batches;
  report.batch_size = batch_size;
  report.threads = kernels::num_threads();
  report.param_count = param_count(model);
  return report;
}

void write_bench_csv(std::span<const BenchReport> rows, std::span<const std::string> names,
                     const std::filesystem::path& path) {
  if (rows.size() != names.size()) throw InvalidArgument("write_bench_csv: one name per row");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "model,params,items_per_second,samples,seconds,repetitions,warmup_batches,batch_size,threads\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const BenchReport& r = rows[i];
    out << names[i] << ',' << r.param_count << ',' << r.items_per_second << ',' << r.samples << ',' << r.seconds
        << ',' << r.repetitions << ',' << r.warmup_batches << ',' << r.batch_size << ',' << r.threads << '\n';
  }
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> pca_2d(const RowMatrix& x) {
  RowMatrix centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(std::max<Eigen::Index>(1, x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  std::vector<double> out(static_cast<std::size_t>(x.rows()) * 2, 0.0);
  for (int k = 0; k < 2 && k < d; ++k) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0) axis = -axis;  // fix the sign so output is reproducible
    Eigen::VectorXd proj = centered * axis;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i) * 2 + k] = proj(i);
  }
  return out;
}

// Row-conditional affinities p_{j|i} whose entropy matches log(perplexity).
RowMatrix conditional_affinities(const RowMatrix& d2, double perplexity) {
  const Eigen::Index n = d2.rows();
  const double target = std::log(perplexity);
  RowMatrix p = RowMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = -INFINITY, hi = INFINITY;
    for (int iter = 0; iter < 100; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = std::exp(-d2(i, j) * beta);
        p(i, j) = v;
        sum += v;
        weighted += d2(i, j) * v;
      }
      sum = std::max(sum, 1e-300);
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (Eigen::Index j = 0; j < n; ++j) p(i, j) /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

std::vector<double> tsne_2d(const RowMatrix& x, std::uint64_t seed, const TsneConfig& cfg) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  RowMatrix d2 = (-2.0 * x * x.transpose()).colwise() + sq;
  d2 = d2.rowwise() + sq.transpose();
  d2 = d2.cwiseMax(0.0);

  RowMatrix p = conditional_affinities(d2, cfg.perplexity);
  p = (p + p.transpose()).eval() / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  RowMatrix y(n, 2), velocity = RowMatrix::Zero(n, 2), gains = RowMatrix::Ones(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = init(rng), y(i, 1) = init(rng);

  RowMatrix q(n, n), grad(n, 2);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double exaggeration = it < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = it < cfg.exaggeration_iterations ? 0.5 : 0.8;
    double qsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      q(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        q(i, j) = q(j, i) = v;
        qsum += 2.0 * v;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = q(i, j);
        const double mult = (exaggeration * p(i, j) - std::max(w / qsum, 1e-12)) * w;
        gx += mult * (y(i, 0) - y(j, 0));
        gy += mult * (y(i, 1) - y(j, 1));
      }
      grad(i, 0) = 4.0 * gx;
      grad(i, 1) = 4.0 * gy;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0) == (velocity(i, k) > 0);
        gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
        velocity(i, k) = momentum * velocity(i, k) - cfg.learning_rate * gains(i, k) * grad(i, k);
        y(i, k) += velocity(i, k);
      }
    }
    y = y.rowwise() - y.colwise().mean();
  }
  return std::vector<double>(y.data(), y.data() + n * 2);
}

}  // namespace

std::vector<double> project_embeddings(std::span<const float> embeddings, std::size_t n, std::size_t dim,
                                       Projection method, std::uint64_t seed, const TsneConfig& tsne) {
  if (embeddings.size() != n * dim) throw InvalidArgument("project_embeddings: buffer is not n x dim");
  if (n < 3) throw InvalidArgument("project_embeddings: need at least 3 points");
  if (dim == 0) throw InvalidArgument("project_embeddings: dim must be >= 1");
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n * dim; ++i) x.data()[i] = embeddings[i];
  if (method == Projection::pca) return pca_2d(x);
  if (n > 2000) throw InvalidArgument("project_embeddings: exact t-SNE supports at most 2000 points");
  if (!(tsne.perplexity > 0.0) || tsne.perplexity >= static_cast<double>(n - 1) / 3.0) {
    throw InvalidArgument("project_embeddings: perplexity must be in (0, (n - 1) / 3)");
  }
  return tsne_2d(x, seed, tsne);
}

void write_projection_csv(std::span<const double> points, std::span<const int> labels,
                          const std::filesystem::path& path) {
  if (points.size() != 2 * labels.size()) throw InvalidArgument("write_projection_csv: one label per point");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "x,y,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << points[2 * i] << ',' << points[2 * i + 1] << ',' << labels[i] << '\n';
}

}  // namespace sdvit
