#include "sdvit/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "sdvit/checkpoint.hpp"
#include "sdvit/errors.hpp"
#include "sdvit/ops.hpp"

namespace sdvit {

namespace {

// Keeps augmentation streams apart from synth_lesions streams built on the same seed.
constexpr std::uint64_t kAugmentSalt = 0xa076'1d64'78bd'642fULL;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  auto d = logits.data();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (d[r * cols + c] > d[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

// Restores requires_grad on every parameter when a phase ends or training throws.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<Tensor> params) : params_(std::move(params)) {}
  ~FreezeGuard() {
    for (Tensor& p : params_) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> params_;
};

void apply_phase(ViTModel& model, const TrainPhase& phase) {
  for (Tensor& p : model.backbone_parameters()) p.set_requires_grad(phase.backbone_trainable);
  for (std::size_t h = 0; h < model.heads.size(); ++h) {
    const bool on = std::binary_search(phase.trainable_heads.begin(), phase.trainable_heads.end(), h);
    for (Tensor& p : model.head_parameters(h)) p.set_requires_grad(on);
  }
}

std::vector<TrainPhase> phases_for(const ViTModel& model, const TrainConfig& cfg) {
  if (cfg.regime == Regime::fcvitprobs) {
    return build_fcvitprobs_schedule(cfg.schedule.value_or(ScheduleConfig{}), model.config.num_layers);
  }
  TrainPhase all;
  all.begin_epoch = 0;
  all.end_epoch = cfg.epochs;
  all.trainable_heads.resize(model.heads.size());
  std::iota(all.trainable_heads.begin(), all.trainable_heads.end(), 0);
  all.active_heads = all.trainable_heads;
  all.backbone_trainable = true;
  all.recipe = regime_name(cfg.regime);
  return {all};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::plain: return "plain";
    case Regime::skin_distil: return "skin_distil";
    case Regime::fcvit: return "fcvit";
    case Regime::fcvitprobs: return "fcvitprobs";
    case Regime::cascade_step: return "cascade_step";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (Regime r : {Regime::plain, Regime::skin_distil, Regime::fcvit, Regime::fcvitprobs, Regime::cascade_step})
    if (regime_name(r) == name) return r;
  throw InvalidArgument("unknown regime '" + name + "'");
}

bool regime_needs_teacher(Regime regime) { return regime == Regime::skin_distil || regime == Regime::cascade_step; }

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch_size < 1 || eval_batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(optim.learning_rate >= 0.0f)) throw InvalidArgument("learning rate must be >= 0");
  augment.validate();
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 10;
  c.batch_size = 16;
  c.optim.learning_rate = 5e-4f;
  c.cosine_decay = true;
  return c;
}

void History::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "epoch,loss_total,loss_task,loss_distil,loss_cosine,loss_mse,loss_kl,train_acc,eval_bma,eval_acc,seconds\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << fmt(r.loss_total) << ',' << fmt(r.loss_task) << ',' << fmt(r.loss_distil) << ','
        << fmt(r.loss_cosine) << ',' << fmt(r.loss_mse) << ',' << fmt(r.loss_kl) << ',' << fmt(r.train_acc) << ',';
    if (r.eval) out << fmt(r.eval->bma) << ',' << fmt(r.eval->weighted.accuracy);
    else out << ',';
    out << ',' << fmt(r.seconds) << '\n';
  }
}

History train(ViTModel& model, const ViTModel* teacher, const Dataset& train_set, const Dataset& test_set,
              const TrainConfig& cfg, const LossSpec& spec, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  spec.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  const bool needs = regime_needs_teacher(cfg.regime);
  if (needs && !teacher) throw InvalidArgument("train: regime " + regime_name(cfg.regime) + " needs a teacher");
  if (!needs && teacher) throw InvalidArgument("train: regime " + regime_name(cfg.regime) + " takes no teacher");
  if ((cfg.regime == Regime::fcvit || cfg.regime == Regime::fcvitprobs) && !model.config.per_layer_heads) {
    throw InvalidArgument("train: " + regime_name(cfg.regime) + " needs per-layer heads");
  }
  if (teacher && teacher->config.num_classes != model.config.num_classes) {
    throw InvalidArgument("train: teacher and student disagree on the class count");
  }
  std::vector<float> layer_weights = cfg.layer_weights;
  if (cfg.regime == Regime::fcvit) {
    if (layer_weights.empty()) layer_weights = uniform_layer_weights(model.config.num_layers);
    if (layer_weights.size() != model.config.num_layers) throw InvalidArgument("train: layer_weights length mismatch");
  }
  LossSpec step_spec = spec;
  if (cfg.regime == Regime::cascade_step) step_spec.w_cosine = step_spec.w_mse = step_spec.w_kl = 0.0f;

  const std::vector<TrainPhase> phases = phases_for(model, cfg);
  const std::size_t total_epochs = schedule_epochs(phases);
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * total_epochs);

  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  std::vector<Tensor> params = model.parameters();
  FreezeGuard guard(params);
  OptimState state{cfg.optim, 0, {}};
  History history;

  std::size_t phase_index = 0;
  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    while (epoch >= phases[phase_index].end_epoch) ++phase_index;
    const TrainPhase& phase = phases[phase_index];
    apply_phase(model, phase);
    const auto start = std::chrono::steady_clock::now();

    std::seed_seq drop_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(epoch), 0xd509u};
    std::mt19937_64 dropout_rng(drop_seq);

    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.phase = phase_index;
    rec.backbone_trainable = phase.backbone_trainable;
    if (model.config.per_layer_heads) rec.trainable_heads = phase.trainable_heads;
    std::size_t correct = 0;

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      std::vector<Image> images;
      std::vector<int> labels;
      images.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) {
        const Sample& s = train_set[order[i]];
        auto rng = sample_stream(cfg.seed ^ kAugmentSalt, epoch, order[i]);
        images.push_back(augment(s.image, cfg.augment, rng));
        labels.push_back(s.label);
      }
      const Tensor batch = batch_images(images);

      ForwardOutput out = forward(model, batch, Mode::train, &dropout_rng);
      LossBreakdown loss;
      auto fail = [&](const std::string& why) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << " batch " << b << ": " << why << " (task=" << loss.task
            << " distil_ce=" << loss.distil_ce << " cosine=" << loss.cosine << " mse=" << loss.mse
            << " kl=" << loss.kl << ")";
        throw NumericError(msg.str());
      };
      try {
        switch (cfg.regime) {
          case Regime::plain:
            loss.total = cross_entropy(out.final_logits, labels);
            loss.task = loss.total.item();
            break;
          case Regime::skin_distil:
          case Regime::cascade_step: {
            ForwardOutput t;
            {
              NoGradGuard no_grad;
              t = forward(*teacher, batch, Mode::eval);
            }
            loss = skin_distil_loss(out, t, labels, step_spec, cfg.alignment);
            break;
          }
          case Regime::fcvit:
            loss = fcvit_loss(out.per_layer_logits, labels, layer_weights);
            break;
          case Regime::fcvitprobs:
            loss = fcvitprobs_loss(out.per_layer_logits, labels, phase.active_heads);
            break;
        }
      } catch (const NumericError& e) {
        fail(e.what());
      }
      const float total = loss.total.item();
      if (!std::isfinite(total)) fail("total=" + std::to_string(total));
      loss.total.backward();

      std::vector<Tensor> step_params;
      for (const Tensor& p : params)
        if (p.requires_grad() && p.has_grad()) step_params.push_back(p);
      if (cfg.cosine_decay) {
        const double progress = static_cast<double>(state.step_count) / total_steps;
        state.hyper.learning_rate =
            static_cast<float>(0.5 * cfg.optim.learning_rate * (1.0 + std::cos(std::numbers::pi * progress)));
      }
      adamw_step(step_params, state);
      zero_grads(params);

      const double w = static_cast<double>(hi - lo);
      rec.loss_total += w * total;
      rec.loss_task += w * loss.task;
      rec.loss_distil += w * loss.distil_ce;
      rec.loss_cosine += w * loss.cosine;
      rec.loss_mse += w * loss.mse;
      rec.loss_kl += w * loss.kl;
      const std::vector<int> pred = argmax_rows(out.final_logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
    }
    const double dn = static_cast<double>(n);
    for (double* v : {&rec.loss_total, &rec.loss_task, &rec.loss_distil, &rec.loss_cosine, &rec.loss_mse, &rec.loss_kl})
      *v /= dn;
    rec.train_acc = static_cast<double>(correct) / dn;

    const bool last = epoch + 1 == total_epochs;
    const bool due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
    if (!test_set.empty() && (due || last)) {
      rec.eval = evaluate(model, test_set, cfg.eval_batch_size);
      if (rec.eval->bma > history.best_bma) {
        history.best_bma = rec.eval->bma;
        history.best_epoch = rec.epoch;
        if (!cfg.checkpoint_dir.empty()) save_checkpoint(model, cfg.checkpoint_dir / "best.sdvt");
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.records.push_back(rec);
    if (on_epoch) on_epoch(history.records.back());
  }
  if (!cfg.checkpoint_dir.empty()) {
    save_checkpoint(model, cfg.checkpoint_dir / "final.sdvt");
    history.write_csv(cfg.checkpoint_dir / "history.csv");
  }
  return history;
}

std::vector<int> predict(const ViTModel& model, const Dataset& samples, std::size_t batch_size) {
  if (samples.empty()) throw InvalidArgument("predict: empty sample set");
  if (batch_size < 1) throw InvalidArgument("predict: batch_size must be >= 1");
  NoGradGuard no_grad;
  std::vector<int> preds;
  preds.reserve(samples.size());
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, samples.size() - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const std::vector<int> p = argmax_rows(forward(model, batch_images(samples, idx), Mode::eval).final_logits);
    preds.insert(preds.end(), p.begin(), p.end());
  }
  return preds;
}

MetricsReport evaluate(const ViTModel& model, const Dataset& test_set, std::size_t batch_size) {
  if (test_set.empty()) throw InvalidArgument("evaluate: empty test set");
  const std::vector<int> preds = predict(model, test_set, batch_size);
  std::vector<int> labels;
  labels.reserve(test_set.size());
  for (const Sample& s : test_set) labels.push_back(s.label);
  return make_report(preds, labels, model.config.num_classes);
}

std::vector<float> embed(const ViTModel& model, const Dataset& samples, std::size_t batch_size) {
  if (samples.empty()) throw InvalidArgument("embed: empty sample set");
  NoGradGuard no_grad;
  std::vector<float> out;
  out.reserve(samples.size() * model.config.hidden_dim);
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, samples.size() - lo));
    std::iota(idx.begin(), idx.end(), lo);
    auto e = forward(model, batch_images(samples, idx), Mode::eval).cls_embedding.data();
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

void write_cascade_csv(const std::vector<CascadeEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "depth,params,bma,accuracy\n";
  for (const CascadeEntry& e : entries) out << e.depth << ',' << e.params << ',' << fmt(e.bma) << ',' << fmt(e.accuracy) << '\n';
}

std::vector<CascadeEntry> cascade_distill(const ViTModel& root_teacher, const Dataset& train_set,
                                          const Dataset& test_set, const TrainConfig& cfg, const LossSpec& spec,
                                          const std::filesystem::path& out_dir, const CascadeOptions& opts) {
  if (!root_teacher.config.per_layer_heads) throw InvalidArgument("cascade_distill: teacher needs per-layer heads");
  if (opts.min_depth < 1 || opts.min_depth > root_teacher.config.num_layers) {
    throw InvalidArgument("cascade_distill: min_depth out of range");
  }
  std::filesystem::create_directories(out_dir);
  TrainConfig step_cfg = cfg;
  step_cfg.regime = Regime::cascade_step;
  step_cfg.checkpoint_dir.clear();

  std::vector<CascadeEntry> entries;
  ViTModel teacher = root_teacher.clone();
  ViTModel student = root_teacher.clone();
  for (std::size_t depth = root_teacher.config.num_layers;; --depth) {
    if (opts.on_init) opts.on_init(student, teacher);
    History h = train(student, &teacher, train_set, test_set, step_cfg, spec);
    const std::string tag = "L" + std::to_string(depth);
    h.write_csv(out_dir / ("history_" + tag + ".csv"));
    CascadeEntry e;
    e.depth = depth;
    e.params = param_count(student);
    e.checkpoint = out_dir / ("cascade_" + tag + ".sdvt");
    save_checkpoint(student, e.checkpoint);
    const MetricsReport r = evaluate(student, test_set, cfg.eval_batch_size);
    e.bma = r.bma;
    e.accuracy = r.weighted.accuracy;
    entries.push_back(e);
    write_cascade_csv(entries, out_dir / "cascade.csv");
    if (opts.on_step) opts.on_step(e);
    if (depth == opts.min_depth) break;
    teacher = std::move(student);
    student = strip_last_block(teacher);
  }
  return entries;
}

}  // namespace sdvit
