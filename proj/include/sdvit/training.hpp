#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdvit/data.hpp"
#include "sdvit/distillation.hpp"
#include "sdvit/losses.hpp"
#include "sdvit/metrics.hpp"
#include "sdvit/optim.hpp"
#include "sdvit/vit.hpp"

namespace sdvit {

enum class Regime { plain, skin_distil, fcvit, fcvitprobs, cascade_step };

std::string regime_name(Regime regime);
Regime parse_regime(const std::string& name);  // throws InvalidArgument
bool regime_needs_teacher(Regime regime);

struct TrainConfig {
  std::size_t epochs = 20;  // ignored by fcvitprobs, whose schedule fixes the length
  std::size_t batch_size = 64;
  std::size_t eval_batch_size = 128;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;  // 0 evaluates only after the last epoch
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints
  AdamWHyper optim;
  bool cosine_decay = false;
  Regime regime = Regime::plain;
  std::optional<ScheduleConfig> schedule;  // fcvitprobs; defaults when absent
  std::vector<float> layer_weights;        // fcvit; empty means uniform
  std::vector<std::size_t> alignment;      // skin_distil cosine term; empty means identity
  AugConfig augment;

  void validate() const;
  // Desk-scale defaults: 10 epochs of batch 16 at lr 5e-4 with cosine decay.
  static TrainConfig desk();
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss_total = 0.0;
  double loss_task = 0.0;
  double loss_distil = 0.0;
  double loss_cosine = 0.0;
  double loss_mse = 0.0;
  double loss_kl = 0.0;
  double train_acc = 0.0;
  std::optional<MetricsReport> eval;
  double seconds = 0.0;
  std::size_t phase = 0;
  std::vector<std::size_t> trainable_heads;  // empty unless per-layer heads
  bool backbone_trainable = true;
};

struct History {
  std::vector<EpochRecord> records;
  std::size_t best_epoch = 0;  // 0 when never evaluated
  double best_bma = -1.0;

  void write_csv(const std::filesystem::path& path) const;
};

// Runs the regime's loss over shuffled, augmented mini-batches and updates
// `model` in place. `teacher` must be given exactly when the regime needs one;
// it is only ever read. With checkpoint_dir set, best.sdvt (by eval BMA) and
// final.sdvt are written there.
History train(ViTModel& model, const ViTModel* teacher, const Dataset& train_set, const Dataset& test_set,
              const TrainConfig& cfg, const LossSpec& spec = {},
              const std::function<void(const EpochRecord&)>& on_epoch = {});

// Argmax of the final logits, ties to the lowest class.
std::vector<int> predict(const ViTModel& model, const Dataset& samples, std::size_t batch_size);
MetricsReport evaluate(const ViTModel& model, const Dataset& test_set, std::size_t batch_size);

// Row-major [n, hidden] final class-token embeddings.
std::vector<float> embed(const ViTModel& model, const Dataset& samples, std::size_t batch_size);

struct CascadeEntry {
  std::size_t depth = 0;
  std::uint64_t params = 0;
  double bma = 0.0;
  double accuracy = 0.0;
  std::filesystem::path checkpoint;
};

struct CascadeOptions {
  // Invoked with each freshly initialized student and its teacher, before training.
  std::function<void(const ViTModel& student, const ViTModel& teacher)> on_init;
  std::function<void(const CascadeEntry&)> on_step;
  std::size_t min_depth = 1;
};

// Step 0 distils a same-size copy of `root_teacher`; each later step strips
// the last block of the previous student and distils it from that student.
// Writes cascade_L{depth}.sdvt, history_L{depth}.csv and cascade.csv (rewritten
// after every step, so a failure leaves the finished depths on disk).
std::vector<CascadeEntry> cascade_distill(const ViTModel& root_teacher, const Dataset& train_set,
                                          const Dataset& test_set, const TrainConfig& cfg, const LossSpec& spec,
                                          const std::filesystem::path& out_dir, const CascadeOptions& opts = {});

void write_cascade_csv(const std::vector<CascadeEntry>& entries, const std::filesystem::path& path);

}  // namespace sdvit
