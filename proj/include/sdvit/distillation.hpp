#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sdvit/losses.hpp"
#include "sdvit/vit.hpp"

namespace sdvit {

struct BlockSelection {
  std::vector<std::size_t> keep_indices;  // strictly increasing teacher block indices

  // Throws InvalidArgument if empty, unsorted, or out of range for the teacher.
  void validate(std::size_t teacher_layers) const;
  // 0, 1, ..., n-1
  static BlockSelection prefix(std::size_t n);
  // Parses "0,2,4,7,9,11".
  static BlockSelection parse(const std::string& text);
};

// Student whose block j is a copy of teacher block keep_indices[j]. Embeddings,
// final norm and heads are copied too; with per-layer heads, student head j is
// teacher head keep_indices[j].
ViTModel init_student_from_teacher(const ViTModel& teacher, const BlockSelection& sel);

// Drops the last block (and its head when heads are per layer).
ViTModel strip_last_block(const ViTModel& model);

// A scalar loss plus its unweighted components, for logging.
struct LossBreakdown {
  Tensor total;
  float task = 0.0f;
  float distil_ce = 0.0f;
  float cosine = 0.0f;
  float mse = 0.0f;
  float kl = 0.0f;
};

// w_task * CE(student, labels) + w_distil_ce * CE(student, softmax(teacher / T), T)
//   + w_cosine * mean_j cos_dist(student cls_j, teacher cls_{alignment[j]})
//   + w_mse * mse(student logits, teacher logits)
// added in that order. Terms with zero weight are skipped and report 0.
// `alignment` maps student layers to teacher layers; empty means identity.
// The teacher output must come from a no-grad forward.
LossBreakdown skin_distil_loss(const ForwardOutput& student, const ForwardOutput& teacher,
                               std::span<const int> labels, const LossSpec& spec,
                               std::span<const std::size_t> alignment = {});

// sum_i layer_weights[i] * CE(per_layer_logits[i], labels)
LossBreakdown fcvit_loss(std::span<const Tensor> per_layer_logits, std::span<const int> labels,
                         std::span<const float> layer_weights);
std::vector<float> uniform_layer_weights(std::size_t num_layers);

// CE at the top head plus, for every active i below the top,
// KL(softmax(logits_{i+1}) detached || softmax(logits_i)).
// `active_heads` must be a contiguous run ending at the top layer.
LossBreakdown fcvitprobs_loss(std::span<const Tensor> per_layer_logits, std::span<const int> labels,
                              std::span<const std::size_t> active_heads);

struct ScheduleConfig {
  std::size_t M = 2;  // epochs with only the top head
  std::size_t N = 1;  // epochs per added head
  std::size_t P = 5;  // final epochs training everything
};

struct TrainPhase {
  std::size_t begin_epoch = 0;
  std::size_t end_epoch = 0;  // exclusive
  std::vector<std::size_t> active_heads;     // ascending
  std::vector<std::size_t> trainable_heads;  // ascending
  bool backbone_trainable = false;
  std::string recipe = "fcvitprobs";

  std::size_t epochs() const { return end_epoch - begin_epoch; }
};

// Phase 0 trains head L-1 for M epochs; phase p in 1..L-1 adds head L-1-p for
// N epochs; the last phase trains every parameter for P epochs. Before the last
// phase only the active heads train.
std::vector<TrainPhase> build_fcvitprobs_schedule(const ScheduleConfig& cfg, std::size_t num_layers);

std::size_t schedule_epochs(const std::vector<TrainPhase>& phases);

}  // namespace sdvit
