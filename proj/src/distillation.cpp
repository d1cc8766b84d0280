#include "sdvit/distillation.hpp"

#include <sstream>

#include "sdvit/errors.hpp"
#include "sdvit/ops.hpp"

namespace sdvit {

void BlockSelection::validate(std::size_t teacher_layers) const {
  if (keep_indices.empty()) throw InvalidArgument("block selection is empty");
  for (std::size_t i = 0; i < keep_indices.size(); ++i) {
    if (keep_indices[i] >= teacher_layers) {
      throw InvalidArgument("block index " + std::to_string(keep_indices[i]) + " out of range for a " +
                            std::to_string(teacher_layers) + "-layer teacher");
    }
    if (i > 0 && keep_indices[i] <= keep_indices[i - 1]) {
      throw InvalidArgument("block indices must be strictly increasing");
    }
  }
}

BlockSelection BlockSelection::prefix(std::size_t n) {
  BlockSelection sel;
  for (std::size_t i = 0; i < n; ++i) sel.keep_indices.push_back(i);
  return sel;
}

BlockSelection BlockSelection::parse(const std::string& text) {
  BlockSelection sel;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("bad block index '" + item + "'");
    }
    if (used != item.size()) throw InvalidArgument("bad block index '" + item + "'");
    sel.keep_indices.push_back(v);
  }
  return sel;
}

namespace {

Linear copy_linear(const Linear& l) { return {l.weight.clone(), l.bias.clone()}; }
LayerNormParams copy_norm(const LayerNormParams& n) { return {n.gamma.clone(), n.beta.clone()}; }

TransformerBlock copy_block(const TransformerBlock& b) {
  return {copy_norm(b.norm1), copy_linear(b.query), copy_linear(b.key),    copy_linear(b.value),
          copy_linear(b.attn_out), copy_norm(b.norm2), copy_linear(b.fc1), copy_linear(b.fc2)};
}

}  // namespace

ViTModel init_student_from_teacher(const ViTModel& teacher, const BlockSelection& sel) {
  sel.validate(teacher.blocks.size());
  // Copy only what the student keeps; dropped blocks are never touched.
  ViTModel student;
  student.config = teacher.config;
  student.config.num_layers = sel.keep_indices.size();
  student.patch_proj = copy_linear(teacher.patch_proj);
  student.class_token = teacher.class_token.clone();
  student.pos_embed = teacher.pos_embed.clone();
  student.final_norm = copy_norm(teacher.final_norm);
  student.blocks.reserve(sel.keep_indices.size());
  for (std::size_t idx : sel.keep_indices) student.blocks.push_back(copy_block(teacher.blocks[idx]));
  if (teacher.config.per_layer_heads) {
    for (std::size_t idx : sel.keep_indices) student.heads.push_back(copy_linear(teacher.heads[idx]));
  } else {
    for (const Linear& h : teacher.heads) student.heads.push_back(copy_linear(h));
  }
  return student;
}

ViTModel strip_last_block(const ViTModel& model) {
  if (model.blocks.size() < 2) throw InvalidArgument("strip_last_block: model has a single block");
  return init_student_from_teacher(model, BlockSelection::prefix(model.blocks.size() - 1));
}

namespace {

void add_term(Tensor& total, const Tensor& term, float weight) {
  Tensor weighted = scale(term, weight);
  total = total.defined() ? add(total, weighted) : weighted;
}

Tensor finish(Tensor total) { return total.defined() ? total : Tensor::scalar(0.0f); }

}  // namespace

LossBreakdown skin_distil_loss(const ForwardOutput& student, const ForwardOutput& teacher,
                               std::span<const int> labels, const LossSpec& spec,
                               std::span<const std::size_t> alignment) {
  spec.validate();
  if (student.final_logits.dim(0) != teacher.final_logits.dim(0)) {
    throw InvalidArgument("skin_distil_loss: student and teacher batch sizes differ");
  }
  LossBreakdown out;
  Tensor total;
  if (spec.w_task > 0.0f) {
    Tensor ce = cross_entropy(student.final_logits, labels);
    out.task = ce.item();
    add_term(total, ce, spec.w_task);
  }
  if (spec.w_distil_ce > 0.0f) {
    Tensor target = softmax(teacher.final_logits.detach(), spec.temperature);
    Tensor ce = cross_entropy(student.final_logits, target, spec.temperature);
    out.distil_ce = ce.item();
    add_term(total, ce, spec.w_distil_ce);
  }
  if (spec.w_cosine > 0.0f) {
    const std::size_t layers = student.per_layer_hidden.size();
    if (layers == 0) throw InvalidArgument("skin_distil_loss: cosine term needs student hidden states");
    if (!alignment.empty() && alignment.size() != layers) {
      throw InvalidArgument("skin_distil_loss: alignment has " + std::to_string(alignment.size()) +
                            " entries for " + std::to_string(layers) + " student layers");
    }
    Tensor acc;
    for (std::size_t j = 0; j < layers; ++j) {
      const std::size_t t = alignment.empty() ? j : alignment[j];
      if (t >= teacher.per_layer_hidden.size()) {
        throw InvalidArgument("skin_distil_loss: cosine term needs teacher hidden state " + std::to_string(t));
      }
      Tensor term = cosine_distance_loss(select_token(student.per_layer_hidden[j], 0),
                                         select_token(teacher.per_layer_hidden[t], 0).detach());
      acc = acc.defined() ? add(acc, term) : term;
    }
    Tensor cos = scale(acc, 1.0f / static_cast<float>(layers));
    out.cosine = cos.item();
    add_term(total, cos, spec.w_cosine);
  }
  if (spec.w_mse > 0.0f) {
    Tensor mse = mse_loss(student.final_logits, teacher.final_logits.detach());
    out.mse = mse.item();
    add_term(total, mse, spec.w_mse);
  }
  out.total = finish(std::move(total));
  return out;
}

std::vector<float> uniform_layer_weights(std::size_t num_layers) {
  return std::vector<float>(num_layers, 1.0f / static_cast<float>(num_layers));
}

LossBreakdown fcvit_loss(std::span<const Tensor> per_layer_logits, std::span<const int> labels,
                         std::span<const float> layer_weights) {
  if (per_layer_logits.empty()) throw InvalidArgument("fcvit_loss: no per-layer logits");
  if (layer_weights.size() != per_layer_logits.size()) {
    throw InvalidArgument("fcvit_loss: " + std::to_string(layer_weights.size()) + " weights for " +
                          std::to_string(per_layer_logits.size()) + " layers");
  }
  LossBreakdown out;
  Tensor total;
  for (std::size_t i = 0; i < per_layer_logits.size(); ++i) {
    if (layer_weights[i] == 0.0f) continue;
    Tensor ce = cross_entropy(per_layer_logits[i], labels);
    out.task += layer_weights[i] * ce.item();
    add_term(total, ce, layer_weights[i]);
  }
  out.total = finish(std::move(total));
  return out;
}

LossBreakdown fcvitprobs_loss(std::span<const Tensor> per_layer_logits, std::span<const int> labels,
                              std::span<const std::size_t> active_heads) {
  const std::size_t layers = per_layer_logits.size();
  if (layers == 0) throw InvalidArgument("fcvitprobs_loss: no per-layer logits");
  if (active_heads.empty() || active_heads.back() != layers - 1) {
    throw InvalidArgument("fcvitprobs_loss: the top head must be active");
  }
  for (std::size_t i = 1; i < active_heads.size(); ++i) {
    if (active_heads[i] != active_heads[i - 1] + 1) {
      throw InvalidArgument("fcvitprobs_loss: active heads must be a contiguous run ending at the top");
    }
  }
  LossBreakdown out;
  Tensor total = cross_entropy(per_layer_logits[layers - 1], labels);
  out.task = total.item();
  for (std::size_t i = active_heads.front(); i + 1 < layers; ++i) {
    Tensor upper = softmax(per_layer_logits[i + 1].detach());
    Tensor kl = kl_divergence(upper, softmax(per_layer_logits[i]));
    out.kl += kl.item();
    total = add(total, kl);
  }
  out.total = total;
  return out;
}

std::vector<TrainPhase> build_fcvitprobs_schedule(const ScheduleConfig& cfg, std::size_t num_layers) {
  if (num_layers < 1) throw InvalidArgument("build_fcvitprobs_schedule: num_layers must be >= 1");
  std::vector<TrainPhase> phases;
  std::size_t epoch = 0;
  std::vector<std::size_t> active{num_layers - 1};
  auto push = [&](std::size_t epochs, bool everything) {
    TrainPhase p;
    p.begin_epoch = epoch;
    p.end_epoch = epoch + epochs;
    p.active_heads = active;
    p.backbone_trainable = everything;
    if (everything) {
      for (std::size_t h = 0; h < num_layers; ++h) p.trainable_heads.push_back(h);
    } else {
      p.trainable_heads = active;
    }
    phases.push_back(std::move(p));
    epoch += epochs;
  };
  push(cfg.M, false);
  for (std::size_t p = 1; p < num_layers; ++p) {
    active.insert(active.begin(), num_layers - 1 - p);
    push(cfg.N, false);
  }
  push(cfg.P, true);
  return phases;
}

std::size_t schedule_epochs(const std::vector<TrainPhase>& phases) {
  return phases.empty() ? 0 : phases.back().end_epoch;
}

}  // namespace sdvit
