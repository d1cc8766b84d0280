#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdvit/tensor.hpp"

namespace sdvit {

struct ViTConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 12;
  std::size_t num_heads = 4;
  std::size_t mlp_dim = 128;
  std::size_t num_classes = 8;
  float dropout_prob = 0.0f;
  bool per_layer_heads = false;
  std::uint64_t seed = 0;

  // Desk-scale geometry used by default everywhere.
  static ViTConfig mini();
  // ViT-B/16 at 224px with an 8-way head.
  static ViTConfig paper();

  void validate() const;  // throws InvalidArgument naming the violated constraint
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }

  std::string to_json() const;
  static ViTConfig from_json(const std::string& text);

  bool operator==(const ViTConfig&) const = default;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct TransformerBlock {
  LayerNormParams norm1;
  Linear query;
  Linear key;
  Linear value;
  Linear attn_out;
  LayerNormParams norm2;
  Linear fc1;
  Linear fc2;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Vision transformer with an optional classification head after every block.
///
/// With per_layer_heads, heads[i] reads block i and heads.back() doubles as
/// the final head; otherwise heads holds the single final head. Every head
/// reads the class token of final_norm(hidden_i).
///
/// Parameters are Tensor handles, so copying a ViTModel aliases its weights.
/// clone() gives an independent deep copy.
struct ViTModel {
  ViTConfig config;
  Linear patch_proj;
  Tensor class_token;  // [hidden]
  Tensor pos_embed;    // [tokens, hidden]
  std::vector<TransformerBlock> blocks;
  LayerNormParams final_norm;
  std::vector<Linear> heads;

  ViTModel clone() const;

  // Canonical order: embeddings, blocks in depth order, final norm, heads.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Slots of parameters() in the same order, for rebinding handles.
  std::vector<Tensor*> mutable_parameters();
  std::vector<Tensor> block_parameters(std::size_t block) const;
  std::vector<Tensor> head_parameters(std::size_t head) const;
  // Everything except the heads.
  std::vector<Tensor> backbone_parameters() const;
};

enum class Mode { train, eval };

struct ForwardOutput {
  std::vector<Tensor> per_layer_hidden;  // num_layers x [B, tokens, hidden]
  std::vector<Tensor> per_layer_logits;  // num_layers x [B, classes] or empty
  Tensor final_logits;                   // [B, classes]
  Tensor cls_embedding;                  // [B, hidden], final_norm of the last class token
  std::vector<Tensor> attentions;        // num_layers x [B, heads, tokens, tokens], detached
};

ViTModel build(const ViTConfig& config);

// [C, H, W] -> [num_patches, patch^2 * C]; patches in row-major grid order,
// each flattened channel-major then row-major within the patch.
std::vector<float> patchify(std::span<const float> image, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t patch_size);

// `images` is [B, C, H, W]. `dropout_rng` is required in train mode when
// dropout_prob > 0.
ForwardOutput forward(const ViTModel& model, const Tensor& images, Mode mode,
                      std::mt19937_64* dropout_rng = nullptr);

std::uint64_t param_count(const ViTModel& model);
std::uint64_t block_param_count(const ViTConfig& config);

// Class-token attention to each patch, averaged over heads, min-max
// normalized to [0, 1]; returned as a row-major grid x grid map.
std::vector<float> cls_attention_map(const ForwardOutput& out, std::size_t layer, std::size_t sample);
// Nearest-neighbor upsampling of a square map to `size` x `size`.
std::vector<float> upsample_nearest(std::span<const float> map, std::size_t grid, std::size_t size);

}  // namespace sdvit
