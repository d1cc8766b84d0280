#include "sdvit/vit.hpp"

#include <algorithm>
#include <boost/random/taus88.hpp>
#include <boost/random/normal_distribution.hpp>
#include <nlohmann/json.hpp>

#include "sdvit/errors.hpp"
#include "sdvit/ops.hpp"

namespace sdvit {

ViTConfig ViTConfig::mini() { return ViTConfig{}; }

ViTConfig ViTConfig::paper() {
  ViTConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.hidden_dim = 768;
  c.num_layers = 12;
  c.num_heads = 12;
  c.mlp_dim = 3072;
  c.num_classes = 8;
  return c;
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw InvalidArgument("invalid ViTConfig: image_size % patch_size must be 0");
  }
  if (num_heads == 0 || hidden_dim == 0 || hidden_dim % num_heads != 0) {
    throw InvalidArgument("invalid ViTConfig: hidden_dim % num_heads must be 0");
  }
  if (num_layers < 1) throw InvalidArgument("invalid ViTConfig: num_layers must be >= 1");
  if (num_classes < 2) throw InvalidArgument("invalid ViTConfig: num_classes must be >= 2");
  if (channels == 0 || mlp_dim == 0) throw InvalidArgument("invalid ViTConfig: channels and mlp_dim must be >= 1");
  if (!(dropout_prob >= 0.0f && dropout_prob < 1.0f)) {
    throw InvalidArgument("invalid ViTConfig: dropout_prob must be in [0, 1)");
  }
}

std::string ViTConfig::to_json() const {
  nlohmann::json j = {{"image_size", image_size}, {"patch_size", patch_size},   {"channels", channels},
                      {"hidden_dim", hidden_dim}, {"num_layers", num_layers},   {"num_heads", num_heads},
                      {"mlp_dim", mlp_dim},       {"num_classes", num_classes}, {"dropout_prob", dropout_prob},
                      {"per_layer_heads", per_layer_heads}, {"seed", seed}};
  return j.dump();
}

ViTConfig ViTConfig::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ViTConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.dropout_prob = j.at("dropout_prob").get<float>();
  c.per_layer_heads = j.at("per_layer_heads").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

class Initializer {
 public:
  // taus88 needs a nonzero 32-bit seed; fold the 64-bit one.
  explicit Initializer(std::uint64_t seed) : rng_(static_cast<std::uint32_t>(seed ^ (seed >> 32)) + 0x9e3779b9u) {}

  // Normal(0, 0.02) truncated at two standard deviations.
  Tensor trunc_normal(Shape shape) {
    Tensor t(std::move(shape), 0.0f, true);
    for (float& v : t.data()) {
      float x;
      do {
        x = normal_(rng_);
      } while (std::abs(x) > 2.0f);
      v = 0.02f * x;
    }
    return t;
  }

  static Tensor constant(Shape shape, float value) { return Tensor(std::move(shape), value, true); }

  Linear linear(std::size_t in, std::size_t out) { return {trunc_normal({in, out}), constant({out}, 0.0f)}; }

  static LayerNormParams norm(std::size_t dim) { return {constant({dim}, 1.0f), constant({dim}, 0.0f)}; }

 private:
  // Ziggurat sampler; the ViT-B/16 geometry has 86M weights to draw.
  boost::random::taus88 rng_;
  boost::random::normal_distribution<float> normal_{0.0f, 1.0f};
};

Linear clone_linear(const Linear& l) { return {l.weight.clone(), l.bias.clone()}; }
LayerNormParams clone_norm(const LayerNormParams& n) { return {n.gamma.clone(), n.beta.clone()}; }

void append_block(std::vector<NamedTensor>& out, const std::string& prefix, const TransformerBlock& b) {
  out.emplace_back(prefix + "norm1.gamma", b.norm1.gamma);
  out.emplace_back(prefix + "norm1.beta", b.norm1.beta);
  out.emplace_back(prefix + "attn.query.weight", b.query.weight);
  out.emplace_back(prefix + "attn.query.bias", b.query.bias);
  out.emplace_back(prefix + "attn.key.weight", b.key.weight);
  out.emplace_back(prefix + "attn.key.bias", b.key.bias);
  out.emplace_back(prefix + "attn.value.weight", b.value.weight);
  out.emplace_back(prefix + "attn.value.bias", b.value.bias);
  out.emplace_back(prefix + "attn.out.weight", b.attn_out.weight);
  out.emplace_back(prefix + "attn.out.bias", b.attn_out.bias);
  out.emplace_back(prefix + "norm2.gamma", b.norm2.gamma);
  out.emplace_back(prefix + "norm2.beta", b.norm2.beta);
  out.emplace_back(prefix + "mlp.fc1.weight", b.fc1.weight);
  out.emplace_back(prefix + "mlp.fc1.bias", b.fc1.bias);
  out.emplace_back(prefix + "mlp.fc2.weight", b.fc2.weight);
  out.emplace_back(prefix + "mlp.fc2.bias", b.fc2.bias);
}

std::vector<Tensor> values_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

}  // namespace

ViTModel ViTModel::clone() const {
  ViTModel m;
  m.config = config;
  m.patch_proj = clone_linear(patch_proj);
  m.class_token = class_token.clone();
  m.pos_embed = pos_embed.clone();
  m.blocks.reserve(blocks.size());
  for (const TransformerBlock& b : blocks) {
    m.blocks.push_back({clone_norm(b.norm1), clone_linear(b.query), clone_linear(b.key), clone_linear(b.value),
                        clone_linear(b.attn_out), clone_norm(b.norm2), clone_linear(b.fc1), clone_linear(b.fc2)});
  }
  m.final_norm = clone_norm(final_norm);
  for (const Linear& h : heads) m.heads.push_back(clone_linear(h));
  return m;
}

std::vector<NamedTensor> ViTModel::named_parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("patch_proj.weight", patch_proj.weight);
  out.emplace_back("patch_proj.bias", patch_proj.bias);
  out.emplace_back("class_token", class_token);
  out.emplace_back("pos_embed", pos_embed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    append_block(out, "blocks." + std::to_string(i) + ".", blocks[i]);
  }
  out.emplace_back("final_norm.gamma", final_norm.gamma);
  out.emplace_back("final_norm.beta", final_norm.beta);
  for (std::size_t i = 0; i < heads.size(); ++i) {
    out.emplace_back("heads." + std::to_string(i) + ".weight", heads[i].weight);
    out.emplace_back("heads." + std::to_string(i) + ".bias", heads[i].bias);
  }
  return out;
}

std::vector<Tensor> ViTModel::parameters() const { return values_of(named_parameters()); }

std::vector<Tensor*> ViTModel::mutable_parameters() {
  std::vector<Tensor*> out{&patch_proj.weight, &patch_proj.bias, &class_token, &pos_embed};
  for (TransformerBlock& b : blocks) {
    for (Tensor* t : {&b.norm1.gamma, &b.norm1.beta, &b.query.weight, &b.query.bias, &b.key.weight, &b.key.bias,
                      &b.value.weight, &b.value.bias, &b.attn_out.weight, &b.attn_out.bias, &b.norm2.gamma,
                      &b.norm2.beta, &b.fc1.weight, &b.fc1.bias, &b.fc2.weight, &b.fc2.bias}) {
      out.push_back(t);
    }
  }
  out.push_back(&final_norm.gamma);
  out.push_back(&final_norm.beta);
  for (Linear& h : heads) {
    out.push_back(&h.weight);
    out.push_back(&h.bias);
  }
  return out;
}

std::vector<Tensor> ViTModel::block_parameters(std::size_t block) const {
  std::vector<NamedTensor> named;
  append_block(named, "", blocks.at(block));
  return values_of(named);
}

std::vector<Tensor> ViTModel::head_parameters(std::size_t head) const {
  return {heads.at(head).weight, heads.at(head).bias};
}

std::vector<Tensor> ViTModel::backbone_parameters() const {
  std::vector<Tensor> out{patch_proj.weight, patch_proj.bias, class_token, pos_embed};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto bp = block_parameters(i);
    out.insert(out.end(), bp.begin(), bp.end());
  }
  out.push_back(final_norm.gamma);
  out.push_back(final_norm.beta);
  return out;
}

ViTModel build(const ViTConfig& config) {
  config.validate();
  Initializer init(config.seed);
  const std::size_t d = config.hidden_dim;
  ViTModel m;
  m.config = config;
  m.patch_proj = init.linear(config.patch_dim(), d);
  m.class_token = init.trunc_normal({d});
  m.pos_embed = init.trunc_normal({config.num_tokens(), d});
  m.blocks.reserve(config.num_layers);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    TransformerBlock b;
    b.norm1 = Initializer::norm(d);
    b.query = init.linear(d, d);
    b.key = init.linear(d, d);
    b.value = init.linear(d, d);
    b.attn_out = init.linear(d, d);
    b.norm2 = Initializer::norm(d);
    b.fc1 = init.linear(d, config.mlp_dim);
    b.fc2 = init.linear(config.mlp_dim, d);
    m.blocks.push_back(std::move(b));
  }
  m.final_norm = Initializer::norm(d);
  const std::size_t num_heads = config.per_layer_heads ? config.num_layers : 1;
  for (std::size_t i = 0; i < num_heads; ++i) m.heads.push_back(init.linear(d, config.num_classes));
  return m;
}

std::vector<float> patchify(std::span<const float> image, std::size_t channels, std::size_t height,
                            std::size_t width, std::size_t patch_size) {
  if (image.size() != channels * height * width) throw InvalidArgument("patchify: image buffer size mismatch");
  if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw InvalidArgument("patchify: image dims must be multiples of the patch size");
  }
  const std::size_t gh = height / patch_size, gw = width / patch_size;
  const std::size_t pd = patch_size * patch_size * channels;
  std::vector<float> out(gh * gw * pd);
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      float* dst = out.data() + (py * gw + px) * pd;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t dy = 0; dy < patch_size; ++dy)
          for (std::size_t dx = 0; dx < patch_size; ++dx) {
            const std::size_t y = py * patch_size + dy, x = px * patch_size + dx;
            *dst++ = image[(c * height + y) * width + x];
          }
    }
  }
  return out;
}

namespace {

Tensor maybe_dropout(const Tensor& x, const ViTConfig& cfg, Mode mode, std::mt19937_64* rng) {
  if (mode != Mode::train || cfg.dropout_prob == 0.0f) return x;
  if (!rng) throw InvalidArgument("forward: train-mode dropout needs an rng");
  return dropout(x, cfg.dropout_prob, *rng);
}

Tensor head_logits(const ViTModel& m, const Tensor& hidden, const Linear& head) {
  Tensor cls = select_token(hidden, 0);
  return linear(layer_norm(cls, m.final_norm.gamma, m.final_norm.beta), head.weight, head.bias);
}

}  // namespace

ForwardOutput forward(const ViTModel& model, const Tensor& images, Mode mode, std::mt19937_64* dropout_rng) {
  const ViTConfig& cfg = model.config;
  if (images.ndim() != 4 || images.dim(1) != cfg.channels || images.dim(2) != cfg.image_size ||
      images.dim(3) != cfg.image_size) {
    throw InvalidArgument("forward: expected images [B, " + std::to_string(cfg.channels) + ", " +
                          std::to_string(cfg.image_size) + ", " + std::to_string(cfg.image_size) + "], got " +
                          shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t per_image = cfg.channels * cfg.image_size * cfg.image_size;
  const std::size_t pd = cfg.patch_dim(), np = cfg.num_patches();
  std::vector<float> patch_data(batch * np * pd);
  for (std::size_t s = 0; s < batch; ++s) {
    auto p = patchify(images.data().subspan(s * per_image, per_image), cfg.channels, cfg.image_size,
                      cfg.image_size, cfg.patch_size);
    // Pixels in [0, 1] enter the projection as [-1, 1] (mean 0.5, std 0.5).
    for (float& v : p) v = (v - 0.5f) / 0.5f;
    std::copy(p.begin(), p.end(), patch_data.begin() + s * np * pd);
  }
  Tensor patches({batch, np, pd}, std::move(patch_data));

  Tensor x = linear(patches, model.patch_proj.weight, model.patch_proj.bias);
  x = prepend_token(model.class_token, x);
  x = add_broadcast(x, model.pos_embed);
  x = maybe_dropout(x, cfg, mode, dropout_rng);

  ForwardOutput out;
  out.per_layer_hidden.reserve(model.blocks.size());
  out.attentions.reserve(model.blocks.size());
  for (const TransformerBlock& b : model.blocks) {
    Tensor h = layer_norm(x, b.norm1.gamma, b.norm1.beta);
    Tensor q = linear(h, b.query.weight, b.query.bias);
    Tensor k = linear(h, b.key.weight, b.key.bias);
    Tensor v = linear(h, b.value.weight, b.value.bias);
    AttentionResult attn = multi_head_attention(q, k, v, cfg.num_heads);
    Tensor a = linear(attn.output, b.attn_out.weight, b.attn_out.bias);
    x = add(x, maybe_dropout(a, cfg, mode, dropout_rng));

    h = layer_norm(x, b.norm2.gamma, b.norm2.beta);
    h = gelu(linear(h, b.fc1.weight, b.fc1.bias));
    h = linear(h, b.fc2.weight, b.fc2.bias);
    x = add(x, maybe_dropout(h, cfg, mode, dropout_rng));

    out.per_layer_hidden.push_back(x);
    out.attentions.push_back(std::move(attn.weights));
  }

  if (cfg.per_layer_heads) {
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
      out.per_layer_logits.push_back(head_logits(model, out.per_layer_hidden[i], model.heads[i]));
    }
    out.final_logits = out.per_layer_logits.back();
  } else {
    out.final_logits = head_logits(model, x, model.heads.front());
  }
  out.cls_embedding = layer_norm(select_token(x, 0), model.final_norm.gamma, model.final_norm.beta);
  return out;
}

std::uint64_t param_count(const ViTModel& model) {
  std::uint64_t total = 0;
  for (const auto& [name, t] : model.named_parameters()) total += t.numel();
  return total;
}

std::uint64_t block_param_count(const ViTConfig& c) {
  const std::uint64_t d = c.hidden_dim, m = c.mlp_dim;
  return 4 * (d * d + d) + 4 * d + (d * m + m) + (m * d + d);
}

std::vector<float> cls_attention_map(const ForwardOutput& out, std::size_t layer, std::size_t sample) {
  if (layer >= out.attentions.size()) {
    throw InvalidArgument("cls_attention_map: layer " + std::to_string(layer) + " out of range");
  }
  const Tensor& att = out.attentions[layer];
  const std::size_t b = att.dim(0), h = att.dim(1), t = att.dim(2);
  if (sample >= b) throw InvalidArgument("cls_attention_map: sample " + std::to_string(sample) + " out of range");
  const std::size_t patches = t - 1;
  std::vector<float> map(patches, 0.0f);
  auto data = att.data();
  for (std::size_t hh = 0; hh < h; ++hh) {
    const float* row = data.data() + ((sample * h + hh) * t) * t;  // query = class token
    for (std::size_t p = 0; p < patches; ++p) map[p] += row[p + 1];
  }
  for (float& v : map) v /= static_cast<float>(h);
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  const float min_v = *lo, range = *hi - *lo;
  for (float& v : map) v = range > 0.0f ? (v - min_v) / range : 0.0f;
  return map;
}

std::vector<float> upsample_nearest(std::span<const float> map, std::size_t grid, std::size_t size) {
  if (map.size() != grid * grid || grid == 0) throw InvalidArgument("upsample_nearest: map is not grid x grid");
  std::vector<float> out(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) out[y * size + x] = map[(y * grid / size) * grid + x * grid / size];
  return out;
}

}  // namespace sdvit
