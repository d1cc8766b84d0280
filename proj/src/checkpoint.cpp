#include "sdvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "sdvit/errors.hpp"

namespace sdvit {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'V', 'T'};

class ByteWriter {
 public:
  template <typename T>
  void put_uint(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
  void put_bytes(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_f32(float v) { put_uint(std::bit_cast<std::uint32_t>(v)); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get_uint(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float get_f32(const char* what) { return std::bit_cast<float>(get_uint<std::uint32_t>(what)); }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ViTModel& model, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put_uint<std::uint32_t>(kCheckpointVersion);
  const std::string cfg = model.config.to_json();
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.put_bytes(cfg.data(), cfg.size());
  const auto named = model.named_parameters();
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.put_uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put_uint<std::uint8_t>(static_cast<std::uint8_t>(t.ndim()));
    for (std::size_t d : t.shape()) w.put_uint<std::uint64_t>(d);
    for (float v : t.data()) w.put_f32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot open checkpoint for writing: " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw InvalidArgument("failed writing checkpoint: " + path.string());
}

ViTModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint: " + path.string());
  ByteReader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (r.get_string(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.get_uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto cfg_len = r.get_uint<std::uint32_t>("config length");
  const std::size_t cfg_at = r.offset();
  ViTConfig config;
  try {
    config = ViTConfig::from_json(r.get_string(cfg_len, "config"));
    config.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid config block: ") + e.what(), cfg_at);
  }

  const auto count = r.get_uint<std::uint32_t>("tensor count");
  std::map<std::string, Tensor> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.offset();
    const auto name_len = r.get_uint<std::uint16_t>("tensor name length");
    std::string name = r.get_string(name_len, "tensor name");
    const auto ndim = r.get_uint<std::uint8_t>("tensor rank");
    if (ndim == 0) throw FormatError("tensor '" + name + "' has rank 0", entry_at);
    Shape shape(ndim);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get_uint<std::uint64_t>("tensor dims"));
      if (d == 0) throw FormatError("tensor '" + name + "' has a zero dim", entry_at);
    }
    std::vector<float> data(shape_numel(shape));
    for (float& v : data) v = r.get_f32("tensor payload");
    if (!loaded.emplace(name, Tensor(shape, std::move(data), true)).second) {
      throw FormatError("duplicate tensor '" + name + "'", entry_at);
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last tensor", r.offset());

  ViTModel model = build(config);
  const auto named = model.named_parameters();
  if (named.size() != loaded.size()) {
    throw FormatError("checkpoint holds " + std::to_string(loaded.size()) + " tensors, config expects " +
                      std::to_string(named.size()),
                      r.offset());
  }
  for (auto [name, param] : named) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw FormatError("missing tensor '" + name + "'", r.offset());
    if (it->second.shape() != param.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                        shape_str(param.shape()),
                        r.offset());
    }
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), param.data().begin());
  }
  return model;
}

}  // namespace sdvit
