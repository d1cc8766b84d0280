#include "sdvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sdvit/errors.hpp"

namespace sdvit {

const std::array<std::string, ClassTaxonomy::num_classes>& ClassTaxonomy::names() {
  static const std::array<std::string, num_classes> n{"Melanoma",          "Melanocytic nevus",
                                                      "Basal cell carcinoma", "Actinic keratosis",
                                                      "Benign keratosis",  "Dermatofibroma",
                                                      "Vascular lesion",   "Squamous cell carcinoma"};
  return n;
}

const std::array<std::string, ClassTaxonomy::num_classes>& ClassTaxonomy::short_names() {
  static const std::array<std::string, num_classes> n{"MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC"};
  return n;
}

bool ClassTaxonomy::malignant(int label) { return label == 0 || label == 2 || label == 7; }

int ClassTaxonomy::label_of(const std::string& name) {
  const auto& n = names();
  for (std::size_t i = 0; i < n.size(); ++i)
    if (n[i] == name) return static_cast<int>(i);
  throw DataError("unknown label name '" + name + "'");
}

namespace {

// Planar RGB <-> interleaved CV_32FC3 (RGB channel order).
cv::Mat to_mat(const Image& image) {
  const int s = static_cast<int>(image.size);
  cv::Mat m(s, s, CV_32FC3);
  for (int y = 0; y < s; ++y) {
    auto* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < s; ++x)
      for (int c = 0; c < 3; ++c) row[x][c] = image.at(c, y, x);
  }
  return m;
}

Image from_mat(const cv::Mat& m) {
  Image image;
  image.size = static_cast<std::size_t>(m.rows);
  image.pixels.resize(3 * image.size * image.size);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x][c];
  }
  return image;
}

void clamp01(Image& image) {
  for (float& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

}  // namespace

Dataset load_image_dataset(const std::filesystem::path& image_dir, const std::filesystem::path& labels_csv,
                           std::size_t image_size) {
  std::ifstream in(labels_csv);
  if (!in) throw DataError("cannot open " + labels_csv.string());
  std::string line;
  std::size_t row = 0;
  std::vector<std::pair<std::string, int>> entries;
  while (std::getline(in, line)) {
    ++row;
    line = trim_cr(line);
    if (row == 1) {
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (line != "filename,label_name") {
        throw DataError(labels_csv.string() + ": expected header 'filename,label_name', got '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(labels_csv.string() + " row " + std::to_string(row) + ": missing comma");
    const std::string name = line.substr(0, comma), label = line.substr(comma + 1);
    try {
      entries.emplace_back(name, ClassTaxonomy::label_of(label));
    } catch (const DataError&) {
      throw DataError(labels_csv.string() + " row " + std::to_string(row) + ": unknown label '" + label + "'");
    }
  }
  std::sort(entries.begin(), entries.end());

  Dataset out;
  out.reserve(entries.size());
  for (const auto& [name, label] : entries) {
    const auto path = image_dir / name;
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot decode image " + path.string());
    cv::Mat rgb, f;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    const int s = static_cast<int>(image_size);
    if (f.rows != s || f.cols != s) {
      cv::Mat r;
      cv::resize(f, r, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
      f = r;
    }
    Sample sample{from_mat(f), label, name};
    clamp01(sample.image);
    out.push_back(std::move(sample));
  }
  return out;
}

void write_png_rgb(const Image& image, const std::filesystem::path& path) {
  cv::Mat f = to_mat(image), rgb8, bgr8;
  f.convertTo(rgb8, CV_8UC3, 255.0);
  cv::cvtColor(rgb8, bgr8, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr8)) throw DataError("cannot write " + path.string());
}

void write_png_gray(std::span<const float> values, std::size_t size, const std::filesystem::path& path) {
  if (values.size() != size * size) throw InvalidArgument("write_png_gray: buffer is not size x size");
  cv::Mat g(static_cast<int>(size), static_cast<int>(size), CV_8UC1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    g.data[i] = static_cast<unsigned char>(std::lround(std::clamp(values[i], 0.0f, 1.0f) * 255.0f));
  }
  if (!cv::imwrite(path.string(), g)) throw DataError("cannot write " + path.string());
}

void write_image_dataset(const Dataset& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "labels.csv");
  if (!csv) throw DataError("cannot write " + (dir / "labels.csv").string());
  csv << "filename,label_name\n";
  for (const Sample& s : samples) {
    write_png_rgb(s.image, dir / s.source);
    csv << s.source << ',' << ClassTaxonomy::names().at(static_cast<std::size_t>(s.label)) << '\n';
  }
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& samples, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("stratified_split: train_fraction must be in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
  Dataset train, test;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                      " sample(s); stratified split needs at least 2");
    }
    std::mt19937_64 rng = sample_stream(seed, 0x5b117, static_cast<std::uint64_t>(label));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size()))));
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_train ? train : test).push_back(samples[idx[k]]);
  }
  return {std::move(train), std::move(test)};
}

void AugConfig::validate() const {
  if (!(crop_fraction >= 0.75f && crop_fraction <= 1.0f)) {
    throw InvalidArgument("AugConfig: crop_fraction must be in [0.75, 1] so the lesion stays in frame");
  }
  for (float p : {p_crop, p_shift_scale_rotate, p_rgb_shift, p_brightness, p_contrast}) {
    if (!(p >= 0.0f && p <= 1.0f)) throw InvalidArgument("AugConfig: probabilities must be in [0, 1]");
  }
  for (float d : {max_shift, max_scale_delta, max_rotate, rgb_shift_max, brightness_delta, contrast_delta}) {
    if (!(d >= 0.0f) || !std::isfinite(d)) throw InvalidArgument("AugConfig: magnitudes must be finite and >= 0");
  }
  if (max_scale_delta >= 1.0f) throw InvalidArgument("AugConfig: max_scale_delta must be < 1");
}

AugConfig AugConfig::none() {
  AugConfig c;
  c.p_crop = c.p_shift_scale_rotate = c.p_rgb_shift = c.p_brightness = c.p_contrast = 0.0f;
  return c;
}

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(epoch), hi(epoch), lo(index), hi(index)};
  return std::mt19937_64(seq);
}

Image resize_bilinear(const Image& image, std::size_t size) {
  if (image.size == size) return image;
  cv::Mat r;
  const int s = static_cast<int>(size);
  cv::resize(to_mat(image), r, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
  return from_mat(r);
}

Image crop_resize(const Image& image, std::size_t x0, std::size_t y0, std::size_t side) {
  if (side == 0 || x0 + side > image.size || y0 + side > image.size) {
    throw InvalidArgument("crop_resize: window outside the image");
  }
  if (side == image.size) return image;
  cv::Mat full = to_mat(image);
  cv::Mat roi = full(cv::Rect(static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(side), static_cast<int>(side)));
  cv::Mat r;
  const int s = static_cast<int>(image.size);
  cv::resize(roi, r, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
  return from_mat(r);
}

Image shift_scale_rotate(const Image& image, float dx, float dy, float scale, float degrees) {
  if (dx == 0.0f && dy == 0.0f && scale == 1.0f && degrees == 0.0f) return image;
  const float s = static_cast<float>(image.size);
  const cv::Point2f center(0.5f * (s - 1.0f), 0.5f * (s - 1.0f));
  cv::Mat m = cv::getRotationMatrix2D(center, degrees, scale);
  m.at<double>(0, 2) += dx * s;
  m.at<double>(1, 2) += dy * s;
  cv::Mat out;
  cv::warpAffine(to_mat(image), out, m, cv::Size(static_cast<int>(image.size), static_cast<int>(image.size)),
                 cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return from_mat(out);
}

void adjust_brightness(Image& image, float delta) {
  for (float& v : image.pixels) v += delta;
  clamp01(image);
}

void adjust_contrast(Image& image, float factor) {
  double total = 0.0;
  for (float v : image.pixels) total += v;
  const float mean = static_cast<float>(total / static_cast<double>(image.pixels.size()));
  for (float& v : image.pixels) v = (v - mean) * factor + mean;
  clamp01(image);
}

void shift_rgb(Image& image, const std::array<float, 3>& delta) {
  const std::size_t plane = image.size * image.size;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) image.pixels[c * plane + i] += delta[c];
  clamp01(image);
}

Image augment(const Image& image, const AugConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  auto coin = [&](float p) { return unit(rng) < p; };
  auto symmetric = [&](float m) { return (2.0f * unit(rng) - 1.0f) * m; };

  Image out = image;
  if (coin(cfg.p_crop)) {
    const float frac = cfg.crop_fraction + (1.0f - cfg.crop_fraction) * unit(rng);
    const auto side = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(frac * static_cast<float>(out.size))),
                                              1, out.size);
    const std::size_t slack = out.size - side;
    const auto x0 = static_cast<std::size_t>(std::lround(unit(rng) * static_cast<float>(slack)));
    const auto y0 = static_cast<std::size_t>(std::lround(unit(rng) * static_cast<float>(slack)));
    out = crop_resize(out, x0, y0, side);
  }
  if (coin(cfg.p_shift_scale_rotate)) {
    const float dx = symmetric(cfg.max_shift), dy = symmetric(cfg.max_shift);
    const float sc = 1.0f + symmetric(cfg.max_scale_delta);
    const float deg = symmetric(cfg.max_rotate);
    out = shift_scale_rotate(out, dx, dy, sc, deg);
  }
  if (coin(cfg.p_rgb_shift)) {
    const std::array<float, 3> d{symmetric(cfg.rgb_shift_max), symmetric(cfg.rgb_shift_max),
                                 symmetric(cfg.rgb_shift_max)};
    shift_rgb(out, d);
  }
  if (coin(cfg.p_brightness)) adjust_brightness(out, symmetric(cfg.brightness_delta));
  if (coin(cfg.p_contrast)) adjust_contrast(out, 1.0f + symmetric(cfg.contrast_delta));
  clamp01(out);
  return out;
}

namespace {

using Rgb = std::array<float, 3>;

struct Family {
  Rgb dark;
  Rgb light;
};

// brown, blue-grey, red, tan
constexpr Family kFamilies[4] = {
    {{0.30f, 0.17f, 0.10f}, {0.58f, 0.40f, 0.27f}},
    {{0.22f, 0.26f, 0.40f}, {0.50f, 0.56f, 0.68f}},
    {{0.58f, 0.08f, 0.14f}, {0.88f, 0.38f, 0.42f}},
    {{0.52f, 0.42f, 0.12f}, {0.80f, 0.72f, 0.40f}},
};

enum class Extra { none, ragged, dots, speckle, streaks };

struct Recipe {
  int family;
  bool dark_core;
  Extra extra;
};

constexpr Recipe kRecipes[8] = {
    {0, true, Extra::ragged},    // MEL
    {0, false, Extra::none},     // NV
    {1, true, Extra::dots},      // BCC
    {2, false, Extra::speckle},  // AK
    {3, true, Extra::speckle},   // BKL
    {3, false, Extra::none},     // DF
    {2, true, Extra::streaks},   // VASC
    {1, false, Extra::ragged},   // SCC
};

float smoothstep(float e0, float e1, float x) {
  const float t = std::clamp((x - e0) / (e1 - e0), 0.0f, 1.0f);
  return t * t * (3.0f - 2.0f * t);
}

Image draw_lesion(const Recipe& r, std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  auto range = [&](float lo, float hi) { return lo + (hi - lo) * unit(rng); };
  const float s = static_cast<float>(size);

  const Rgb skin{range(0.80f, 0.92f), range(0.60f, 0.72f), range(0.50f, 0.62f)};
  const float shade_x = range(-0.06f, 0.06f), shade_y = range(-0.06f, 0.06f);
  Rgb dark = kFamilies[r.family].dark, light = kFamilies[r.family].light;
  for (int c = 0; c < 3; ++c) {
    const float j = range(-0.04f, 0.04f);
    dark[c] = std::clamp(dark[c] + j, 0.0f, 1.0f);
    light[c] = std::clamp(light[c] + j, 0.0f, 1.0f);
  }
  const Rgb core = r.dark_core ? dark : light;
  const Rgb rim = r.dark_core ? light : dark;

  const float cx = 0.5f * s + range(-0.08f, 0.08f) * s;
  const float cy = 0.5f * s + range(-0.08f, 0.08f) * s;
  const float radius = range(0.28f, 0.36f) * s;
  const float aspect = range(0.8f, 1.0f);
  const float tilt = range(0.0f, std::numbers::pi_v<float>);
  const float lobes = r.extra == Extra::ragged ? range(5.0f, 8.0f) : 0.0f;
  const float lobe_phase = range(0.0f, 2.0f * std::numbers::pi_v<float>);
  const float edge = r.extra == Extra::ragged ? 2.0f : 1.0f;
  const float core_ratio = 1.0f / std::numbers::sqrt2_v<float>;  // equal core and rim areas

  struct Spot {
    float x, y, rad;
  };
  std::vector<Spot> dots;
  if (r.extra == Extra::dots) {
    const int n = 3 + static_cast<int>(unit(rng) * 3.0f);
    for (int i = 0; i < n; ++i) {
      const float a = range(0.0f, 2.0f * std::numbers::pi_v<float>), d = range(0.0f, 0.8f) * radius;
      dots.push_back({cx + d * std::cos(a), cy + d * std::sin(a), range(0.03f, 0.05f) * s});
    }
  }
  std::vector<std::pair<float, float>> streaks;  // (angle, offset)
  if (r.extra == Extra::streaks) {
    for (int i = 0; i < 2; ++i) streaks.emplace_back(range(0.0f, std::numbers::pi_v<float>), range(-0.4f, 0.4f) * radius);
  }

  Image img;
  img.size = size;
  img.pixels.resize(3 * size * size);
  const float ct = std::cos(tilt), st = std::sin(tilt);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const float px = static_cast<float>(x) + 0.5f, py = static_cast<float>(y) + 0.5f;
      const float u = (px - cx) * ct + (py - cy) * st;
      const float v = (-(px - cx) * st + (py - cy) * ct) / aspect;
      const float dist = std::sqrt(u * u + v * v);
      float bound = radius;
      if (lobes > 0.0f) bound *= 1.0f + 0.14f * std::sin(lobes * std::atan2(v, u) + lobe_phase);
      const float inside = 1.0f - smoothstep(bound - edge, bound + edge, dist);
      const float core_w = 1.0f - smoothstep(core_ratio * bound - 1.0f, core_ratio * bound + 1.0f, dist);

      const float shading = 1.0f + shade_x * (px / s - 0.5f) + shade_y * (py / s - 0.5f);
      float tex = 1.0f + 0.04f * noise(rng);
      if (r.extra == Extra::speckle && unit(rng) < 0.12f) tex += 0.18f;
      float mark = 0.0f;
      for (const Spot& d : dots) {
        const float dd = std::hypot(px - d.x, py - d.y);
        mark = std::max(mark, 1.0f - smoothstep(d.rad * 0.5f, d.rad, dd));
      }
      for (const auto& [ang, off] : streaks) {
        const float along = (px - cx) * std::cos(ang) + (py - cy) * std::sin(ang);
        const float across = -(px - cx) * std::sin(ang) + (py - cy) * std::cos(ang) - off;
        if (std::abs(along) < radius) mark = std::max(mark, 1.0f - smoothstep(0.4f, 1.0f, std::abs(across)));
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const float lesion = core_w * core[c] + (1.0f - core_w) * rim[c];
        float val = inside * lesion * tex + (1.0f - inside) * skin[c] * shading;
        if (r.extra == Extra::dots) val = val * (1.0f - 0.6f * mark) + 0.6f * mark * 0.92f;
        if (r.extra == Extra::streaks) val = val * (1.0f - 0.7f * mark) + 0.7f * mark * (c == 0 ? 0.45f : 0.05f);
        val += 0.015f * noise(rng);
        img.at(c, y, x) = std::clamp(val, 0.0f, 1.0f);
      }
    }
  }
  return img;
}

}  // namespace

Dataset synth_lesions(std::size_t n_per_class, std::size_t image_size, std::uint64_t seed,
                      std::span<const double> imbalance) {
  if (n_per_class < 1) throw InvalidArgument("synth_lesions: n_per_class must be >= 1");
  if (image_size < 8) throw InvalidArgument("synth_lesions: image_size must be >= 8");
  if (!imbalance.empty() && imbalance.size() != ClassTaxonomy::num_classes) {
    throw InvalidArgument("synth_lesions: imbalance needs one multiplier per class");
  }
  Dataset out;
  for (std::size_t label = 0; label < ClassTaxonomy::num_classes; ++label) {
    std::size_t count = n_per_class;
    if (!imbalance.empty()) {
      if (!(imbalance[label] > 0.0)) throw InvalidArgument("synth_lesions: imbalance multipliers must be > 0");
      count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(imbalance[label] * n_per_class)));
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::mt19937_64 rng = sample_stream(seed, label, i);
      Sample s;
      s.image = draw_lesion(kRecipes[label], image_size, rng);
      s.label = static_cast<int>(label);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%05zu.png", ClassTaxonomy::short_names()[label].c_str(), i);
      s.source = name;
      out.push_back(std::move(s));
    }
  }
  return out;
}

Tensor batch_images(std::span<const Image> images) {
  if (images.empty()) throw InvalidArgument("batch_images: empty batch");
  const std::size_t size = images.front().size, per = 3 * size * size;
  std::vector<float> data(images.size() * per);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size != size) throw InvalidArgument("batch_images: mixed image sizes");
    std::copy(images[i].pixels.begin(), images[i].pixels.end(), data.begin() + i * per);
  }
  return Tensor({images.size(), 3, size, size}, std::move(data));
}

Tensor batch_images(const Dataset& samples, std::span<const std::size_t> indices) {
  std::vector<Image> images;
  images.reserve(indices.size());
  for (std::size_t i : indices) images.push_back(samples.at(i).image);
  return batch_images(images);
}

}  // namespace sdvit
