#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdvit/tensor.hpp"

namespace sdvit {

// Planar RGB image, values in [0, 1], laid out [3, size, size].
struct Image {
  std::size_t size = 0;
  std::vector<float> pixels;

  static constexpr std::size_t channels = 3;
  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * size + y) * size + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * size + y) * size + x]; }
};

struct Sample {
  Image image;
  int label = 0;
  std::string source;
};

using Dataset = std::vector<Sample>;

struct ClassTaxonomy {
  static constexpr std::size_t num_classes = 8;
  static const std::array<std::string, num_classes>& names();
  static const std::array<std::string, num_classes>& short_names();  // MEL, NV, ...
  static bool malignant(int label);  // Melanoma, Basal cell carcinoma, Squamous cell carcinoma
  // Throws DataError for an unknown name.
  static int label_of(const std::string& name);
};

// Reads `labels_csv` (header filename,label_name) and decodes each image from
// `image_dir`, resized bilinearly to `image_size`. Samples come back sorted by
// filename.
Dataset load_image_dataset(const std::filesystem::path& image_dir, const std::filesystem::path& labels_csv,
                           std::size_t image_size);

// Writes 8-bit RGB PNGs plus labels.csv so load_image_dataset can read them back.
void write_image_dataset(const Dataset& samples, const std::filesystem::path& dir);

void write_png_rgb(const Image& image, const std::filesystem::path& path);
void write_png_gray(std::span<const float> values, std::size_t size, const std::filesystem::path& path);

// Per class, shuffles and puts floor(train_fraction * n_c) samples (at least 1)
// into train. Throws DataError if a present class has fewer than 2 samples.
std::pair<Dataset, Dataset> stratified_split(const Dataset& samples, double train_fraction, std::uint64_t seed);

struct AugConfig {
  float crop_fraction = 0.875f;  // smallest retained side fraction, >= 0.75
  float max_shift = 0.10f;       // fraction of the side
  float max_scale_delta = 0.10f;
  float max_rotate = 30.0f;  // degrees
  float rgb_shift_max = 0.08f;
  float brightness_delta = 0.2f;
  float contrast_delta = 0.2f;

  float p_crop = 0.5f;
  float p_shift_scale_rotate = 0.5f;
  float p_rgb_shift = 0.5f;
  float p_brightness = 0.5f;
  float p_contrast = 0.5f;

  void validate() const;
  static AugConfig none();
};

// Independent stream per (seed, epoch, sample); results do not depend on
// which worker handles the sample or in what order.
std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

Image augment(const Image& image, const AugConfig& cfg, std::mt19937_64& rng);

// Building blocks of augment, exposed for direct testing.
Image resize_bilinear(const Image& image, std::size_t size);
Image crop_resize(const Image& image, std::size_t x0, std::size_t y0, std::size_t side);
Image shift_scale_rotate(const Image& image, float dx, float dy, float scale, float degrees);
void adjust_brightness(Image& image, float delta);
void adjust_contrast(Image& image, float factor);
void shift_rgb(Image& image, const std::array<float, 3>& delta);

// Synthetic lesion-like images, one blob per image on a skin-toned background.
//
// Each class is a pair (colour family, radial layout):
//   0 Melanoma                brown,     dark core / light rim, ragged border
//   1 Melanocytic nevus       brown,     light core / dark rim, round
//   2 Basal cell carcinoma    blue-grey, dark core / light rim, pearly dots
//   3 Actinic keratosis       red,       light core / dark rim, scaly speckle
//   4 Benign keratosis        tan,       dark core / light rim, scaly speckle
//   5 Dermatofibroma          tan,       light core / dark rim, round
//   6 Vascular lesion         red,       dark core / light rim, streaks
//   7 Squamous cell carcinoma blue-grey, light core / dark rim, ragged border
// Core and rim have equal area, so two classes of one colour family have
// nearly the same colour histogram and only the layout tells them apart.
// `imbalance`, when given, scales the per-class count (rounded, at least 1).
Dataset synth_lesions(std::size_t n_per_class, std::size_t image_size, std::uint64_t seed,
                      std::span<const double> imbalance = {});

// Stacks images into [B, 3, size, size].
Tensor batch_images(const Dataset& samples, std::span<const std::size_t> indices);
Tensor batch_images(std::span<const Image> images);

}  // namespace sdvit
