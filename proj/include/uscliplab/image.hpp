#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace usclip {

// Grayscale raster, row-major, nominal range [0,1]. Preprocessed images may
// hold values outside [0,1] after normalization; the container does not care.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  double& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }
};

// Decodes a PNG file. Multi-channel inputs are collapsed to grayscale by
// averaging the color channels; 8-bit values are divided by 255.
Image read_png(const std::filesystem::path& path);

// Writes an 8-bit grayscale PNG. Values are clamped to [0,1] and quantized
// with round-to-nearest. Output bytes are deterministic for a given image.
void write_png(const std::filesystem::path& path, const Image& img);

Image resize_bilinear(const Image& src, int out_width, int out_height);
Image crop(const Image& src, int x0, int y0, int w, int h);
Image hflip(const Image& src);

double mean_intensity(const Image& img);

}  // namespace usclip
