#include "uscliplab/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace usclip {

Image read_png(const std::filesystem::path& path) {
  png_image pimg;
  std::memset(&pimg, 0, sizeof(pimg));
  pimg.version = PNG_IMAGE_VERSION;

  if (!png_image_begin_read_from_file(&pimg, path.string().c_str())) {
    throw std::runtime_error("unreadable image file: " + path.string() + " (" +
                             pimg.message + ")");
  }
  // Decode to 8-bit RGB so the grayscale collapse rule (channel average) is
  // applied by us, not by the codec's luma weighting.
  pimg.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(pimg));
  if (!png_image_finish_read(&pimg, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = pimg.message;
    png_image_free(&pimg);
    throw std::runtime_error("failed to decode image: " + path.string() + " (" + msg + ")");
  }

  Image out(static_cast<int>(pimg.width), static_cast<int>(pimg.height));
  const unsigned char* p = buf.data();
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    double v = (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0;
    out.pixels[i] = v / 255.0;
    p += 3;
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.empty()) throw std::invalid_argument("write_png: empty image");

  std::vector<unsigned char> bytes(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    double v = std::clamp(img.pixels[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }

  png_image pimg;
  std::memset(&pimg, 0, sizeof(pimg));
  pimg.version = PNG_IMAGE_VERSION;
  pimg.width = static_cast<png_uint_32>(img.width);
  pimg.height = static_cast<png_uint_32>(img.height);
  pimg.format = PNG_FORMAT_GRAY;

  if (!png_image_write_to_file(&pimg, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("failed to write image: " + path.string() + " (" +
                             pimg.message + ")");
  }
}

Image resize_bilinear(const Image& src, int out_width, int out_height) {
  if (src.empty()) throw std::invalid_argument("resize_bilinear: empty source image");
  if (out_width <= 0 || out_height <= 0) {
    throw std::invalid_argument("resize_bilinear: non-positive target shape");
  }
  if (src.width == out_width && src.height == out_height) return src;

  Image out(out_width, out_height);
  const double sx = static_cast<double>(src.width) / out_width;
  const double sy = static_cast<double>(src.height) / out_height;
  for (int y = 0; y < out_height; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double wx = fx - x0;
      double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
      double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
      out.at(y, x) = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

Image crop(const Image& src, int x0, int y0, int w, int h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("crop: non-positive shape");
  if (x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height) {
    throw std::invalid_argument("crop: window outside image bounds");
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const double* s = src.pixels.data() + static_cast<size_t>(y0 + y) * src.width + x0;
    std::copy(s, s + w, out.pixels.data() + static_cast<size_t>(y) * w);
  }
  return out;
}

Image hflip(const Image& src) {
  Image out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      out.at(y, x) = src.at(y, src.width - 1 - x);
    }
  }
  return out;
}

double mean_intensity(const Image& img) {
  if (img.empty()) throw std::invalid_argument("mean_intensity: empty image");
  double s = 0.0;
  for (double v : img.pixels) s += v;
  return s / static_cast<double>(img.pixels.size());
}

}  // namespace usclip
