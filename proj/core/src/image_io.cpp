#include "hairgbuf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

static_assert(std::endian::native == std::endian::little,
              "PFM/HGBW writers assume a little-endian host");

std::string token(std::istream& in) {
  std::string t;
  in >> t;
  if (!in) throw IoError("PFM: truncated header");
  return t;
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const TensorImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const int c = image.channels();
  if (c == 1) {
    out << "Pf\n" << image.width() << ' ' << image.height() << "\n-1.0\n";
  } else if (c == 3) {
    out << "PF\n" << image.width() << ' ' << image.height() << "\n-1.0\n";
  } else {
    out << "PX\n" << image.width() << ' ' << image.height() << ' ' << c << "\n-1.0\n";
  }
  const std::size_t row = static_cast<std::size_t>(image.width()) * c;
  for (int y = image.height() - 1; y >= 0; --y) {
    const float* p = image.data().data() + static_cast<std::size_t>(y) * row;
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

TensorImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = token(in);
  int channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else if (magic != "PX") {
    throw IoError("PFM: bad magic in " + path.string());
  }
  const int width = std::stoi(token(in));
  const int height = std::stoi(token(in));
  if (magic == "PX") channels = std::stoi(token(in));
  const double scale = std::stod(token(in));
  in.get();  // single whitespace before the raster
  if (width <= 0 || height <= 0 || channels <= 0) throw IoError("PFM: bad dimensions");
  if (scale > 0.0) throw IoError("PFM: big-endian files are not supported");

  std::vector<float> data(static_cast<std::size_t>(width) * height * channels);
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(data.data() + static_cast<std::size_t>(y) * row),
            static_cast<std::streamsize>(row * sizeof(float)));
    if (!in) throw IoError("PFM: truncated raster in " + path.string());
  }
  return TensorImage(height, width, channels, std::move(data));
}

void write_png(const std::filesystem::path& path, const TensorImage& image) {
  const int c = image.channels();
  const int color_type = [c] {
    switch (c) {
      case 1: return PNG_COLOR_TYPE_GRAY;
      case 3: return PNG_COLOR_TYPE_RGB;
      case 4: return PNG_COLOR_TYPE_RGBA;
      default: throw InvalidArgument("write_png: unsupported channel count");
    }
  }();

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> rows(static_cast<std::size_t>(image.width()) * image.height() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    rows[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  std::vector<png_bytep> row_ptrs(image.height());
  for (int y = 0; y < image.height(); ++y) {
    row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * image.width() * c;
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace hairgbuf
