#include "sckn/image_io.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include <png.h>

namespace sckn {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

SpatialMap from_interleaved(const std::vector<unsigned char>& buf, int channels, int h, int w) {
  SpatialMap out(channels, h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch)
        out.at(ch, r, c) = static_cast<double>(buf[(r * w + c) * channels + ch]);
  return out;
}

SpatialMap read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png reader allocation failed");
  }
  std::vector<unsigned char> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported 16-bit PNG: " + path);
  }
  png_set_expand(png);                 // palette/1-2-4 bit -> 8 bit
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG channel count: " + path);
  }
  data.resize(static_cast<size_t>(h) * w * channels);
  rows.resize(h);
  for (int r = 0; r < h; ++r) rows[r] = data.data() + static_cast<size_t>(r) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_interleaved(data, channels, h, w);
}

void write_png(const std::string& path, const SpatialMap& image) {
  if (image.channels != 1 && image.channels != 3)
    throw std::invalid_argument("write_image: PNG supports 1 or 3 channels");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError("cannot open for writing " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png writer allocation failed");
  }
  std::vector<unsigned char> data(static_cast<size_t>(image.height) * image.width *
                                  image.channels);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < image.channels; ++ch) {
        const double v = std::round(image.at(ch, r, c));
        data[(static_cast<size_t>(r) * image.width + c) * image.channels + ch] =
            static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
      }
  std::vector<png_bytep> rows(image.height);
  for (int r = 0; r < image.height; ++r)
    rows[r] = data.data() + static_cast<size_t>(r) * image.width * image.channels;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

int read_pnm_token(FILE* f) {
  int c = std::fgetc(f);
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = std::fgetc(f);
    c = std::fgetc(f);
  }
  if (c == EOF) throw FormatError("truncated PNM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return value;
}

SpatialMap read_pnm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError("cannot open " + path);
  char magic[2];
  if (std::fread(magic, 1, 2, f.get()) != 2 || magic[0] != 'P')
    throw FormatError("not a PNM file: " + path, 0);
  int channels;
  if (magic[1] == '5')
    channels = 1;
  else if (magic[1] == '6')
    channels = 3;
  else
    throw FormatError("only binary P5/P6 PNM supported: " + path, 1);

  const int w = read_pnm_token(f.get());
  const int h = read_pnm_token(f.get());
  const int maxval = read_pnm_token(f.get());
  if (maxval != 255) throw FormatError("unsupported PNM maxval (want 255): " + path);
  std::vector<unsigned char> data(static_cast<size_t>(h) * w * channels);
  if (std::fread(data.data(), 1, data.size(), f.get()) != data.size())
    throw FormatError("truncated PNM pixel data: " + path);
  return from_interleaved(data, channels, h, w);
}

void write_pnm(const std::string& path, const SpatialMap& image) {
  if (image.channels != 1 && image.channels != 3)
    throw std::invalid_argument("write_image: PNM supports 1 or 3 channels");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError("cannot open for writing " + path);
  std::fprintf(f.get(), "P%c\n%d %d\n255\n", image.channels == 1 ? '5' : '6', image.width,
               image.height);
  std::vector<unsigned char> data(static_cast<size_t>(image.height) * image.width *
                                  image.channels);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < image.channels; ++ch) {
        const double v = std::round(image.at(ch, r, c));
        data[(static_cast<size_t>(r) * image.width + c) * image.channels + ch] =
            static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
      }
  if (std::fwrite(data.data(), 1, data.size(), f.get()) != data.size())
    throw FormatError("short write: " + path);
}

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

SpatialMap read_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError("cannot open " + path);
  unsigned char sig[8] = {0};
  const size_t got = std::fread(sig, 1, 8, f.get());
  f.reset();
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return read_pnm(path);
  throw FormatError("unsupported image format: " + path, 0);
}

void write_image(const std::string& path, const SpatialMap& image) {
  if (has_suffix(path, ".png") || has_suffix(path, ".PNG")) {
    write_png(path, image);
  } else if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm")) {
    write_pnm(path, image);
  } else {
    throw std::invalid_argument("write_image: unknown extension (want .png/.pgm/.ppm)");
  }
}

}  // namespace sckn
