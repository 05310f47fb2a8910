#include "dssl/io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

namespace dssl::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path);
  return f;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) {
  throw IoError("libpng: " + std::string(msg ? msg : "unknown"));
}

void png_warn_fn(png_structp, png_const_charp) {}

float byte_to_unit(png_byte b) { return static_cast<float>(b) / 255.0f; }

png_byte unit_to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<png_byte>(std::lround(c * 255.0f));
}

void write_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr char kDepthMagic[8] = {'D', 'S', 'S', 'L', 'D', 'P', 'T', '1'};

}  // namespace

Image read_png(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw IoError(path + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_fn, png_warn_fn);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  Image img;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    if (png_get_channels(png, info) != 3)
      throw IoError(path + ": unexpected channel count after expansion");

    std::vector<png_byte> row(static_cast<size_t>(w) * 3);
    img = Image(3, h, w);
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = byte_to_unit(row[static_cast<size_t>(x) * 3 + c]);
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::pair<int, int> png_size(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw IoError(path + " is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_fn, png_warn_fn);
  png_infop info = png_create_info_struct(png);
  std::pair<int, int> hw;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    hw = {static_cast<int>(png_get_image_height(png, info)),
          static_cast<int>(png_get_image_width(png, info))};
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return hw;
}

void write_png(const std::string& path, const Image& img) {
  require_rgb(img, "write_png");
  const std::string tmp = path + ".tmp";
  {
    FilePtr f = open_file(tmp, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_fn, png_warn_fn);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw IoError("png_create_info_struct failed");
    }
    try {
      png_init_io(png, f.get());
      png_set_compression_level(png, 6);
      png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                   PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                   PNG_FILTER_TYPE_DEFAULT);
      png_write_info(png, info);
      std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
      for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
          for (int c = 0; c < 3; ++c)
            row[static_cast<size_t>(x) * 3 + c] = unit_to_byte(img.at(c, y, x));
        png_write_row(png, row.data());
      }
      png_write_end(png, nullptr);
    } catch (...) {
      png_destroy_write_struct(&png, &info);
      throw;
    }
    png_destroy_write_struct(&png, &info);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

DepthMap read_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kDepthMagic, 8) != 0)
    throw IoError(path + " is not a depth sidecar");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t h = read_u32_le(p + 8);
  const std::uint32_t w = read_u32_le(p + 12);
  const size_t need = 16 + static_cast<size_t>(h) * w * 4;
  if (bytes.size() != need)
    throw IoError(path + ": truncated depth sidecar");
  DepthMap d(static_cast<int>(h), static_cast<int>(w));
  std::memcpy(d.values.data(), bytes.data() + 16,
              static_cast<size_t>(h) * w * 4);
  return d;
}

std::pair<int, int> depth_size(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char head[16];
  in.read(head, 16);
  if (in.gcount() != 16 || std::memcmp(head, kDepthMagic, 8) != 0)
    throw IoError(path + " is not a depth sidecar");
  const auto* p = reinterpret_cast<const unsigned char*>(head);
  return {static_cast<int>(read_u32_le(p + 8)),
          static_cast<int>(read_u32_le(p + 12))};
}

void write_depth(const std::string& path, const DepthMap& depth) {
  if (depth.height <= 0 || depth.width <= 0)
    throw ShapeError("write_depth: empty depth map");
  std::string bytes;
  bytes.reserve(16 + depth.values.size() * 4);
  bytes.append(kDepthMagic, 8);
  write_u32_le(bytes, static_cast<std::uint32_t>(depth.height));
  write_u32_le(bytes, static_cast<std::uint32_t>(depth.width));
  const char* raw = reinterpret_cast<const char*>(depth.values.data());
  bytes.append(raw, depth.values.size() * 4);
  atomic_write_bytes(path, bytes);
}

void atomic_write_bytes(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
  atomic_write_bytes(path, text);
}

}  // namespace dssl::io
