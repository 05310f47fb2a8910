#pragma once

#include <string>
#include <utility>

#include "dssl/image.hpp"

namespace dssl::io {

// 8-bit PNG. Gray, palette and alpha inputs are expanded to RGB on read.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);
std::pair<int, int> png_size(const std::string& path);  // {height, width}

// Depth sidecar: magic "DSSLDPT1", u32 height, u32 width, then
// height*width float32 disparities, row-major, little-endian.
DepthMap read_depth(const std::string& path);
void write_depth(const std::string& path, const DepthMap& depth);
std::pair<int, int> depth_size(const std::string& path);

// Write to <path>.tmp then rename, so partial files never appear under
// the final name.
void atomic_write_bytes(const std::string& path, const std::string& bytes);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dssl::io
