// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dfd/core.hpp"

namespace dfd {

/// Raster IO. The raw float32 little-endian file with a JSON sidecar
/// ({width, height, channels}) is the authoritative format; PNG files are
/// previews/exports. `path` is the .raw file; the sidecar replaces the
/// extension with .json.
void write_raw(const std::string& path, const ImageF& img);
void write_raw(const std::string& path, const ImageD& img);
ImageF read_raw(const std::string& path);
ImageD read_raw_double(const std::string& path);

/// 16-bit RGB PNG; values clamped to [0,1] at export only.
void write_png16(const std::string& path, const ImageD& rgb);
/// 8-bit PNG: 1 channel (grayscale, values clamped [0,1]) or 3 channels.
void write_png8(const std::string& path, const ImageD& img);
/// Depth preview: finite values mapped through a color scale over
/// [lo, hi]; NaN pixels are black. Writes a small JSON next to the PNG
/// recording the scale bounds.
void write_png_depth(const std::string& path, const ImageD& depth, double lo, double hi);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace dfd
