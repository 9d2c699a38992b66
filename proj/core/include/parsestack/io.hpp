#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "parsestack/net.hpp"

namespace pstk {

// Tensor snapshot, little-endian: magic "PSTK", version u32, rank u32,
// extents u64[rank], dtype tag u8 (0 = f64, 1 = f32), raw values.
template <typename T>
void write_tensor_snapshot(std::ostream& os, const Tensor<T>& t);

// Reads a snapshot, converting the stored dtype to T if they differ.
template <typename T>
Tensor<T> read_tensor_snapshot(std::istream& is);

// Checkpoint container: magic "PSTC", version u32, JSON header (mode,
// architecture configs, hierarchy hash + text, bilinear convention tag,
// dtype), then named tensor snapshots.
template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path);

template <typename T>
Model<T> load_checkpoint(const std::string& path);

// Minimal PNG support: 8-bit grayscale / RGB, non-interlaced.
void write_png_gray(const std::string& path, int w, int h,
                    const std::vector<uint8_t>& pixels);
void write_png_rgb(const std::string& path, int w, int h,
                   const std::vector<uint8_t>& pixels);

struct PngImage {
  int w = 0, h = 0, channels = 0;  // 1 = gray, 3 = rgb
  std::vector<uint8_t> pixels;     // row-major, interleaved
};

PngImage read_png(const std::string& path);

// Grouped bar chart (documentation aid, not a data contract).
void write_svg_bar_chart(const std::string& path, const std::string& title,
                         const std::vector<std::string>& group_labels,
                         const std::vector<std::string>& series_labels,
                         const std::vector<std::vector<double>>& values);

// Fixed round-trippable formatting shared by every CSV writer.
std::string format_double(double v);

}  // namespace pstk
