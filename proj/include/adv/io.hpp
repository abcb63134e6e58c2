#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "adv/tensor.hpp"

namespace adv::io {

// One tensor in a parameter stream. The tag names the role of the tensor
// (weights, bias, channel mean, ...) and is checked on load.
struct TensorRecord {
  std::uint8_t tag = 0;
  Tensor tensor;
};

// Parameter stream: magic "DALW", version byte, then per record a tag byte,
// a rank byte, extents as u32 little-endian and values as f64 little-endian.
// Reading stops at end of stream.
void write_dalw(std::ostream& out, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_dalw(std::istream& in);

// Binary PPM (P6, maxval 255). The tensor is 3 x H x W with values in
// [0, 255]; fractional values are rounded on write.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255) holding a per-pixel label map.
void write_pgm(const std::filesystem::path& path, const std::vector<int>& labels,
               int height, int width);
std::vector<int> read_pgm(const std::filesystem::path& path, int& height, int& width);

// Little-endian primitives shared by the binary formats.
void put_u32(std::ostream& out, std::uint32_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
double get_f64(std::istream& in);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace adv::io
