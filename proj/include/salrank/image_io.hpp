#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "salrank/core.hpp"

namespace salrank {

/// Raw 8-bit image, 1 (gray) or 3 (RGB) interleaved channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image8&) const = default;
};

std::vector<std::uint8_t> encode_png(const Image8& image);
Image8 decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

/// Stores round(scale * v) clamped to [0,255]. Unit maps use the default
/// scale; maps already in the byte range pass scale = 1.
Image8 to_image8(const GrayscaleMap& map, double scale = 255.0);
Image8 to_image8(const FeatureTensor& rgb);

void write_gray_png(const std::filesystem::path& path, const GrayscaleMap& map,
                    double scale = 255.0);
/// Returns values in [0,1]; RGB files are averaged to gray.
GrayscaleMap read_gray_png(const std::filesystem::path& path);

void write_rgb_png(const std::filesystem::path& path, const FeatureTensor& rgb);
FeatureTensor read_rgb_png(const std::filesystem::path& path);

/// Binary P5 graymap for quick inspection.
void write_pgm(const std::filesystem::path& path, const GrayscaleMap& map, double scale = 255.0);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace salrank
