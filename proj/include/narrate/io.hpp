#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "narrate/raster.hpp"

namespace narrate {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Normal maps: 16-bit RGB PNG, channel = round((n + 1) / 2 * 65535).
// Unmasked pixels are stored as literal (0, 0, 0).

using NormalCode = std::array<std::uint16_t, 3>;

/// Channel triple decoded to a (not renormalized) vector.
Vec3 decode_normal_code(const NormalCode& code);
/// Plain rounding of a unit vector to channel values.
NormalCode quantize_normal(const Vec3& n);
/// Code written for a masked unit normal. Chosen among the 3x3x3 lattice
/// neighbours of the plain rounding so that decode + renormalize + encode
/// returns the same code, which keeps write(read(f)) byte-identical.
NormalCode encode_normal(const Vec3& n);
/// Decoded code, or nullopt for the sentinel / vectors shorter than 0.5.
std::optional<Vec3> decode_normal(const NormalCode& code);

NormalMap decode_normal_png(std::span<const std::uint8_t> bytes);
Bytes encode_normal_png(const NormalMap& normals);
NormalMap read_normal_png(const std::filesystem::path& path);
void write_normal_png(const NormalMap& normals, const std::filesystem::path& path);

// Colour images: 8-bit sRGB PNG. Grey, palette and alpha inputs are expanded
// to RGB; 16-bit colour input is reduced to 8 bits.

RgbImage decode_rgb_png(std::span<const std::uint8_t> bytes);
/// Linear images are converted to sRGB first.
Bytes encode_rgb_png(const RgbImage& img);
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const RgbImage& img, const std::filesystem::path& path);

/// Any PNG; a pixel is set when any channel is non-zero.
Mask decode_mask_png(std::span<const std::uint8_t> bytes);
/// 8-bit greyscale, 0 / 255.
Bytes encode_mask_png(const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);

// Portable Float Map. "Pf" holds one channel, "PF" three. Rows are stored
// bottom to top. Files are written little-endian (scale -1.0); big-endian
// input (positive scale) is byte-swapped on read.

using PfmImage = std::variant<HeightField, RgbImage>;

PfmImage decode_pfm(std::span<const std::uint8_t> bytes);
/// Unmasked pixels are written as 0.
Bytes encode_pfm(const HeightField& field);
/// Requires a linear image.
Bytes encode_pfm(const RgbImage& img);

PfmImage read_pfm(const std::filesystem::path& path);
void write_pfm(const HeightField& field, const std::filesystem::path& path);
void write_pfm(const RgbImage& img, const std::filesystem::path& path);
/// One-channel PFM; every pixel masked.
HeightField read_height_pfm(const std::filesystem::path& path);
/// Three-channel PFM, or one-channel replicated to grey.
RgbImage read_rgb_pfm(const std::filesystem::path& path);

}  // namespace narrate
