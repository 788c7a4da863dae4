#include "narrate/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace narrate {

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open file for reading", path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::io, "read failed", path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open file for writing", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "write failed", path.string());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rng());
  write_file(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::io, "atomic rename failed", path.string());
  }
}

// ---------------------------------------------------------------------------
// libpng plumbing

namespace {

struct PngError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void png_throw(png_structp, png_const_charp msg) { throw PngError(msg); }
void png_quiet(png_structp, png_const_charp) {}

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + n > cur->bytes.size()) throw PngError("unexpected end of PNG data");
  std::memcpy(out, cur->bytes.data() + cur->offset, n);
  cur->offset += n;
}

void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

void png_flush_mem(png_structp) {}

class PngReader {
 public:
  explicit PngReader(std::span<const std::uint8_t> bytes) : cursor_{bytes} {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
      fail(ErrorCode::format, "not a PNG file");
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_quiet);
    info_ = png_create_info_struct(png_);
    png_set_read_fn(png_, &cursor_, png_read_mem);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  ReadCursor cursor_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

struct RawPng {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  Bytes rows;  // tightly packed, big-endian samples for 16-bit
};

enum class PngMode { rgb8, rgb16_exact };

RawPng decode_png(std::span<const std::uint8_t> bytes, PngMode mode) {
  try {
    PngReader r(bytes);
    png_read_info(r.png(), r.info());
    const auto w = png_get_image_width(r.png(), r.info());
    const auto h = png_get_image_height(r.png(), r.info());
    const int depth = png_get_bit_depth(r.png(), r.info());
    const int color = png_get_color_type(r.png(), r.info());
    if (w > static_cast<png_uint_32>(kMaxDimension) || h > static_cast<png_uint_32>(kMaxDimension))
      fail(ErrorCode::limit, "PNG dimensions exceed limit",
           std::to_string(w) + "x" + std::to_string(h));

    if (mode == PngMode::rgb16_exact) {
      if (depth != 16)
        fail(ErrorCode::unsupported, "normal maps must be 16-bit RGB PNG",
             "found bit depth " + std::to_string(depth));
      if (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGB_ALPHA)
        fail(ErrorCode::unsupported, "normal maps must be 16-bit RGB PNG", "found non-RGB colour type");
      if (color == PNG_COLOR_TYPE_RGB_ALPHA) png_set_strip_alpha(r.png());
    } else {
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png());
      if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png());
      if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(r.png());
      if (png_get_valid(r.png(), r.info(), PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png());
      png_set_strip_alpha(r.png());
      if (depth == 16) png_set_strip_16(r.png());
    }
    png_read_update_info(r.png(), r.info());

    RawPng raw;
    raw.width = static_cast<int>(w);
    raw.height = static_cast<int>(h);
    raw.channels = png_get_channels(r.png(), r.info());
    raw.bit_depth = png_get_bit_depth(r.png(), r.info());
    if (raw.channels != 3) fail(ErrorCode::format, "unexpected PNG channel layout");
    const std::size_t stride = png_get_rowbytes(r.png(), r.info());
    raw.rows.resize(stride * h);
    std::vector<png_bytep> ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) ptrs[y] = raw.rows.data() + y * stride;
    png_read_image(r.png(), ptrs.data());
    png_read_end(r.png(), nullptr);
    return raw;
  } catch (const PngError& e) {
    fail(ErrorCode::format, "malformed PNG", e.what());
  }
}

Bytes encode_png(int width, int height, int color_type, int bit_depth, const Bytes& rows) {
  if (width <= 0 || height <= 0) fail(ErrorCode::contract, "cannot encode an empty PNG");
  Bytes out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_quiet);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = rows.size() / static_cast<std::size_t>(height);
    std::vector<png_bytep> ptrs(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
      ptrs[static_cast<std::size_t>(y)] = const_cast<png_bytep>(rows.data() + y * stride);
    png_write_image(png, ptrs.data());
    png_write_end(png, nullptr);
  } catch (const PngError& e) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "PNG encoding failed", e.what());
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Normal maps

Vec3 decode_normal_code(const NormalCode& c) {
  auto dec = [](std::uint16_t v) { return 2.0 * v / 65535.0 - 1.0; };
  return {dec(c[0]), dec(c[1]), dec(c[2])};
}

NormalCode quantize_normal(const Vec3& n) {
  auto enc = [](double v) {
    const double q = std::floor((v + 1.0) / 2.0 * 65535.0 + 0.5);
    return static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
  };
  return {enc(n.x), enc(n.y), enc(n.z)};
}

std::optional<Vec3> decode_normal(const NormalCode& code) {
  if (code[0] == 0 && code[1] == 0 && code[2] == 0) return std::nullopt;
  const Vec3 d = decode_normal_code(code);
  const double len = norm(d);
  if (len < 0.5) return std::nullopt;
  return d / len;
}

NormalCode encode_normal(const Vec3& n) {
  const NormalCode base = quantize_normal(n);
  if (const auto dec = decode_normal(base); dec && quantize_normal(*dec) == base) return base;
  NormalCode best = base;
  double best_err = -1;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int cx = base[0] + dx, cy = base[1] + dy, cz = base[2] + dz;
        if (cx < 0 || cy < 0 || cz < 0 || cx > 65535 || cy > 65535 || cz > 65535) continue;
        const NormalCode cand{static_cast<std::uint16_t>(cx), static_cast<std::uint16_t>(cy),
                              static_cast<std::uint16_t>(cz)};
        const auto dec = decode_normal(cand);
        if (!dec || quantize_normal(*dec) != cand) continue;
        const Vec3 e = *dec - n;
        const double err = std::max({std::abs(e.x), std::abs(e.y), std::abs(e.z)});
        if (best_err < 0 || err < best_err) {
          best_err = err;
          best = cand;
        }
      }
  return best;
}

NormalMap decode_normal_png(std::span<const std::uint8_t> bytes) {
  const RawPng raw = decode_png(bytes, PngMode::rgb16_exact);
  NormalMap out(raw.width, raw.height);
  std::size_t i = 0;
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x, i += 6) {
      const auto* p = raw.rows.data() + i;
      const NormalCode code{static_cast<std::uint16_t>(p[0] << 8 | p[1]),
                            static_cast<std::uint16_t>(p[2] << 8 | p[3]),
                            static_cast<std::uint16_t>(p[4] << 8 | p[5])};
      if (auto n = decode_normal(code)) out.set(x, y, *n);
    }
  return out;
}

Bytes encode_normal_png(const NormalMap& normals) {
  require(normals.normals.same_shape(normals.mask), "normal map layers differ in size");
  Bytes rows(normals.normals.size() * 6);
  std::size_t i = 0;
  for (int y = 0; y < normals.height(); ++y)
    for (int x = 0; x < normals.width(); ++x) {
      const NormalCode c = normals.valid(x, y) ? encode_normal(normals.at(x, y)) : NormalCode{0, 0, 0};
      for (const auto v : c) {
        rows[i++] = static_cast<std::uint8_t>(v >> 8);
        rows[i++] = static_cast<std::uint8_t>(v & 0xff);
      }
    }
  return encode_png(normals.width(), normals.height(), PNG_COLOR_TYPE_RGB, 16, rows);
}

NormalMap read_normal_png(const std::filesystem::path& path) {
  return decode_normal_png(read_file(path));
}

void write_normal_png(const NormalMap& normals, const std::filesystem::path& path) {
  write_file(path, encode_normal_png(normals));
}

// ---------------------------------------------------------------------------
// Colour and mask PNGs

RgbImage decode_rgb_png(std::span<const std::uint8_t> bytes) {
  const RawPng raw = decode_png(bytes, PngMode::rgb8);
  RgbImage img(raw.width, raw.height, ColorSpace::srgb8);
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = {raw.rows[3 * i] / 255.0, raw.rows[3 * i + 1] / 255.0, raw.rows[3 * i + 2] / 255.0};
  return img;
}

Bytes encode_rgb_png(const RgbImage& img) {
  const RgbImage srgb = img.space() == ColorSpace::srgb8 ? img : linear_to_srgb(img);
  Bytes rows(srgb.size() * 3);
  for (std::size_t i = 0; i < srgb.size(); ++i) {
    rows[3 * i] = to_byte(srgb[i].r);
    rows[3 * i + 1] = to_byte(srgb[i].g);
    rows[3 * i + 2] = to_byte(srgb[i].b);
  }
  return encode_png(srgb.width(), srgb.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

RgbImage read_rgb_png(const std::filesystem::path& path) { return decode_rgb_png(read_file(path)); }

void write_rgb_png(const RgbImage& img, const std::filesystem::path& path) {
  write_file(path, encode_rgb_png(img));
}

Mask decode_mask_png(std::span<const std::uint8_t> bytes) {
  const RawPng raw = decode_png(bytes, PngMode::rgb8);
  Mask m(raw.width, raw.height);
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = (raw.rows[3 * i] | raw.rows[3 * i + 1] | raw.rows[3 * i + 2]) != 0 ? 1 : 0;
  return m;
}

Bytes encode_mask_png(const Mask& mask) {
  Bytes rows(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) rows[i] = mask[i] ? 255 : 0;
  return encode_png(mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 8, rows);
}

Mask read_mask_png(const std::filesystem::path& path) { return decode_mask_png(read_file(path)); }

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  write_file(path, encode_mask_png(mask));
}

// ---------------------------------------------------------------------------
// PFM

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

Bytes pfm_header(const char* magic, int w, int h) {
  std::string header = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  return Bytes(header.begin(), header.end());
}

void append_float_le(Bytes& out, float f) {
  auto bits = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&bits);
  out.insert(out.end(), p, p + 4);
}

}  // namespace

PfmImage decode_pfm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  const std::string magic = next_token();
  int channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else fail(ErrorCode::format, "bad PFM magic", magic);

  long w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stol(next_token());
    h = std::stol(next_token());
    scale = std::stod(next_token());
  } catch (const std::exception&) {
    fail(ErrorCode::format, "malformed PFM header");
  }
  if (w <= 0 || h <= 0) fail(ErrorCode::format, "malformed PFM dimensions");
  if (w > kMaxDimension || h > kMaxDimension)
    fail(ErrorCode::limit, "PFM dimensions exceed limit", std::to_string(w) + "x" + std::to_string(h));
  if (scale == 0 || !std::isfinite(scale)) fail(ErrorCode::format, "malformed PFM scale");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(ErrorCode::format, "truncated PFM header");
  ++pos;  // single whitespace before the raster

  const bool file_little = scale < 0;
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  if (bytes.size() - pos != count * 4) fail(ErrorCode::format, "PFM raster size mismatch");

  auto value = [&](std::size_t k) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + pos + 4 * k, 4);
    const bool native_little = std::endian::native == std::endian::little;
    if (file_little != native_little) bits = byteswap32(bits);
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f)) fail(ErrorCode::format, "non-finite value in PFM");
    return static_cast<double>(f);
  };

  const int iw = static_cast<int>(w), ih = static_cast<int>(h);
  if (channels == 1) {
    HeightField field(iw, ih);
    for (int row = 0; row < ih; ++row)
      for (int x = 0; x < iw; ++x) {
        const int y = ih - 1 - row;
        field.z(x, y) = value(static_cast<std::size_t>(row) * iw + x);
        field.mask.set(x, y);
      }
    return field;
  }
  RgbImage img(iw, ih, ColorSpace::linear);
  for (int row = 0; row < ih; ++row)
    for (int x = 0; x < iw; ++x) {
      const std::size_t k = 3 * (static_cast<std::size_t>(row) * iw + x);
      img(x, ih - 1 - row) = {value(k), value(k + 1), value(k + 2)};
    }
  return img;
}

Bytes encode_pfm(const HeightField& field) {
  Bytes out = pfm_header("Pf", field.width(), field.height());
  out.reserve(out.size() + field.z.size() * 4);
  for (int y = field.height() - 1; y >= 0; --y)
    for (int x = 0; x < field.width(); ++x) {
      const double v = field.mask.test(x, y) ? field.z(x, y) : 0.0;
      if (!std::isfinite(v)) fail(ErrorCode::contract, "non-finite height value");
      append_float_le(out, static_cast<float>(v));
    }
  return out;
}

Bytes encode_pfm(const RgbImage& img) {
  require(img.space() == ColorSpace::linear, "PFM stores linear images only");
  Bytes out = pfm_header("PF", img.width(), img.height());
  out.reserve(out.size() + img.size() * 12);
  for (int y = img.height() - 1; y >= 0; --y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img(x, y)[c];
        if (!std::isfinite(v)) fail(ErrorCode::contract, "non-finite pixel value");
        append_float_le(out, static_cast<float>(v));
      }
  return out;
}

PfmImage read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }

void write_pfm(const HeightField& field, const std::filesystem::path& path) {
  write_file(path, encode_pfm(field));
}

void write_pfm(const RgbImage& img, const std::filesystem::path& path) {
  write_file(path, encode_pfm(img));
}

HeightField read_height_pfm(const std::filesystem::path& path) {
  auto img = read_pfm(path);
  if (auto* f = std::get_if<HeightField>(&img)) return std::move(*f);
  fail(ErrorCode::unsupported, "expected a one-channel PFM", path.string());
}

RgbImage read_rgb_pfm(const std::filesystem::path& path) {
  auto img = read_pfm(path);
  if (auto* rgb = std::get_if<RgbImage>(&img)) return std::move(*rgb);
  const auto& f = std::get<HeightField>(img);
  RgbImage out(f.width(), f.height(), ColorSpace::linear);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {f.z[i], f.z[i], f.z[i]};
  return out;
}

}  // namespace narrate
