#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "crffuse/image_io.hpp"

namespace crffuse {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::uint32_t bswap32(std::uint32_t v) {
  return ((v & 0xFF000000u) >> 24) | ((v & 0x00FF0000u) >> 8) | ((v & 0x0000FF00u) << 8) |
         ((v & 0x000000FFu) << 24);
}

void append_le_float(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = bswap32(bits);
  char raw[4];
  std::memcpy(raw, &bits, 4);
  out.append(raw, 4);
}

float read_le_float(const char* p, bool file_is_little) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  const bool native_little = std::endian::native == std::endian::little;
  if (file_is_little != native_little) bits = bswap32(bits);
  return std::bit_cast<float>(bits);
}

// Reads one whitespace-delimited header token, skipping comment lines.
std::string next_token(const std::string& bytes, std::size_t& pos, const std::string& path) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (pos < bytes.size() && bytes[pos] == '#') {
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    return next_token(bytes, pos, path);
  }
  std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) fail(path, "truncated header");
  return bytes.substr(start, pos - start);
}

int parse_dim(const std::string& token, const std::string& path) {
  try {
    std::size_t used = 0;
    int v = std::stoi(token, &used);
    if (used != token.size() || v < 1) fail(path, "bad dimension '" + token + "'");
    return v;
  } catch (const std::invalid_argument&) {
    fail(path, "bad dimension '" + token + "'");
  } catch (const std::out_of_range&) {
    fail(path, "bad dimension '" + token + "'");
  }
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(tmp, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(tmp, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(path, "rename failed");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_pfm(const std::string& path, const DepthMap& map) {
  map.require_valid(false);
  std::string out = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) +
                    "\n-1.0\n";
  out.reserve(out.size() + static_cast<std::size_t>(map.size()) * 4);
  for (int y = map.height - 1; y >= 0; --y)
    for (int x = 0; x < map.width; ++x)
      append_le_float(out, static_cast<float>(map.at(x, y)));
  write_file_atomic(path, out);
}

DepthMap read_pfm(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  if (next_token(bytes, pos, path) != "Pf") fail(path, "not a grayscale PFM file");
  const int w = parse_dim(next_token(bytes, pos, path), path);
  const int h = parse_dim(next_token(bytes, pos, path), path);
  const std::string scale_token = next_token(bytes, pos, path);
  double scale = 0.0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    fail(path, "bad scale '" + scale_token + "'");
  }
  if (scale == 0.0) fail(path, "bad scale '" + scale_token + "'");
  ++pos;  // single whitespace byte after the scale
  const std::size_t need = static_cast<std::size_t>(w) * h * 4;
  if (bytes.size() < pos + need) fail(path, "truncated pixel data");

  DepthMap map(w, h);
  const bool little = scale < 0.0;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      map.values[static_cast<std::size_t>(y) * w + x] =
          read_le_float(bytes.data() + pos, little);
      pos += 4;
    }
  }
  return map;
}

void write_ppm(const std::string& path, const RgbImage& image) {
  image.require_valid();
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  auto quantize = [](double v) {
    return static_cast<char>(std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255));
  };
  for (std::size_t i = 0; i < image.r.size(); ++i) {
    out += quantize(image.r[i]);
    out += quantize(image.g[i]);
    out += quantize(image.b[i]);
  }
  write_file_atomic(path, out);
}

RgbImage read_ppm(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  if (next_token(bytes, pos, path) != "P6") fail(path, "not a binary PPM file");
  const int w = parse_dim(next_token(bytes, pos, path), path);
  const int h = parse_dim(next_token(bytes, pos, path), path);
  const int maxval = parse_dim(next_token(bytes, pos, path), path);
  if (maxval != 255) fail(path, "unsupported maxval " + std::to_string(maxval));
  ++pos;  // single whitespace byte after maxval
  const std::size_t count = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + count * 3) fail(path, "truncated pixel data");

  RgbImage image;
  image.width = w;
  image.height = h;
  image.r.resize(count);
  image.g.resize(count);
  image.b.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    image.r[i] = static_cast<unsigned char>(bytes[pos + 3 * i]) / 255.0;
    image.g[i] = static_cast<unsigned char>(bytes[pos + 3 * i + 1]) / 255.0;
    image.b[i] = static_cast<unsigned char>(bytes[pos + 3 * i + 2]) / 255.0;
  }
  return image;
}

}  // namespace crffuse
