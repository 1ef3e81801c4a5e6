#include "upsam/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace upsam {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open header file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int require_positive_int(const nlohmann::json& j, const char* field) {
  if (!j.contains(field))
    throw FormatError(std::string("header missing field: ") + field);
  const auto& v = j.at(field);
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
    throw FormatError(std::string("header field '") + field +
                      "' must be a positive integer");
  const auto n = v.get<std::int64_t>();
  if (n > 1 << 24)
    throw FormatError(std::string("header field '") + field +
                      "' is implausibly large");
  return static_cast<int>(n);
}

void require_tag(const nlohmann::json& j, const char* field,
                 const char* expect) {
  if (!j.contains(field))
    throw FormatError(std::string("header missing field: ") + field);
  const auto& v = j.at(field);
  if (!v.is_string() || v.get<std::string>() != expect)
    throw FormatError(std::string("header field '") + field +
                      "' must be \"" + expect + "\"");
}

}  // namespace

std::string raster_stem(const std::string& path) {
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::strlen(suf);
    return path.size() >= n && path.compare(path.size() - n, n, suf) == 0;
  };
  if (ends_with(".json")) return path.substr(0, path.size() - 5);
  if (ends_with(".f32")) return path.substr(0, path.size() - 4);
  return path;
}

MsiPanPair make_msi_pan_pair(RasterImage msi, RasterImage pan) {
  if (pan.bands != 1)
    throw DimensionError("pan image must have exactly 1 band, got " +
                         std::to_string(pan.bands));
  if (msi.width <= 0 || msi.height <= 0)
    throw DimensionError("msi image is empty");
  if (pan.width % msi.width != 0 || pan.height % msi.height != 0)
    throw DimensionError("pan dimensions are not an integer multiple of msi");
  const int rx = pan.width / msi.width;
  const int ry = pan.height / msi.height;
  if (rx != ry)
    throw DimensionError("pan/msi resize factor differs per axis: " +
                         std::to_string(rx) + " vs " + std::to_string(ry));
  MsiPanPair p;
  p.msi = std::move(msi);
  p.pan = std::move(pan);
  p.factor = rx;
  return p;
}

RasterImage load_raster(const std::string& path) {
  return load_raster(path, nullptr);
}

RasterImage load_raster(const std::string& path, RasterHeader* header_out) {
  const std::string stem = raster_stem(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(stem + ".json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed header JSON in " + stem + ".json: " +
                      e.what());
  }
  if (!j.is_object()) throw FormatError("header is not a JSON object");

  RasterHeader h;
  h.width = require_positive_int(j, "width");
  h.height = require_positive_int(j, "height");
  h.bands = require_positive_int(j, "bands");
  require_tag(j, "dtype", "f32");
  require_tag(j, "layout", "bsq");
  require_tag(j, "endianness", "little");
  if (j.contains("band_names")) {
    const auto& bn = j.at("band_names");
    if (!bn.is_array())
      throw FormatError("header field 'band_names' must be an array");
    std::vector<std::string> names;
    for (const auto& e : bn) {
      if (!e.is_string())
        throw FormatError("header field 'band_names' must hold strings");
      names.push_back(e.get<std::string>());
    }
    if (static_cast<int>(names.size()) != h.bands)
      throw FormatError("band_names length " + std::to_string(names.size()) +
                        " != bands " + std::to_string(h.bands));
    h.band_names = std::move(names);
  }
  if (j.contains("resolution_m")) {
    const auto& r = j.at("resolution_m");
    if (!r.is_number() || r.get<double>() <= 0)
      throw FormatError("header field 'resolution_m' must be positive");
    h.resolution_m = r.get<double>();
  }

  const std::string data_path = stem + ".f32";
  std::ifstream in(data_path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open data file: " + data_path);
  const std::size_t expect =
      static_cast<std::size_t>(h.width) * h.height * h.bands * 4u;
  const auto actual = static_cast<std::size_t>(in.tellg());
  if (actual != expect)
    throw FormatError("data size mismatch in " + data_path + ": header says " +
                      std::to_string(expect) + " bytes, file has " +
                      std::to_string(actual));
  in.seekg(0);
  std::vector<unsigned char> raw(expect);
  if (expect && !in.read(reinterpret_cast<char*>(raw.data()),
                         static_cast<std::streamsize>(expect)))
    throw IoError("short read on data file: " + data_path);

  RasterImage img(h.width, h.height, h.bands);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned char* b = raw.data() + 4 * i;
    std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                         static_cast<std::uint32_t>(b[1]) << 8 |
                         static_cast<std::uint32_t>(b[2]) << 16 |
                         static_cast<std::uint32_t>(b[3]) << 24;
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f))
      throw FormatError("non-finite sample at index " + std::to_string(i) +
                        " in " + data_path);
    img.samples[i] = static_cast<double>(f);
  }
  if (header_out) *header_out = h;
  return img;
}

namespace {

void save_raster_impl(const RasterImage& img, const std::string& path,
                      const RasterHeader* meta) {
  if (img.width <= 0 || img.height <= 0 || img.bands <= 0 ||
      img.size() != static_cast<std::size_t>(img.width) * img.height *
                        img.bands)
    throw DimensionError("raster has inconsistent dimensions");
  const std::string stem = raster_stem(path);

  ordered_json j;
  j["width"] = img.width;
  j["height"] = img.height;
  j["bands"] = img.bands;
  j["dtype"] = "f32";
  j["layout"] = "bsq";
  j["endianness"] = "little";
  if (meta) {
    if (meta->band_names) {
      if (static_cast<int>(meta->band_names->size()) != img.bands)
        throw FormatError("band_names length does not match band count");
      j["band_names"] = *meta->band_names;
    }
    if (meta->resolution_m) {
      if (*meta->resolution_m <= 0)
        throw FormatError("resolution_m must be positive");
      j["resolution_m"] = *meta->resolution_m;
    }
  }

  {
    std::ofstream out(stem + ".json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write header file: " + stem + ".json");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed on header file: " + stem + ".json");
  }

  std::vector<unsigned char> raw(img.size() * 4);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = img.samples[i];
    if (!std::isfinite(d))
      throw NumericError("refusing to save non-finite sample at index " +
                         std::to_string(i));
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(
        static_cast<float>(d));
    raw[4 * i + 0] = static_cast<unsigned char>(bits & 0xff);
    raw[4 * i + 1] = static_cast<unsigned char>(bits >> 8 & 0xff);
    raw[4 * i + 2] = static_cast<unsigned char>(bits >> 16 & 0xff);
    raw[4 * i + 3] = static_cast<unsigned char>(bits >> 24 & 0xff);
  }
  std::ofstream out(stem + ".f32", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write data file: " + stem + ".f32");
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write failed on data file: " + stem + ".f32");
}

}  // namespace

void save_raster(const RasterImage& img, const std::string& path) {
  save_raster_impl(img, path, nullptr);
}

void save_raster(const RasterImage& img, const std::string& path,
                 const RasterHeader& meta) {
  save_raster_impl(img, path, &meta);
}

RasterImage normalize(const RasterImage& img, NormalizeMode mode,
                      double peak) {
  if (img.size() == 0) throw DomainError("cannot normalize an empty image");
  RasterImage out = img;
  switch (mode) {
    case NormalizeMode::GlobalMax: {
      const double mx = *std::max_element(img.samples.begin(),
                                          img.samples.end());
      if (mx <= 0)
        throw DomainError("global maximum is not positive; scale undefined");
      for (auto& v : out.samples) v /= mx;
      break;
    }
    case NormalizeMode::PerBandMax: {
      for (int b = 0; b < img.bands; ++b) {
        const double* src = img.band_data(b);
        const double mx = *std::max_element(src, src + img.pixels());
        if (mx <= 0)
          throw DomainError("band " + std::to_string(b) +
                            " maximum is not positive; scale undefined");
        double* dst = out.band_data(b);
        for (std::size_t i = 0; i < img.pixels(); ++i) dst[i] = src[i] / mx;
      }
      break;
    }
    case NormalizeMode::FixedPeak: {
      if (!(peak > 0)) throw DomainError("fixed peak must be positive");
      for (auto& v : out.samples) v = std::min(v / peak, 1.0);
      break;
    }
  }
  return out;
}

namespace {

// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// --- minimal PNG emission (8-bit RGB, stored deflate blocks) ---

std::uint32_t crc32_of(const unsigned char* data, std::size_t n,
                       std::uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = c & 1 ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

std::uint32_t adler32_of(const std::vector<unsigned char>& data) {
  std::uint32_t a = 1, b = 0;
  for (unsigned char c : data) {
    a = (a + c) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24 & 0xff));
  v.push_back(static_cast<unsigned char>(x >> 16 & 0xff));
  v.push_back(static_cast<unsigned char>(x >> 8 & 0xff));
  v.push_back(static_cast<unsigned char>(x & 0xff));
}

void push_chunk(std::vector<unsigned char>& out, const char type[5],
                const std::vector<unsigned char>& data) {
  push_be32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  push_be32(out, crc32_of(body.data(), body.size()) ^ 0xffffffffu);
}

}  // namespace

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<unsigned char>& rgb) {
  if (width <= 0 || height <= 0 ||
      rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw DimensionError("preview buffer size does not match dimensions");

  // Filtered scanlines: each row prefixed with filter type 0 (none).
  std::vector<unsigned char> scan;
  scan.reserve((static_cast<std::size_t>(width) * 3 + 1) * height);
  for (int y = 0; y < height; ++y) {
    scan.push_back(0);
    const unsigned char* row = rgb.data() + static_cast<std::size_t>(y) *
                                                width * 3;
    scan.insert(scan.end(), row, row + static_cast<std::size_t>(width) * 3);
  }

  // zlib stream with stored (uncompressed) deflate blocks.
  std::vector<unsigned char> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t off = 0;
  while (off < scan.size() || scan.empty()) {
    const std::size_t len = std::min<std::size_t>(65535, scan.size() - off);
    const bool final = off + len == scan.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<unsigned char>(len & 0xff));
    z.push_back(static_cast<unsigned char>(len >> 8 & 0xff));
    z.push_back(static_cast<unsigned char>(~len & 0xff));
    z.push_back(static_cast<unsigned char>(~len >> 8 & 0xff));
    z.insert(z.end(), scan.begin() + off, scan.begin() + off + len);
    off += len;
    if (final) break;
  }
  push_be32(z, adler32_of(scan));

  std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', '\r', '\n',
                                    0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  push_be32(ihdr, static_cast<std::uint32_t>(width));
  push_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  push_chunk(png, "IHDR", ihdr);
  push_chunk(png, "IDAT", z);
  push_chunk(png, "IEND", {});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write preview file: " + path);
  out.write(reinterpret_cast<const char*>(png.data()),
            static_cast<std::streamsize>(png.size()));
  if (!out) throw IoError("write failed on preview file: " + path);
}

void export_preview(const RasterImage& img, std::array<int, 3> band_indices,
                    const std::string& path) {
  for (int b : band_indices)
    if (b < 0 || b >= img.bands)
      throw DimensionError("preview band index " + std::to_string(b) +
                           " out of range (bands=" +
                           std::to_string(img.bands) + ")");

  std::vector<unsigned char> rgb(img.pixels() * 3);
  for (int ch = 0; ch < 3; ++ch) {
    const double* src = img.band_data(band_indices[ch]);
    std::vector<double> sorted(src, src + img.pixels());
    std::sort(sorted.begin(), sorted.end());
    const double lo = percentile(sorted, 0.01);
    const double hi = percentile(sorted, 0.99);
    const double span = hi - lo;
    for (std::size_t i = 0; i < img.pixels(); ++i) {
      double t = span > 0 ? (src[i] - lo) / span : 0.5;
      t = std::clamp(t, 0.0, 1.0);
      rgb[3 * i + ch] = static_cast<unsigned char>(std::lround(t * 255.0));
    }
  }
  write_png_rgb8(path, img.width, img.height, rgb);
}

}  // namespace upsam
