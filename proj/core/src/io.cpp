#include "parsestack/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "parsestack/hierarchy.hpp"

namespace pstk {

namespace {

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u8(std::ostream& os, uint8_t v) { write_bytes(os, &v, 1); }

void write_u16(std::ostream& os, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  write_bytes(os, b, 2);
}

void write_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  write_bytes(os, b, 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  write_bytes(os, b, 8);
}

void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    fail(cat("truncated stream while reading ", what));
}

uint8_t read_u8(std::istream& is, const char* what) {
  uint8_t v;
  read_bytes(is, &v, 1, what);
  return v;
}

uint16_t read_u16(std::istream& is, const char* what) {
  uint8_t b[2];
  read_bytes(is, b, 2, what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t read_u32(std::istream& is, const char* what) {
  uint8_t b[4];
  read_bytes(is, b, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& is, const char* what) {
  uint8_t b[8];
  read_bytes(is, b, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

template <typename T>
constexpr uint8_t dtype_tag() {
  return std::is_same_v<T, double> ? 0 : 1;
}

constexpr uint32_t kSnapshotVersion = 1;
constexpr uint32_t kCheckpointVersion = 1;

using nlohmann::json;

json encoder_to_json(const EncoderConfig& enc) {
  json blocks = json::array();
  for (const EncoderBlockSpec& b : enc.blocks)
    blocks.push_back({{"channels", b.channels},
                      {"conv_layers", b.conv_layers},
                      {"downsample", b.downsample}});
  return json{{"blocks", blocks}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig enc;
  for (const json& b : j.at("blocks"))
    enc.blocks.push_back({b.at("channels").get<int>(), b.at("conv_layers").get<int>(),
                          b.at("downsample").get<bool>()});
  return enc;
}

json heads_to_json(const StackedHeadConfig& h) {
  json levels = json::array();
  for (const HeadLevelSpec& l : h.levels)
    levels.push_back({{"num_classes", l.num_classes}, {"tap_block", l.tap_block}});
  return json{{"levels", levels},
              {"head_channels", h.head_channels},
              {"head_conv_layers", h.head_conv_layers}};
}

StackedHeadConfig heads_from_json(const json& j) {
  StackedHeadConfig h;
  for (const json& l : j.at("levels"))
    h.levels.push_back({l.at("num_classes").get<int>(), l.at("tap_block").get<int>()});
  h.head_channels = j.at("head_channels").get<int>();
  h.head_conv_layers = j.at("head_conv_layers").get<int>();
  return h;
}

}  // namespace

template <typename T>
void write_tensor_snapshot(std::ostream& os, const Tensor<T>& t) {
  check(t.defined(), "snapshot: undefined tensor");
  write_bytes(os, "PSTK", 4);
  write_u32(os, kSnapshotVersion);
  write_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i)
    write_u64(os, static_cast<uint64_t>(t.dim(i)));
  write_u8(os, dtype_tag<T>());
  static_assert(sizeof(float) == 4 && sizeof(double) == 8);
  write_bytes(os, t.ptr(), sizeof(T) * static_cast<size_t>(t.numel()));
}

template <typename T>
Tensor<T> read_tensor_snapshot(std::istream& is) {
  char magic[4];
  read_bytes(is, magic, 4, "snapshot magic");
  check(std::memcmp(magic, "PSTK", 4) == 0, "snapshot: bad magic (expected PSTK)");
  const uint32_t version = read_u32(is, "snapshot version");
  check(version == kSnapshotVersion,
        cat("snapshot: unsupported version ", version, " (expected ", kSnapshotVersion, ")"));
  const uint32_t rank = read_u32(is, "snapshot rank");
  check(rank <= 8, "snapshot: implausible rank");
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i)
    shape[i] = static_cast<int64_t>(read_u64(is, "snapshot extent"));
  const uint8_t tag = read_u8(is, "snapshot dtype");
  check(tag == 0 || tag == 1, "snapshot: unknown dtype tag");
  const int64_t n = numel_of(shape);
  std::vector<T> data(static_cast<size_t>(n));
  if (tag == dtype_tag<T>()) {
    read_bytes(is, data.data(), sizeof(T) * static_cast<size_t>(n), "snapshot data");
  } else if (tag == 0) {
    std::vector<double> tmp(static_cast<size_t>(n));
    read_bytes(is, tmp.data(), 8 * static_cast<size_t>(n), "snapshot data");
    for (size_t i = 0; i < tmp.size(); ++i) data[i] = static_cast<T>(tmp[i]);
  } else {
    std::vector<float> tmp(static_cast<size_t>(n));
    read_bytes(is, tmp.data(), 4 * static_cast<size_t>(n), "snapshot data");
    for (size_t i = 0; i < tmp.size(); ++i) data[i] = static_cast<T>(tmp[i]);
  }
  return Tensor<T>::from(std::move(shape), std::move(data));
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
  check(!model.nets.empty(), "checkpoint: empty model");
  json header;
  header["format"] = "pstc";
  header["dtype"] = dtype_tag<T>() == 0 ? "f64" : "f32";
  header["bilinear"] = "align_corners";
  header["mode"] = to_string(model.mode);
  header["standalone_level"] = model.standalone_level;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(hierarchy_hash(model.hierarchy)));
  header["hierarchy_hash"] = hash_hex;
  header["hierarchy_text"] = hierarchy_to_text(model.hierarchy);
  header["encoder"] = encoder_to_json(model.nets[0].encoder_config());
  header["heads"] = heads_to_json(model.nets[0].head_config());

  std::ofstream os(path, std::ios::binary);
  check(os.good(), "checkpoint: cannot open for writing: " + path);
  write_bytes(os, "PSTC", 4);
  write_u32(os, kCheckpointVersion);
  const std::string hs = header.dump();
  write_u32(os, static_cast<uint32_t>(hs.size()));
  write_bytes(os, hs.data(), hs.size());

  Model<T>& m = const_cast<Model<T>&>(model);
  auto named = m.named_parameters();
  write_u32(os, static_cast<uint32_t>(named.size()));
  for (auto& [name, tensor] : named) {
    write_u16(os, static_cast<uint16_t>(name.size()));
    write_bytes(os, name.data(), name.size());
    write_tensor_snapshot(os, tensor);
  }
  check(os.good(), "checkpoint: write failed: " + path);
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "checkpoint: cannot open: " + path);
  char magic[4];
  read_bytes(is, magic, 4, "checkpoint magic");
  check(std::memcmp(magic, "PSTC", 4) == 0, "checkpoint: bad magic (expected PSTC)");
  const uint32_t version = read_u32(is, "checkpoint version");
  check(version == kCheckpointVersion,
        cat("checkpoint: unsupported version ", version));
  const uint32_t hlen = read_u32(is, "checkpoint header length");
  std::string hs(hlen, '\0');
  read_bytes(is, hs.data(), hlen, "checkpoint header");
  json header = json::parse(hs);

  const LabelHierarchy hier =
      hierarchy_from_text(header.at("hierarchy_text").get<std::string>());
  const ArchMode mode = arch_mode_from_string(header.at("mode").get<std::string>());
  const EncoderConfig enc = encoder_from_json(header.at("encoder"));
  const StackedHeadConfig heads = heads_from_json(header.at("heads"));
  const int standalone_level = header.at("standalone_level").get<int>();

  Model<T> model = build_model<T>(enc, heads, mode, hier, 0, standalone_level);

  std::map<std::string, Tensor<T>> params;
  for (auto& [name, tensor] : model.named_parameters()) params.emplace(name, tensor);

  const uint32_t count = read_u32(is, "checkpoint tensor count");
  check(count == params.size(),
        cat("checkpoint: has ", count, " tensors, model expects ", params.size()));
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t nlen = read_u16(is, "checkpoint name length");
    std::string name(nlen, '\0');
    read_bytes(is, name.data(), nlen, "checkpoint name");
    auto it = params.find(name);
    check(it != params.end(), "checkpoint: unexpected tensor name: " + name);
    Tensor<T> loaded = read_tensor_snapshot<T>(is);
    check(loaded.shape() == it->second.shape(),
          cat("checkpoint: shape mismatch for ", name, ": file ",
              shape_str(loaded.shape()), " vs model ", shape_str(it->second.shape())));
    it->second.data() = loaded.data();
  }
  return model;
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct Crc32Stream {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::string buf;
  void add(const void* p, size_t n) {
    crc = crc32(crc, static_cast<const Bytef*>(p), static_cast<uInt>(n));
    buf.append(static_cast<const char*>(p), n);
  }
};

void png_chunk(std::ostream& os, const char type[4], const std::string& payload) {
  write_u8(os, static_cast<uint8_t>(payload.size() >> 24));
  write_u8(os, static_cast<uint8_t>(payload.size() >> 16));
  write_u8(os, static_cast<uint8_t>(payload.size() >> 8));
  write_u8(os, static_cast<uint8_t>(payload.size()));
  Crc32Stream c;
  c.add(type, 4);
  c.add(payload.data(), payload.size());
  write_bytes(os, c.buf.data(), c.buf.size());
  write_u8(os, static_cast<uint8_t>(c.crc >> 24));
  write_u8(os, static_cast<uint8_t>(c.crc >> 16));
  write_u8(os, static_cast<uint8_t>(c.crc >> 8));
  write_u8(os, static_cast<uint8_t>(c.crc));
}

void write_png(const std::string& path, int w, int h, int channels,
               const std::vector<uint8_t>& pixels) {
  check(w > 0 && h > 0, "png: empty image");
  check(pixels.size() == static_cast<size_t>(w) * h * channels,
        "png: pixel buffer size mismatch");
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "png: cannot open for writing: " + path);
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  write_bytes(os, sig, 8);

  std::string ihdr;
  auto be32 = [&](uint32_t v) {
    ihdr.push_back(static_cast<char>(v >> 24));
    ihdr.push_back(static_cast<char>(v >> 16));
    ihdr.push_back(static_cast<char>(v >> 8));
    ihdr.push_back(static_cast<char>(v));
  };
  be32(static_cast<uint32_t>(w));
  be32(static_cast<uint32_t>(h));
  ihdr.push_back(8);                                 // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);             // color type
  ihdr.push_back(0);                                 // compression
  ihdr.push_back(0);                                 // filter
  ihdr.push_back(0);                                 // interlace
  png_chunk(os, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<uint8_t> raw(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * channels));
  for (int y = 0; y < h; ++y) {
    uint8_t* row = raw.data() + static_cast<size_t>(y) * (1 + static_cast<size_t>(w) * channels);
    row[0] = 0;
    std::memcpy(row + 1, pixels.data() + static_cast<size_t>(y) * w * channels,
                static_cast<size_t>(w) * channels);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(bound);
  check(compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK,
        "png: deflate failed");
  png_chunk(os, "IDAT", std::string(reinterpret_cast<char*>(comp.data()), bound));
  png_chunk(os, "IEND", "");
  check(os.good(), "png: write failed: " + path);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png_gray(const std::string& path, int w, int h,
                    const std::vector<uint8_t>& pixels) {
  write_png(path, w, h, 1, pixels);
}

void write_png_rgb(const std::string& path, int w, int h,
                   const std::vector<uint8_t>& pixels) {
  write_png(path, w, h, 3, pixels);
}

PngImage read_png(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "png: cannot open: " + path);
  uint8_t sig[8];
  read_bytes(is, sig, 8, "png signature");
  static const uint8_t expect[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  check(std::memcmp(sig, expect, 8) == 0, "png: bad signature: " + path);

  PngImage img;
  int bit_depth = 0, color_type = -1;
  std::string idat;
  for (;;) {
    uint8_t lenb[4];
    read_bytes(is, lenb, 4, "png chunk length");
    const uint32_t len = (static_cast<uint32_t>(lenb[0]) << 24) |
                         (static_cast<uint32_t>(lenb[1]) << 16) |
                         (static_cast<uint32_t>(lenb[2]) << 8) | lenb[3];
    char type[5] = {0};
    read_bytes(is, type, 4, "png chunk type");
    std::string payload(len, '\0');
    if (len > 0) read_bytes(is, payload.data(), len, "png chunk payload");
    uint8_t crcb[4];
    read_bytes(is, crcb, 4, "png chunk crc");

    if (std::strcmp(type, "IHDR") == 0) {
      check(len == 13, "png: bad IHDR");
      const uint8_t* q = reinterpret_cast<const uint8_t*>(payload.data());
      img.w = static_cast<int>((q[0] << 24) | (q[1] << 16) | (q[2] << 8) | q[3]);
      img.h = static_cast<int>((q[4] << 24) | (q[5] << 16) | (q[6] << 8) | q[7]);
      bit_depth = q[8];
      color_type = q[9];
      check(q[12] == 0, "png: interlaced images are not supported");
      check(bit_depth == 8, "png: only 8-bit images are supported");
      check(color_type == 0 || color_type == 2,
            cat("png: unsupported color type ", color_type,
                " (expected 8-bit gray or RGB): ", path));
      img.channels = color_type == 0 ? 1 : 3;
    } else if (std::strcmp(type, "IDAT") == 0) {
      idat += payload;
    } else if (std::strcmp(type, "IEND") == 0) {
      break;
    }
    // ancillary chunks are skipped
  }
  check(img.w > 0 && img.h > 0, "png: missing IHDR");

  const size_t stride = static_cast<size_t>(img.w) * img.channels;
  std::vector<uint8_t> raw(static_cast<size_t>(img.h) * (stride + 1));
  uLongf rawlen = static_cast<uLongf>(raw.size());
  check(uncompress(raw.data(), &rawlen, reinterpret_cast<const Bytef*>(idat.data()),
                   static_cast<uLong>(idat.size())) == Z_OK &&
            rawlen == raw.size(),
        "png: inflate failed: " + path);

  img.pixels.resize(static_cast<size_t>(img.h) * stride);
  const int bpp = img.channels;
  for (int y = 0; y < img.h; ++y) {
    const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1);
    const uint8_t filter = src[0];
    ++src;
    uint8_t* dst = img.pixels.data() + static_cast<size_t>(y) * stride;
    const uint8_t* prev = y > 0 ? dst - stride : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
      const int b = prev ? prev[x] : 0;
      const int c = (prev && x >= static_cast<size_t>(bpp)) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: fail(cat("png: unknown filter ", static_cast<int>(filter)));
      }
      dst[x] = static_cast<uint8_t>(v & 0xFF);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// SVG

void write_svg_bar_chart(const std::string& path, const std::string& title,
                         const std::vector<std::string>& group_labels,
                         const std::vector<std::string>& series_labels,
                         const std::vector<std::vector<double>>& values) {
  check(values.size() == series_labels.size(), "svg: series/value count mismatch");
  for (const auto& row : values)
    check(row.size() == group_labels.size(), "svg: group/value count mismatch");

  static const char* kColors[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f",
                                  "#956cb4", "#8c613c"};
  const int width = 640, height = 380;
  const int left = 56, bottom = 320, top = 48;
  const double plot_w = width - left - 24, plot_h = bottom - top;
  const size_t groups = group_labels.size(), series = series_labels.size();
  const double group_w = plot_w / static_cast<double>(groups);
  const double bar_w = group_w * 0.8 / static_cast<double>(series);

  std::ofstream os(path);
  check(os.good(), "svg: cannot open for writing: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double v = tick / 5.0;
    const double y = bottom - v * plot_h;
    os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 24
       << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << format_double(v) << "</text>\n";
  }
  for (size_t g = 0; g < groups; ++g) {
    const double gx = left + group_w * (static_cast<double>(g) + 0.1);
    for (size_t s = 0; s < series; ++s) {
      const double v = std::max(0.0, std::min(1.0, values[s][g]));
      const double bh = v * plot_h;
      os << "<rect x=\"" << gx + bar_w * static_cast<double>(s) << "\" y=\""
         << bottom - bh << "\" width=\"" << bar_w * 0.92 << "\" height=\"" << bh
         << "\" fill=\"" << kColors[s % 6] << "\"/>\n";
    }
    os << "<text x=\"" << left + group_w * (static_cast<double>(g) + 0.5) << "\" y=\""
       << bottom + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"12\">" << group_labels[g] << "</text>\n";
  }
  for (size_t s = 0; s < series; ++s) {
    const double y = bottom + 38 + 16 * static_cast<double>(s);
    os << "<rect x=\"" << left << "\" y=\"" << y - 10
       << "\" width=\"12\" height=\"12\" fill=\"" << kColors[s % 6] << "\"/>\n";
    os << "<text x=\"" << left + 18 << "\" y=\"" << y
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << series_labels[s]
       << "</text>\n";
  }
  os << "</svg>\n";
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

#define PSTK_INSTANTIATE(T)                                                     \
  template void write_tensor_snapshot<T>(std::ostream&, const Tensor<T>&);      \
  template Tensor<T> read_tensor_snapshot<T>(std::istream&);                    \
  template void save_checkpoint<T>(const Model<T>&, const std::string&);        \
  template Model<T> load_checkpoint<T>(const std::string&);

PSTK_INSTANTIATE(float)
PSTK_INSTANTIATE(double)
#undef PSTK_INSTANTIATE

}  // namespace pstk
