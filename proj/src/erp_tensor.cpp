#include "panelnet/erp_tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "panelnet/errors.hpp"

namespace panelnet {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
Raster<T>::Raster(int channels, int height, int width, T fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw ShapeError("raster dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

template <typename T>
Raster<T>::Raster(int channels, int height, int width, std::vector<T> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw ShapeError("raster dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw ShapeError("raster payload size " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(channels) + "x" +
                     std::to_string(height) + "x" + std::to_string(width));
  }
}

template <typename T>
const T& Raster<T>::wrapped(int c, int r, long col) const {
  long w = width_;
  long m = ((col % w) + w) % w;
  return at(c, r, static_cast<int>(m));
}

template <typename T>
Raster<T> roll_columns(const Raster<T>& in, long shift) {
  Raster<T> out(in.channels(), in.height(), in.width());
  const long w = in.width();
  const long s = ((shift % w) + w) % w;
  for (int c = 0; c < in.channels(); ++c) {
    for (int r = 0; r < in.height(); ++r) {
      for (long col = 0; col < w; ++col) {
        out.at(c, r, static_cast<int>((col + s) % w)) = in.at(c, r, static_cast<int>(col));
      }
    }
  }
  return out;
}

template <typename T>
Raster<T> flip_columns(const Raster<T>& in) {
  Raster<T> out(in.channels(), in.height(), in.width());
  const int w = in.width();
  for (int c = 0; c < in.channels(); ++c) {
    for (int r = 0; r < in.height(); ++r) {
      for (int col = 0; col < w; ++col) {
        out.at(c, r, w - 1 - col) = in.at(c, r, col);
      }
    }
  }
  return out;
}

template class Raster<float>;
template class Raster<std::uint8_t>;
template Raster<float> roll_columns(const Raster<float>&, long);
template Raster<std::uint8_t> roll_columns(const Raster<std::uint8_t>&, long);
template Raster<float> flip_columns(const Raster<float>&);
template Raster<std::uint8_t> flip_columns(const Raster<std::uint8_t>&);

namespace {

constexpr char kMagic[4] = {'E', 'R', 'P', 'T'};
constexpr std::size_t kHeaderSize = 4 + 4 + 1 + 4 + 4 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

template <typename T>
std::vector<std::uint8_t> encode(const Raster<T>& t, std::uint8_t dtype) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + t.size() * sizeof(T));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kErptVersion);
  out.push_back(dtype);
  put_u32(out, static_cast<std::uint32_t>(t.channels()));
  put_u32(out, static_cast<std::uint32_t>(t.height()));
  put_u32(out, static_cast<std::uint32_t>(t.width()));
  const auto* raw = reinterpret_cast<const std::uint8_t*>(t.data().data());
  out.insert(out.end(), raw, raw + t.size() * sizeof(T));
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_erpt(const ErpTensor& t) { return encode(t, 0); }
std::vector<std::uint8_t> encode_erpt(const LabelMap& t) { return encode(t, 1); }

std::variant<ErpTensor, LabelMap> decode_erpt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not an ERPT container");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kErptVersion) {
    throw DataError("unsupported ERPT version " + std::to_string(version));
  }
  const std::uint8_t dtype = bytes[8];
  const std::uint32_t c = get_u32(bytes, 9);
  const std::uint32_t h = get_u32(bytes, 13);
  const std::uint32_t w = get_u32(bytes, 17);
  if (c == 0 || h == 0 || w == 0) throw DataError("ERPT with zero dimension");
  const std::size_t count = static_cast<std::size_t>(c) * h * w;
  const std::size_t elem = dtype == 0 ? 4 : dtype == 1 ? 1 : 0;
  if (elem == 0) throw DataError("unknown ERPT dtype " + std::to_string(dtype));
  if (bytes.size() != kHeaderSize + count * elem) {
    throw DataError("ERPT payload length mismatch");
  }
  const auto* payload = bytes.data() + kHeaderSize;
  if (dtype == 0) {
    std::vector<float> data(count);
    std::memcpy(data.data(), payload, count * 4);
    return ErpTensor(int(c), int(h), int(w), std::move(data));
  }
  std::vector<std::uint8_t> data(payload, payload + count);
  return LabelMap(int(c), int(h), int(w), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

void write_erpt(const std::filesystem::path& path, const ErpTensor& t) {
  write_file_bytes(path, encode_erpt(t));
}

void write_erpt(const std::filesystem::path& path, const LabelMap& t) {
  write_file_bytes(path, encode_erpt(t));
}

std::variant<ErpTensor, LabelMap> read_erpt(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_erpt(bytes);
}

ErpTensor read_erpt_float(const std::filesystem::path& path) {
  auto v = read_erpt(path);
  if (auto* f = std::get_if<ErpTensor>(&v)) return std::move(*f);
  const auto& l = std::get<LabelMap>(v);
  std::vector<float> data(l.data().begin(), l.data().end());
  return ErpTensor(l.channels(), l.height(), l.width(), std::move(data));
}

LabelMap read_erpt_labels(const std::filesystem::path& path) {
  auto v = read_erpt(path);
  if (auto* l = std::get_if<LabelMap>(&v)) return std::move(*l);
  throw DataError(path.string() + ": expected a u8 label raster");
}

}  // namespace panelnet
