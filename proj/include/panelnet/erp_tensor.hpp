#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace panelnet {

// Channels x height x width raster, row-major, with circular column semantics.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int channels, int height, int width, T fill = T{});
  Raster(int channels, int height, int width, std::vector<T> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int c, int r, int col) {
    return data_[(static_cast<std::size_t>(c) * height_ + r) * width_ + col];
  }
  const T& at(int c, int r, int col) const {
    return data_[(static_cast<std::size_t>(c) * height_ + r) * width_ + col];
  }
  // Column index taken modulo width.
  const T& wrapped(int c, int r, long col) const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using ErpTensor = Raster<float>;
using LabelMap = Raster<std::uint8_t>;

// numpy.roll semantics along columns: out[(c + shift) mod W] = in[c].
template <typename T>
Raster<T> roll_columns(const Raster<T>& in, long shift);

template <typename T>
Raster<T> flip_columns(const Raster<T>& in);

// ERPT container: "ERPT", u32 version = 1, u8 dtype (0 = f32, 1 = u8),
// u32 C, u32 H, u32 W, then the row-major little-endian payload.
inline constexpr std::uint32_t kErptVersion = 1;

std::vector<std::uint8_t> encode_erpt(const ErpTensor& t);
std::vector<std::uint8_t> encode_erpt(const LabelMap& t);
std::variant<ErpTensor, LabelMap> decode_erpt(std::span<const std::uint8_t> bytes);

void write_erpt(const std::filesystem::path& path, const ErpTensor& t);
void write_erpt(const std::filesystem::path& path, const LabelMap& t);
std::variant<ErpTensor, LabelMap> read_erpt(const std::filesystem::path& path);
// Reads either dtype; u8 payloads are widened to float.
ErpTensor read_erpt_float(const std::filesystem::path& path);
LabelMap read_erpt_labels(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace panelnet
