#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace panelnet {

// PNCK container: "PNCK", u32 version, u32 entry count, then per entry
// u32 name length, name bytes, u8 dtype, u32 rank, u32 dims[rank], payload.
// Little-endian throughout; entries keep insertion order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2, kU64 = 3 };

std::size_t dtype_size(DType t);

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t count() const;
};

class Checkpoint {
 public:
  void add_f32(const std::string& name, std::vector<std::uint32_t> dims, std::span<const float> v);
  void add_f64(const std::string& name, std::vector<std::uint32_t> dims, std::span<const double> v);
  void add_u64(const std::string& name, std::uint64_t v);
  void add_f64(const std::string& name, double v);
  void add_text(const std::string& name, const std::string& text);

  bool has(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;
  // Values widened/narrowed to T; throws VersionError on a missing name or wrong dtype.
  template <typename T>
  std::vector<T> values(const std::string& name) const;
  std::uint64_t u64(const std::string& name) const;
  double f64(const std::string& name) const;
  std::string text(const std::string& name) const;

  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  std::vector<std::uint8_t> encode() const;
  // DataError on truncation or a bad magic; VersionError on another version.
  static Checkpoint decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  void add(CheckpointEntry e);
  std::vector<CheckpointEntry> entries_;
};

}  // namespace panelnet
