#include "panelnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "panelnet/erp_tensor.hpp"
#include "panelnet/errors.hpp"

namespace panelnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
    case DType::kU64: return 8;
  }
  return 0;
}

std::size_t CheckpointEntry::count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

template <typename T>
std::vector<std::uint8_t> bytes_of(std::span<const T> v) {
  std::vector<std::uint8_t> out(v.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), v.data(), out.size());
  return out;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > b_.size() - pos_) throw DataError("checkpoint: truncated at byte " + std::to_string(pos_));
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add(CheckpointEntry e) {
  if (has(e.name)) throw ConfigError("checkpoint: duplicate entry '" + e.name + "'");
  if (e.payload.size() != e.count() * dtype_size(e.dtype)) {
    throw ShapeError("checkpoint: entry '" + e.name + "' payload does not match its dims");
  }
  entries_.push_back(std::move(e));
}

void Checkpoint::add_f32(const std::string& name, std::vector<std::uint32_t> dims, std::span<const float> v) {
  add({name, DType::kF32, std::move(dims), bytes_of(v)});
}

void Checkpoint::add_f64(const std::string& name, std::vector<std::uint32_t> dims, std::span<const double> v) {
  add({name, DType::kF64, std::move(dims), bytes_of(v)});
}

void Checkpoint::add_u64(const std::string& name, std::uint64_t v) {
  add({name, DType::kU64, {}, bytes_of(std::span<const std::uint64_t>(&v, 1))});
}

void Checkpoint::add_f64(const std::string& name, double v) {
  add({name, DType::kF64, {}, bytes_of(std::span<const double>(&v, 1))});
}

void Checkpoint::add_text(const std::string& name, const std::string& text) {
  add({name, DType::kU8, {static_cast<std::uint32_t>(text.size())},
       std::vector<std::uint8_t>(text.begin(), text.end())});
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw VersionError("checkpoint: no entry '" + name + "'");
}

template <typename T>
std::vector<T> Checkpoint::values(const std::string& name) const {
  const auto& e = at(name);
  const std::size_t n = e.count();
  std::vector<T> out(n);
  if (e.dtype == DType::kF32) {
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), e.payload.data(), e.payload.size());
    std::copy(tmp.begin(), tmp.end(), out.begin());
  } else if (e.dtype == DType::kF64) {
    std::vector<double> tmp(n);
    std::memcpy(tmp.data(), e.payload.data(), e.payload.size());
    std::transform(tmp.begin(), tmp.end(), out.begin(), [](double v) { return static_cast<T>(v); });
  } else {
    throw VersionError("checkpoint: entry '" + name + "' is not floating point");
  }
  return out;
}

std::uint64_t Checkpoint::u64(const std::string& name) const {
  const auto& e = at(name);
  if (e.dtype != DType::kU64 || e.count() != 1) throw VersionError("checkpoint: '" + name + "' is not a u64 scalar");
  std::uint64_t v;
  std::memcpy(&v, e.payload.data(), 8);
  return v;
}

double Checkpoint::f64(const std::string& name) const {
  const auto& e = at(name);
  if (e.dtype != DType::kF64 || e.count() != 1) throw VersionError("checkpoint: '" + name + "' is not an f64 scalar");
  double v;
  std::memcpy(&v, e.payload.data(), 8);
  return v;
}

std::string Checkpoint::text(const std::string& name) const {
  const auto& e = at(name);
  if (e.dtype != DType::kU8) throw VersionError("checkpoint: '" + name + "' is not text");
  return std::string(e.payload.begin(), e.payload.end());
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  std::vector<std::uint8_t> out{'P', 'N', 'C', 'K'};
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put(out, static_cast<std::uint8_t>(e.dtype));
    put(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto* magic = r.take(4);
  if (std::memcmp(magic, "PNCK", 4) != 0) throw DataError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto count = r.get<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = r.get<std::uint32_t>();
    const auto* name = r.take(len);
    e.name.assign(reinterpret_cast<const char*>(name), len);
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 3) throw DataError("checkpoint: entry '" + e.name + "' has unknown dtype " + std::to_string(dtype));
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DataError("checkpoint: entry '" + e.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) e.dims.push_back(r.get<std::uint32_t>());
    const std::size_t n = e.count() * dtype_size(e.dtype);
    const auto* p = r.take(n);
    e.payload.assign(p, p + n);
    ck.add(std::move(e));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes after the last entry");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_bytes(path, encode()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return decode(read_file_bytes(path)); }

template std::vector<float> Checkpoint::values<float>(const std::string&) const;
template std::vector<double> Checkpoint::values<double>(const std::string&) const;

}  // namespace panelnet
