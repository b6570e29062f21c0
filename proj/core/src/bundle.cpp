#include "pseg/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pseg/errors.hpp"

namespace pseg {

namespace {

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* p = reinterpret_cast<std::uint8_t*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    v = byteswap_if_big(v);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint64_t offset() const noexcept { return pos_; }

  template <typename T>
  T get(const std::string& context) {
    need(sizeof(T), context);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }
  std::span<const std::uint8_t> take(std::uint64_t n, const std::string& context) {
    need(n, context);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n, const std::string& context) const {
    if (n > in_.size() - pos_) throw FormatError("truncated bundle", context, pos_);
  }

  std::span<const std::uint8_t> in_;
  std::uint64_t pos_ = 0;
};

}  // namespace

void TensorBundle::add(std::string name, Tensor tensor) {
  if (tensor.empty()) throw ArgumentError("cannot store a null tensor as '" + name + "'");
  if (index_.contains(name)) throw FormatError("duplicate tensor name", name, 0);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor)});
}

void TensorBundle::set(const std::string& name, Tensor tensor) {
  if (auto it = index_.find(name); it != index_.end()) {
    if (tensor.empty()) throw ArgumentError("cannot store a null tensor as '" + name + "'");
    entries_[it->second].tensor = std::move(tensor);
  } else {
    add(name, std::move(tensor));
  }
}

bool TensorBundle::contains(const std::string& name) const { return index_.contains(name); }

const Tensor& TensorBundle::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError(name);
  return entries_[it->second].tensor;
}

void TensorBundle::erase(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) return;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].name, i);
}

std::vector<std::uint8_t> TensorBundle::serialize() const {
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.put_bytes(kBundleMagic, 4);
  w.put<std::uint32_t>(kBundleVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint32_t>(kDtypeF32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.dims()) w.put<std::uint64_t>(d);
    if constexpr (std::endian::native == std::endian::little) {
      w.put_bytes(e.tensor.data().data(), e.tensor.size() * sizeof(float));
    } else {
      for (float v : e.tensor.data()) w.put(std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

TensorBundle TensorBundle::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "<header>");
  if (std::memcmp(magic.data(), kBundleMagic, 4) != 0) {
    throw FormatError("bad magic, expected PSTB", "<header>", 0);
  }
  const auto version = r.get<std::uint32_t>("<header>");
  if (version != kBundleVersion) {
    throw FormatError("unsupported bundle version " + std::to_string(version), "<header>", 4);
  }
  const auto count = r.get<std::uint32_t>("<header>");

  TensorBundle b;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t entry_offset = r.offset();
    const std::string where = "<entry " + std::to_string(i) + ">";
    const auto name_len = r.get<std::uint32_t>(where);
    auto name_bytes = r.take(name_len, where);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto dtype = r.get<std::uint32_t>(name);
    if (dtype != kDtypeF32) {
      throw FormatError("unsupported dtype " + std::to_string(dtype), name, r.offset() - 4);
    }
    const auto rank = r.get<std::uint32_t>(name);
    if (rank == 0) throw FormatError("rank-0 tensor", name, r.offset() - 4);
    Shape dims(rank);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      const auto ext = r.get<std::uint64_t>(name);
      if (ext == 0) throw FormatError("zero extent", name, r.offset() - 8);
      if (numel > (std::uint64_t{1} << 40) / ext) {
        throw FormatError("tensor too large", name, r.offset() - 8);
      }
      numel *= ext;
      d = static_cast<std::size_t>(ext);
    }
    auto payload = r.take(numel * sizeof(float), name);
    std::vector<float> values(numel);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(values.data(), payload.data(), payload.size());
    } else {
      for (std::uint64_t k = 0; k < numel; ++k) {
        std::uint32_t u;
        std::memcpy(&u, payload.data() + 4 * k, 4);
        values[k] = std::bit_cast<float>(byteswap_if_big(u));
      }
    }
    if (b.contains(name)) throw FormatError("duplicate tensor name", name, entry_offset);
    b.add(std::move(name), Tensor(std::move(dims), std::move(values)));
  }
  if (r.offset() != bytes.size()) {
    throw FormatError("trailing bytes after last tensor", "<trailer>", r.offset());
  }
  return b;
}

void TensorBundle::write_file(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

TensorBundle TensorBundle::read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open bundle: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t TensorBundle::checksum() const { return fnv1a64(serialize()); }

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pseg
