#pragma once

// PSTB tensor bundle: a flat, ordered name -> f32 tensor container.
//
// Layout (all integers little-endian):
//
//   "PSTB"            4 bytes magic
//   version           u32 (currently 1)
//   count             u32
//   count x entry:
//     name_len        u32, followed by name_len bytes of UTF-8
//     dtype           u32 (0 = f32)
//     rank            u32
//     extents         rank x u64
//     payload         product(extents) x 4 bytes, f32 little-endian
//
// Payloads are copied byte-for-byte, so NaN bit patterns survive a round trip.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pseg/tensor.hpp"

namespace pseg {

inline constexpr char kBundleMagic[4] = {'P', 'S', 'T', 'B'};
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 0;

class TensorBundle {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  /// Appends a tensor; throws FormatError on a duplicate name.
  void add(std::string name, Tensor tensor);
  /// Inserts or replaces, keeping the original position on replace.
  void set(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const;
  /// Throws LookupError when absent.
  const Tensor& get(const std::string& name) const;
  void erase(const std::string& name);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::vector<std::uint8_t> serialize() const;
  static TensorBundle deserialize(std::span<const std::uint8_t> bytes);

  void write_file(const std::filesystem::path& path) const;
  static TensorBundle read_file(const std::filesystem::path& path);

  /// FNV-1a over the serialized bytes; equal checksums <=> equal bundles (w.h.p.).
  std::uint64_t checksum() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace pseg
