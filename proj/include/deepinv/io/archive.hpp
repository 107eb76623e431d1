#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deepinv/core/tensor.hpp"

namespace deepinv {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored file uses a format version this build does not understand.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

/// Checksum mismatch, truncation or malformed structure.
class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

/// In-memory form of the binary container shared by checkpoints, datasets,
/// trajectories and latent files.
///
/// Layout, all integers little-endian:
///   "DINVFILE"                       8-byte magic
///   u32 version                      currently 1
///   str kind                         u32 length + bytes
///   u8  precision                    8 = IEEE-754 binary64
///   str prng                         random algorithm tag
///   u32 n_meta,    n_meta x (str key, str value)
///   u32 n_tensors, n_tensors x (str name, u32 rank, rank x u64 extent)
///   payloads                         each tensor's elements as f64, in table order
///   u64 checksum                     FNV-1a 64 over every preceding byte
struct Archive {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr char kMagic[9] = "DINVFILE";

  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void set_meta(const std::string& key, std::string value);
  const std::string& meta_value(const std::string& key) const;
  bool has_meta(const std::string& key) const;
  void add_tensor(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor& tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_archive(const Archive& archive);
/// Throws IntegrityError / VersionError on malformed input. `expected_kind`
/// is checked when non-empty.
Archive decode_archive(const std::vector<std::uint8_t>& bytes, const std::string& expected_kind = {});

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path, const std::string& expected_kind = {});

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace deepinv
