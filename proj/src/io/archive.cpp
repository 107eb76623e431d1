#include "deepinv/io/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "deepinv/core/random.hpp"

namespace deepinv {

namespace {

constexpr std::uint8_t kPrecisionF64 = 8;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  void need(std::size_t n) const {
    if (pos_ + n > end_) throw IntegrityError("archive truncated");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Archive::set_meta(const std::string& key, std::string value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta.emplace_back(key, std::move(value));
}

const std::string& Archive::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw IntegrityError("archive has no metadata key '" + key + "'");
}

bool Archive::has_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return true;
  }
  return false;
}

const Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IntegrityError("archive has no tensor '" + name + "'");
}

std::vector<std::uint8_t> encode_archive(const Archive& archive) {
  Writer w;
  for (int i = 0; i < 8; ++i) w.u8(static_cast<std::uint8_t>(Archive::kMagic[i]));
  w.u32(Archive::kVersion);
  w.str(archive.kind);
  w.u8(kPrecisionF64);
  w.str(std::string(RandomSource::kAlgorithm));
  w.u32(static_cast<std::uint32_t>(archive.meta.size()));
  for (const auto& [k, v] : archive.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& [name, t] : archive.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u64(e);
  }
  for (const auto& [name, t] : archive.tensors) {
    for (double v : t.data()) w.f64(v);
  }
  w.u64(fnv1a64(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

Archive decode_archive(const std::vector<std::uint8_t>& bytes, const std::string& expected_kind) {
  if (bytes.size() < 8 + 4 + 8) throw IntegrityError("archive too short");
  if (std::memcmp(bytes.data(), Archive::kMagic, 8) != 0) throw IntegrityError("not a deepinv archive (bad magic)");
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, bytes.size());
  for (int i = 0; i < 8; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != Archive::kVersion) {
    throw VersionError("archive format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(Archive::kVersion) + ")");
  }
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body)) throw IntegrityError("archive checksum mismatch");

  Reader in(bytes, body);
  for (int i = 0; i < 12; ++i) in.u8();
  Archive a;
  a.kind = in.str();
  if (!expected_kind.empty() && a.kind != expected_kind) {
    throw IntegrityError("archive holds '" + a.kind + "', expected '" + expected_kind + "'");
  }
  if (in.u8() != kPrecisionF64) throw IntegrityError("archive precision is not binary64");
  if (in.str() != RandomSource::kAlgorithm) throw IntegrityError("archive was produced with a different PRNG");
  const std::uint32_t n_meta = in.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = in.str();
    std::string v = in.str();
    a.meta.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t n_tensors = in.u32();
  std::vector<std::pair<std::string, Tensor::Shape>> table;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = in.str();
    const std::uint32_t rank = in.u32();
    Tensor::Shape shape(rank);
    for (auto& e : shape) e = in.u64();
    table.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : table) {
    const std::size_t n = shape_numel(shape);
    in.need(n * 8);
    std::vector<Real> data(n);
    for (auto& v : data) v = in.f64();
    a.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (in.pos() != body) throw IntegrityError("archive has trailing bytes");
  return a;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  const auto bytes = encode_archive(archive);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Archive read_archive(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes, expected_kind);
}

}  // namespace deepinv
