#pragma once

// Little-endian binary streams shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gtno/errors.hpp"

namespace gtno::detail {

inline constexpr char kMagic[4] = {'H', 'M', 'L', 'T'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint8_t kKindDataset = 1;
inline constexpr std::uint8_t kKindCheckpoint = 2;

static_assert(std::endian::native == std::endian::little, "big-endian hosts need byte swapping");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class T>
  void put(T v) {
    bytes(&v, sizeof(T));
  }
  void f64s(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
  void str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw FormatError("string too long for format");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void header(std::uint8_t kind) {
    bytes(kMagic, 4);
    put<std::uint16_t>(kFormatVersion);
    put<std::uint8_t>(kind);
  }
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  static Reader open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(data), path);
  }
  Reader(std::vector<char> data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) throw TruncatedError("'" + name_ + "' is truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    if (n > (data_.size() - pos_) / sizeof(double)) throw TruncatedError("'" + name_ + "' is truncated");
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  std::string str16() {
    const auto n = get<std::uint16_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void header(std::uint8_t expected_kind, const char* what) {
    char magic[4];
    if (data_.size() < 4) throw TruncatedError("'" + name_ + "' is truncated");
    bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw MagicError("'" + name_ + "' has a bad magic number");
    const auto version = get<std::uint16_t>();
    if (version != kFormatVersion) {
      throw VersionError("'" + name_ + "' has unsupported format version " + std::to_string(version));
    }
    const auto kind = get<std::uint8_t>();
    if (kind != expected_kind) throw FormatError("'" + name_ + "' is not a " + what + " file");
  }
  bool at_end() const { return pos_ == data_.size(); }
  void expect_end() const {
    if (!at_end()) throw FormatError("'" + name_ + "' has trailing bytes");
  }

 private:
  std::vector<char> data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace gtno::detail
