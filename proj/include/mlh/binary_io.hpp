#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mlh/error.hpp"
#include "mlh/random.hpp"

namespace mlh {

// Little-endian buffer writer for the MLHC/MLHF/MLHB/MLHM containers.
class ByteWriter {
 public:
  void write_magic(const char magic[4]) {
    buf_.insert(buf_.end(), magic, magic + 4);
  }
  void write_u8(std::uint8_t v) { buf_.push_back(v); }
  void write_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void write_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void write_i8(std::int8_t v) { buf_.push_back(static_cast<std::uint8_t>(v)); }
  void write_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_u64(bits);
  }
  void write_bytes(const std::uint8_t* p, std::size_t n) {
    buf_.insert(buf_.end(), p, p + n);
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Reader with byte-offset error reporting.
class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> buf, std::string origin)
      : buf_(std::move(buf)), origin_(std::move(origin)) {}

  void expect_magic(const char magic[4], const char* format_name) {
    if (buf_.size() < 4 || std::memcmp(buf_.data(), magic, 4) != 0) {
      throw Error("bad_magic", "unrecognized format in " + origin_ +
                                   " (expected " + format_name + ")");
    }
    pos_ = 4;
  }

  std::uint8_t read_u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t read_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t read_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int8_t read_i8() { return static_cast<std::int8_t>(read_u8()); }
  double read_f64() {
    std::uint64_t bits = read_u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  void read_bytes(std::uint8_t* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void expect_exhausted() {
    if (pos_ != buf_.size()) {
      throw Error("trailing_bytes", origin_ + " has " +
                                        std::to_string(buf_.size() - pos_) +
                                        " unexpected bytes after offset " +
                                        std::to_string(pos_));
    }
  }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw Error("truncated", origin_ + " truncated at offset " +
                                   std::to_string(buf_.size()) + " (needed " +
                                   std::to_string(pos_ + n) + " bytes)");
    }
  }

  std::vector<std::uint8_t> buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file_not_found", "cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return buf;
}

// Writes via a temp file in the same directory plus rename, so readers never
// observe a partial artifact.
inline void atomic_write_file(const std::string& path,
                              const std::vector<std::uint8_t>& bytes) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(mix64(reinterpret_cast<std::uintptr_t>(&bytes) ^
                                       std::uint64_t(bytes.size())));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("io_error", "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("io_error", "rename to " + path + " failed: " + ec.message());
  }
}

inline void atomic_write_text(const std::string& path, const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  atomic_write_file(path, bytes);
}

}  // namespace mlh
