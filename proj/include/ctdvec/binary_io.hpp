// ctdvec/binary_io.hpp
//
// Copyright 2026  The ctdvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian byte encoding shared by every on-disk format (features,
// models, vector archives, backends, WAV).  Files are read whole into memory
// and decoded with bounds checks, so a short file is a kTruncated error and
// never an out-of-bounds read.

#ifndef CTDVEC_BINARY_IO_HPP
#define CTDVEC_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctdvec/base.hpp"

namespace ctdvec {

class ByteWriter {
 public:
  void PutU8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void PutU16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) PutU8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void PutU32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) PutU8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void PutI16(std::int16_t v) { PutU16(static_cast<std::uint16_t>(v)); }
  void PutF32(float v) { PutU32(std::bit_cast<std::uint32_t>(v)); }
  void PutBytes(std::string_view bytes) { buf_.append(bytes); }
  void PutMagic(std::string_view magic) { PutBytes(magic); }
  /// u32 length prefix followed by UTF-8 bytes.
  void PutString(std::string_view s) {
    PutU32(static_cast<std::uint32_t>(s.size()));
    PutBytes(s);
  }
  template <typename Real>
  void PutF32Array(std::span<const Real> values) {
    for (Real v : values) PutF32(static_cast<float>(v));
  }
  /// u32 element count followed by float32 values.
  template <typename Real>
  void PutF32Blob(std::span<const Real> values) {
    PutU32(static_cast<std::uint32_t>(values.size()));
    PutF32Array(values);
  }

  const std::string &bytes() const { return buf_; }
  std::string &bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source)
      : data_(data), source_(std::move(source)) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool AtEnd() const { return pos_ == data_.size(); }

  std::uint8_t GetU8() {
    Need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t GetU16() {
    Need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_++]))
           << (8 * i);
    return v;
  }
  std::uint32_t GetU32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++]))
           << (8 * i);
    return v;
  }
  std::int16_t GetI16() { return static_cast<std::int16_t>(GetU16()); }
  float GetF32() { return std::bit_cast<float>(GetU32()); }
  std::string_view GetBytes(std::size_t n) {
    Need(n);
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string GetString() {
    std::uint32_t n = GetU32();
    return std::string(GetBytes(n));
  }
  /// Checks a fixed magic tag; a short file is truncation, a mismatch is
  /// kBadMagic.
  void ExpectMagic(std::string_view magic) {
    if (remaining() < magic.size())
      Fail(ErrorCode::kTruncated, source_, ": file too short for magic '",
           magic, "'");
    if (data_.substr(pos_, magic.size()) != magic)
      Fail(ErrorCode::kBadMagic, source_, ": expected magic '", magic, "'");
    pos_ += magic.size();
  }
  void ExpectVersion(std::uint32_t expected) {
    std::uint32_t v = GetU32();
    if (v != expected)
      Fail(ErrorCode::kVersionMismatch, source_, ": version ", v,
           ", expected ", expected);
  }
  template <typename Real>
  void GetF32Array(std::span<Real> out) {
    Need(out.size() * 4);
    for (Real &v : out) v = static_cast<Real>(GetF32());
  }
  /// Reads a u32-counted float32 blob that must hold exactly `expected`
  /// values.
  template <typename Real>
  void GetF32Blob(std::span<Real> out, std::string_view what) {
    std::uint32_t n = GetU32();
    if (n != out.size())
      Fail(ErrorCode::kShape, source_, ": blob '", what, "' has ", n,
           " values, expected ", out.size());
    GetF32Array(out);
  }
  std::vector<float> GetF32BlobAny() {
    std::uint32_t n = GetU32();
    Need(static_cast<std::size_t>(n) * 4);
    std::vector<float> out(n);
    for (float &v : out) v = GetF32();
    return out;
  }
  void ExpectEnd() {
    if (!AtEnd())
      Fail(ErrorCode::kMalformedHeader, source_, ": ", remaining(),
           " trailing bytes");
  }
  const std::string &source() const { return source_; }

 private:
  void Need(std::size_t n) const {
    if (remaining() < n)
      Fail(ErrorCode::kTruncated, source_, ": truncated at byte ", pos_,
           " (need ", n, ", have ", remaining(), ")");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string source_;
};

inline std::string ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open ", path.string(), " for reading");
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void WriteFileBytes(const std::filesystem::path &path,
                           std::string_view bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot open ", path.string(), " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorCode::kIo, "write failed for ", path.string());
}

}  // namespace ctdvec

#endif  // CTDVEC_BINARY_IO_HPP
