// Copyright 2026 The tqat Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte streams for the binary file formats. Readers check
// every access against the buffer end and throw FormatError on overrun.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tqat/error.hpp"

namespace tqat {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }

  void put_bytes(std::span<const std::uint8_t> bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  }

  void put_magic(std::string_view magic) {
    buf_.insert(buf_.end(), magic.begin(), magic.end());
  }

  // u32 length followed by the bytes.
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    buf_.insert(buf_.end(), p, p + values.size_bytes());
  }

  std::size_t size() const noexcept { return buf_.size(); }
  std::vector<std::uint8_t>& bytes() noexcept { return buf_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }

  // Overwrites a previously written value at a fixed position.
  template <typename T>
    requires std::is_arithmetic_v<T>
  void patch(std::size_t offset, T v) {
    std::memcpy(buf_.data() + offset, &v, sizeof(T));
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }

  std::span<const std::uint8_t> get_bytes(std::size_t n) { return take(n); }

  void expect_magic(std::string_view magic, std::string_view what) {
    auto got = take(magic.size());
    if (std::memcmp(got.data(), magic.data(), magic.size()) != 0) {
      throw FormatError(std::string(what) + ": bad magic");
    }
  }

  std::string get_string(std::size_t max_len = 1 << 20) {
    auto n = get<std::uint32_t>();
    if (n > max_len) throw FormatError("string length " + std::to_string(n) + " out of range");
    auto s = take(n);
    return {reinterpret_cast<const char*>(s.data()), s.size()};
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_array(std::size_t count) {
    if (count > remaining() / sizeof(T)) throw FormatError("truncated array");
    std::vector<T> out(count);
    std::memcpy(out.data(), take(count * sizeof(T)).data(), count * sizeof(T));
    return out;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  void seek(std::size_t pos) {
    if (pos > bytes_.size()) throw FormatError("seek past end of data");
    pos_ = pos;
  }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw FormatError("truncated data");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames, so readers never see a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace tqat
