// Copyright 2026 The fdrive Authors. All Rights Reserved.
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

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <openssl/evp.h>

#include "fdrive/core.hpp"

namespace fdrive {

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal form, locale independent.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

using CsvCell = std::variant<double, std::int64_t, std::string>;

/// Comma separated, '.' decimal, header row, LF line ends.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<CsvCell> row) {
    if (row.size() != header_.size()) throw DomainError("csv: row width differs from header");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto join = [&out](const auto& cells, auto&& cell_text) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cell_text(cells[i]);
      }
      out += '\n';
    };
    join(header_, [](const std::string& s) { return s; });
    for (const auto& r : rows_)
      join(r, [](const CsvCell& c) {
        if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
        if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
        return std::get<std::string>(c);
      });
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<CsvCell>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// WAV, 16-bit PCM mono little-endian
// ---------------------------------------------------------------------------

struct WavData {
  Series samples;  // [-1, 1)
  double sample_rate = 16000.0;
};

namespace detail {
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s += static_cast<char>((v >> (8 * i)) & 0xff);
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s += static_cast<char>(v & 0xff);
  s += static_cast<char>(v >> 8);
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
}  // namespace detail

/// Peak-normalizes to -3 dBFS and encodes. Silence is written as zeros.
inline std::string encode_wav(std::span<const double> x, std::uint32_t sample_rate) {
  if (!all_finite(x)) throw DataError("encode_wav: non-finite sample");
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double target = std::pow(10.0, -3.0 / 20.0) * 32767.0;
  const double scale = peak > 0.0 ? target / peak : 0.0;
  std::string s;
  const auto data_bytes = static_cast<std::uint32_t>(2 * x.size());
  s += "RIFF";
  detail::put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  detail::put_u32(s, 16);
  detail::put_u16(s, 1);  // PCM
  detail::put_u16(s, 1);  // mono
  detail::put_u32(s, sample_rate);
  detail::put_u32(s, sample_rate * 2);
  detail::put_u16(s, 2);
  detail::put_u16(s, 16);
  s += "data";
  detail::put_u32(s, data_bytes);
  for (double v : x) {
    const auto q = static_cast<std::int16_t>(std::lround(v * scale));
    detail::put_u16(s, static_cast<std::uint16_t>(q));
  }
  return s;
}

inline WavData decode_wav(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw DataError("wav: not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  WavData w;
  while (pos + 8 <= n) {
    const std::uint32_t size = detail::get_u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (pos + 8 + size > n) throw DataError("wav: truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("wav: short fmt chunk");
      const auto format = detail::get_u16(body);
      const auto channels = detail::get_u16(body + 2);
      const auto bits = detail::get_u16(body + 14);
      if (format != 1) throw DataError("wav: only PCM is supported");
      if (channels != 1) throw DataError("wav: only mono is supported (got " + std::to_string(channels) + " channels)");
      if (bits != 16) throw DataError("wav: only 16-bit samples are supported (got " + std::to_string(bits) + ")");
      w.sample_rate = detail::get_u32(body + 4);
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data before fmt");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(detail::get_u16(body + 2 * i)) / 32768.0;
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw DataError("wav: no data chunk");
}

inline WavData read_wav(const std::filesystem::path& path) { return decode_wav(read_text(path)); }

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw DataError("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

}  // namespace fdrive
