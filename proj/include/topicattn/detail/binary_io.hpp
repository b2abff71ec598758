#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "topicattn/error.hpp"

namespace topicattn::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

template <typename T>
void put(std::string& out, T value)
{
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
void put_array(std::string& out, std::span<const T> values)
{
  out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

// Bounds-checked cursor over an in-memory byte buffer.
class ByteReader {
public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  template <typename T>
  T get()
  {
    require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <typename T>
  void get_array(std::span<T> out)
  {
    require(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string get_string(std::size_t n)
  {
    require(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

private:
  void require(std::size_t n) const
  {
    if (n > remaining())
      throw CorruptArchive("truncated data at byte " + std::to_string(pos_));
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size)))
    throw InputError("cannot read " + path.string());
  return bytes;
}

inline std::string read_text_file(const std::filesystem::path& path)
{
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw InputError("short write to " + path.string());
}

inline void write_f64_blob(const std::filesystem::path& path, std::span<const double> values)
{
  std::string out;
  put_array<double>(out, values);
  write_file_bytes(path, out);
}

inline std::vector<double> read_f64_blob(const std::filesystem::path& path, std::size_t expected)
{
  auto bytes = read_file_bytes(path);
  if (bytes.size() != expected * sizeof(double))
    throw InputError(path.string() + ": expected " + std::to_string(expected) +
                     " float64 values, found " + std::to_string(bytes.size()) + " bytes");
  std::vector<double> values(expected);
  if (expected > 0)
    std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

} // namespace topicattn::detail
