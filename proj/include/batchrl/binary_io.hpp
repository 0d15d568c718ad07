#pragma once

// Little helpers for the native-endian binary files (networks, replay dumps,
// checkpoints).

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace batchrl::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
  requires std::is_trivially_copyable_v<T>
void write(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
  requires std::is_trivially_copyable_v<T>
T read(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError("unexpected end of file");
  }
  return value;
}

template <class T, class Alloc>
void write_vector(std::ostream& os, const std::vector<T, Alloc>& v) {
  write<std::uint64_t>(os, v.size());
  if (!v.empty()) os.write(reinterpret_cast<const char*>(v.data()), sizeof(T) * v.size());
}

template <class T>
std::vector<T> read_vector(std::istream& is, std::uint64_t max_len = std::uint64_t{1} << 32) {
  const auto n = read<std::uint64_t>(is);
  if (n > max_len) throw FormatError("vector length out of range");
  std::vector<T> v(n);
  if (n != 0 && !is.read(reinterpret_cast<char*>(v.data()), sizeof(T) * n)) {
    throw FormatError("unexpected end of file");
  }
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read<std::uint64_t>(is);
  if (n > (std::uint64_t{1} << 30)) throw FormatError("string length out of range");
  std::string s(n, '\0');
  if (n != 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw FormatError("unexpected end of file");
  }
  return s;
}

inline void write_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[9], const char* what) {
  char buf[8];
  if (!is.read(buf, 8) || std::string(buf, 8) != std::string(magic, 8)) {
    throw FormatError(std::string("not a ") + what + " file");
  }
}

}  // namespace batchrl::io
