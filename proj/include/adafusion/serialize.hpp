#pragma once

#include "adafusion/common.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace adafusion::io {

// Little-endian binary primitives for the archive formats. Readers throw
// IoError on truncation so partially written files never load.

inline void writeU32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void writeU64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void writeF64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void writeString(std::ostream& out, const std::string& s) {
  writeU32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void writeMatrix(std::ostream& out, const Matrix& m) {
  writeU32(out, static_cast<std::uint32_t>(m.rows()));
  writeU32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(Real) * static_cast<std::size_t>(m.size())));
}

inline void readRaw(std::istream& in, void* dst, std::size_t size, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(size));
  if (in.gcount() != static_cast<std::streamsize>(size)) {
    throw IoError(std::string("archive truncated while reading ") + what);
  }
}

inline std::uint32_t readU32(std::istream& in, const char* what = "u32") {
  std::uint32_t v = 0;
  readRaw(in, &v, sizeof(v), what);
  return v;
}

inline std::uint64_t readU64(std::istream& in, const char* what = "u64") {
  std::uint64_t v = 0;
  readRaw(in, &v, sizeof(v), what);
  return v;
}

inline double readF64(std::istream& in, const char* what = "f64") {
  double v = 0;
  readRaw(in, &v, sizeof(v), what);
  return v;
}

inline std::string readString(std::istream& in, const char* what = "string") {
  const std::uint32_t size = readU32(in, what);
  if (size > (1u << 24)) throw IoError("implausible string length in archive");
  std::string s(size, '\0');
  if (size > 0) readRaw(in, s.data(), size, what);
  return s;
}

inline Matrix readMatrix(std::istream& in, const char* what = "matrix") {
  const std::uint32_t rows = readU32(in, what);
  const std::uint32_t cols = readU32(in, what);
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 32)) {
    throw IoError("implausible matrix size in archive");
  }
  Matrix m(rows, cols);
  if (m.size() > 0) {
    readRaw(in, m.data(), sizeof(Real) * static_cast<std::size_t>(m.size()), what);
  }
  return m;
}

}  // namespace adafusion::io
