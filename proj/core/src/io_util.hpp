#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "modest/common.hpp"

namespace modest::detail {

inline void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("truncated file: " + path);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

// Row-major f32 dump of a double matrix.
inline void write_f32_matrix(std::ofstream& out, const Mat& m) {
  std::vector<float> buf(static_cast<std::size_t>(m.rows()) * m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      buf[static_cast<std::size_t>(r) * m.cols() + c] =
          static_cast<float>(m(r, c));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline Mat read_f32_matrix(std::ifstream& in, std::uint32_t rows,
                           std::uint32_t cols, const std::string& path) {
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float))))
    throw DataError("truncated file: " + path);
  Mat out(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      out(r, c) = static_cast<Real>(buf[static_cast<std::size_t>(r) * cols + c]);
  return out;
}

inline void write_f32_vec(std::ofstream& out, const Vec& v) {
  std::vector<float> buf(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    buf[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline Vec read_f32_vec(std::ifstream& in, std::uint32_t n,
                        const std::string& path) {
  std::vector<float> buf(n);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float))))
    throw DataError("truncated file: " + path);
  Vec out(n);
  for (std::uint32_t i = 0; i < n; ++i) out(i) = static_cast<Real>(buf[i]);
  return out;
}

}  // namespace modest::detail
