#pragma once

// Internal binary IO helpers shared by the model/index/vector-file readers.
// All on-disk integers and floats are little-endian; we read and write them
// with raw memory IO, so a little-endian host is required.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "loh/error.hpp"
#include "loh/quantization.hpp"

namespace loh::wire {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw Error("write failed");
}

template <typename T>
void put(std::ostream& out, T v) {
    put_bytes(out, &v, sizeof v);
}

inline void take_bytes(std::istream& in, void* p, std::size_t n,
                       const std::string& what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw FormatError("truncated input while reading " + what);
}

template <typename T>
T take(std::istream& in, const std::string& what) {
    T v;
    take_bytes(in, &v, sizeof v, what);
    return v;
}

// Reads a u32 header field that must fit a non-negative int.
inline int take_int_field(std::istream& in, const std::string& what) {
    const auto v = take<std::uint32_t>(in, what);
    if (v > 0x7fffffffu) throw FormatError("field out of range: " + what);
    return static_cast<int>(v);
}

inline void put_matrix_f32(std::ostream& out, const Matrix& m) {
    std::vector<float> buf(static_cast<std::size_t>(m.size()));
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            buf[at++] = static_cast<float>(m(r, c));
    put_bytes(out, buf.data(), buf.size() * sizeof(float));
}

inline Matrix take_matrix_f32(std::istream& in, Eigen::Index rows,
                              Eigen::Index cols, const std::string& what) {
    std::vector<float> buf(static_cast<std::size_t>(rows * cols));
    take_bytes(in, buf.data(), buf.size() * sizeof(float), what);
    Matrix m(rows, cols);
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = buf[at++];
    return m;
}

inline void put_vector_f32(std::ostream& out, const Vector& v) {
    std::vector<float> buf(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
    put_bytes(out, buf.data(), buf.size() * sizeof(float));
}

inline Vector take_vector_f32(std::istream& in, Eigen::Index size,
                              const std::string& what) {
    std::vector<float> buf(static_cast<std::size_t>(size));
    take_bytes(in, buf.data(), buf.size() * sizeof(float), what);
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = buf[static_cast<std::size_t>(i)];
    return v;
}

}  // namespace loh::wire
