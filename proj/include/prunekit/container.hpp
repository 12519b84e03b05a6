#pragma once

// TPK1 tensor container: "TPK1", u16 version, u8 dtype, u8 rank, u32 dims,
// row-major little-endian payload, CRC32 of everything before the trailer.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "prunekit/error.hpp"
#include "prunekit/linalg.hpp"

namespace prunekit {

inline constexpr char kContainerMagic[4] = {'T', 'P', 'K', '1'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    bool operator==(const Tensor&) const = default;
};

namespace detail {

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, std::size_t& pos) {
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in slices.
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        c = crc32(c, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace detail

inline std::vector<unsigned char> encode_container(const Tensor& t) {
    if (t.dims.empty() || t.dims.size() > 255) throw DataError("container: rank must be in [1, 255]");
    if (t.data.size() != t.element_count()) {
        throw DataError("container: payload has " + std::to_string(t.data.size()) + " values, dims imply " +
                        std::to_string(t.element_count()));
    }
    std::vector<unsigned char> out(kContainerMagic, kContainerMagic + 4);
    detail::put<std::uint16_t>(out, kContainerVersion);
    detail::put<std::uint8_t>(out, kDtypeF32);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) detail::put<std::uint32_t>(out, d);
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    out.insert(out.end(), bytes, bytes + t.data.size() * sizeof(float));
    detail::put<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

/// Parses a container image; `name` labels diagnostics.
inline Tensor decode_container(const std::vector<unsigned char>& in, const std::string& name) {
    const std::size_t header = 4 + 2 + 1 + 1;
    if (in.size() < header + 4) throw DataError(name + ": truncated container (" + std::to_string(in.size()) + " bytes)");
    if (std::memcmp(in.data(), kContainerMagic, 4) != 0) throw DataError(name + ": bad magic, not a TPK1 container");
    const std::uint32_t stored = [&] {
        std::size_t p = in.size() - 4;
        return detail::get<std::uint32_t>(in, p);
    }();
    if (detail::crc32_of(in.data(), in.size() - 4) != stored) throw DataError(name + ": CRC32 mismatch, file is corrupted");

    std::size_t pos = 4;
    const auto version = detail::get<std::uint16_t>(in, pos);
    const auto dtype = detail::get<std::uint8_t>(in, pos);
    const auto rank = detail::get<std::uint8_t>(in, pos);
    if (version != kContainerVersion) throw DataError(name + ": unsupported container version " + std::to_string(version));
    if (dtype != kDtypeF32) throw DataError(name + ": unsupported dtype code " + std::to_string(dtype));
    if (rank == 0) throw DataError(name + ": rank 0 container");
    if (in.size() < header + 4u * rank + 4) throw DataError(name + ": truncated dims");
    Tensor t;
    for (int i = 0; i < rank; ++i) t.dims.push_back(detail::get<std::uint32_t>(in, pos));
    const std::size_t n = t.element_count();
    if (in.size() - 4 - pos != n * sizeof(float)) {
        throw DataError(name + ": payload is " + std::to_string(in.size() - 4 - pos) + " bytes, dims imply " +
                        std::to_string(n * sizeof(float)));
    }
    t.data.resize(n);
    std::memcpy(t.data.data(), in.data() + pos, n * sizeof(float));
    return t;
}

inline void write_container(const std::filesystem::path& path, const Tensor& t) {
    const auto bytes = encode_container(t);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError(path.string() + ": write failed");
}

inline Tensor read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_container(bytes, path.string());
}

inline Tensor to_tensor(const Matrix& m) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
    return t;
}

inline Tensor to_tensor(const Vector& v) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    t.data.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
    return t;
}

inline Matrix to_matrix(const Tensor& t) {
    if (t.dims.size() != 2) throw DataError("container: expected a rank-2 tensor, got rank " + std::to_string(t.dims.size()));
    Matrix m(t.dims[0], t.dims[1]);
    for (std::size_t i = 0; i < t.data.size(); ++i) m.data()[i] = t.data[i];
    require_finite(m, "container payload");
    return m;
}

inline Vector to_vector(const Tensor& t) {
    if (t.dims.size() != 1) throw DataError("container: expected a rank-1 tensor, got rank " + std::to_string(t.dims.size()));
    Vector v(static_cast<Eigen::Index>(t.dims[0]));
    for (std::size_t i = 0; i < t.data.size(); ++i) v[static_cast<Eigen::Index>(i)] = t.data[i];
    require_finite(v, "container payload");
    return v;
}

}  // namespace prunekit
