#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/error.hpp"

namespace prunekit {

/// RGB frame, interleaved HWC, values in [0, 1].
struct Frame {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    static constexpr int channels = 3;

    Frame() = default;
    Frame(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * channels, 0.0) {}

    double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool operator==(const Frame&) const = default;
};

/// Binary map with one byte per pixel (0 or 1).
struct BinaryMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    BinaryMap() = default;
    BinaryMap(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool in_bounds(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v != 0;
        return n;
    }
    bool empty() const { return count() == 0; }

    BinaryMap complement() const {
        BinaryMap out(height, width);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = data[i] ? 0 : 1;
        return out;
    }

    bool operator==(const BinaryMap&) const = default;
};

inline void require_same_dims(const BinaryMap& a, const BinaryMap& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw DataError(std::string(what) + ": dimension mismatch " + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                        std::to_string(b.width));
    }
}

}  // namespace prunekit
