#pragma once

// Exact Euclidean distance transform (separable lower-envelope algorithm of
// Felzenszwalb and Huttenlocher) and 4-connected component labeling.

#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "prunekit/image.hpp"

namespace prunekit {

namespace detail {

inline constexpr double kFar = 1e20;

// 1-D squared distance transform of f (sampled costs) into d.
inline void dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                  std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -kFar;
    z[1] = kFar;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kFar;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace detail

/// Squared Euclidean distance from every pixel to the nearest site (nonzero
/// entry of sites). Pixels are at integer coordinates; with no sites every
/// entry is a huge sentinel (>= 1e20).
inline std::vector<double> squared_distance_to_sites(const BinaryMap& sites) {
    const int h = sites.height;
    const int w = sites.width;
    std::vector<double> grid(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites.data[i] ? 0.0 : detail::kFar;
    const int n = std::max(h, w);
    std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n) + 1);
    std::vector<int> v(static_cast<std::size_t>(n));
    f.resize(static_cast<std::size_t>(h));
    d.resize(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
        detail::dt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
    }
    f.resize(static_cast<std::size_t>(w));
    d.resize(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y) * w + x];
        detail::dt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
    }
    return grid;
}

/// Squared distance from each foreground pixel to the nearest background
/// pixel, where everything outside the image counts as background. Zero on
/// background pixels.
inline std::vector<double> foreground_edt_squared(const BinaryMap& mask) {
    BinaryMap padded(mask.height + 2, mask.width + 2, 1);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) padded.at(y + 1, x + 1) = mask.at(y, x) ? 0 : 1;
    }
    const auto full = squared_distance_to_sites(padded);
    std::vector<double> out(static_cast<std::size_t>(mask.height) * mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            out[static_cast<std::size_t>(y) * mask.width + x] =
                full[static_cast<std::size_t>(y + 1) * padded.width + (x + 1)];
        }
    }
    return out;
}

struct Component {
    std::vector<int> pixels;  // linear indices y * width + x, in discovery order
};

/// 4-connected components of the nonzero pixels, ordered by their first
/// pixel in row-major order.
inline std::vector<Component> connected_components(const BinaryMap& mask) {
    std::vector<Component> out;
    std::vector<std::uint8_t> seen(mask.data.size(), 0);
    std::queue<int> q;
    for (int start = 0; start < static_cast<int>(mask.data.size()); ++start) {
        if (!mask.data[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
        Component comp;
        seen[static_cast<std::size_t>(start)] = 1;
        q.push(start);
        while (!q.empty()) {
            const int p = q.front();
            q.pop();
            comp.pixels.push_back(p);
            const int y = p / mask.width;
            const int x = p % mask.width;
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (!mask.in_bounds(ny[k], nx[k])) continue;
                const int np = ny[k] * mask.width + nx[k];
                if (mask.data[static_cast<std::size_t>(np)] && !seen[static_cast<std::size_t>(np)]) {
                    seen[static_cast<std::size_t>(np)] = 1;
                    q.push(np);
                }
            }
        }
        out.push_back(std::move(comp));
    }
    return out;
}

}  // namespace prunekit
