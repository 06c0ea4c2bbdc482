#pragma once

#include "splat/parallel.hpp"
#include "splat/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace splat {

inline constexpr int kTileSize = 16;

/// Per-tile lists of indices into the projected-Gaussian array.
struct TileGrid {
    int width = 0;
    int height = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> bins;

    const std::vector<std::uint32_t>& bin(int tx, int ty) const { return bins[static_cast<std::size_t>(ty) * tiles_x + tx]; }
    const std::vector<std::uint32_t>& bin_for_pixel(int col, int row) const {
        return bin(col / kTileSize, row / kTileSize);
    }
};

/// Pixel rectangle [x0, x1] x [y0, y1] covered by a tile, clipped to the image.
struct TileRect {
    double x0, x1, y0, y1;
};

inline TileRect tile_rect(int tx, int ty, int width, int height) {
    return {static_cast<double>(tx * kTileSize), static_cast<double>(std::min((tx + 1) * kTileSize, width)),
            static_cast<double>(ty * kTileSize), static_cast<double>(std::min((ty + 1) * kTileSize, height))};
}

inline bool box_intersects_tile(const ProjectedGaussian& p, const TileRect& r) {
    return p.mean2d.x() - p.radius <= r.x1 && p.mean2d.x() + p.radius >= r.x0 &&
           p.mean2d.y() - p.radius <= r.y1 && p.mean2d.y() + p.radius >= r.y0;
}

inline TileGrid assign_tiles(std::span<const ProjectedGaussian> projected, int width, int height) {
    TileGrid grid;
    grid.width = width;
    grid.height = height;
    grid.tiles_x = (width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (height + kTileSize - 1) / kTileSize;
    grid.bins.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);

    // Sequential over Gaussians, so every bin is filled in ascending index order.
    for (std::size_t i = 0; i < projected.size(); ++i) {
        const ProjectedGaussian& p = projected[i];
        const auto lo = [](double v) { return static_cast<int>(std::floor(v / kTileSize)) - 1; };
        const auto hi = [](double v) { return static_cast<int>(std::floor(v / kTileSize)); };
        const int tx0 = std::max(0, lo(p.mean2d.x() - p.radius));
        const int tx1 = std::min(grid.tiles_x - 1, hi(p.mean2d.x() + p.radius));
        const int ty0 = std::max(0, lo(p.mean2d.y() - p.radius));
        const int ty1 = std::min(grid.tiles_y - 1, hi(p.mean2d.y() + p.radius));
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                if (box_intersects_tile(p, tile_rect(tx, ty, width, height)))
                    grid.bins[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
    }
    return grid;
}

/// Front-to-back order: depth ascending, then source index ascending.
inline bool depth_order_less(const ProjectedGaussian& a, const ProjectedGaussian& b) {
    if (a.depth != b.depth)
        return a.depth < b.depth;
    return a.source_index < b.source_index;
}

inline TileGrid sort_bins(TileGrid grid, std::span<const ProjectedGaussian> projected, int threads = 1) {
    parallel_for(grid.bins.size(), threads, [&](std::size_t t) {
        std::stable_sort(grid.bins[t].begin(), grid.bins[t].end(), [&](std::uint32_t a, std::uint32_t b) {
            return depth_order_less(projected[a], projected[b]);
        });
    });
    return grid;
}

}  // namespace splat
