#pragma once

#include "splat/parallel.hpp"
#include "splat/raster_forward.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace splat {

/// Loss gradients with respect to one splat's image-space parameters.
struct Splat2DGrads {
    Vec3 d_color = Vec3::Zero();
    double d_opacity = 0.0;
    Vec2 d_mean2d = Vec2::Zero();
    Mat2 d_cov2d = Mat2::Zero();

    Splat2DGrads& operator+=(const Splat2DGrads& o) {
        d_color += o.d_color;
        d_opacity += o.d_opacity;
        d_mean2d += o.d_mean2d;
        d_cov2d += o.d_cov2d;
        return *this;
    }
};

/// Back-to-front replay of composite_pixel. Calls sink(k, grads) for every
/// list position k that contributed in the forward pass, last one first.
/// Transmittance is rebuilt from the saved final value via
/// T_n = T_{n+1} / (1 - alpha_n); `trace`, if given, receives the rebuilt
/// values in back-to-front order, starting with the final transmittance.
template <typename Sink>
void composite_pixel_backward(std::span<const std::uint32_t> order, std::span<const ProjectedGaussian> projected,
                              std::span<const Gaussian3D> scene, const Vec2& pixel, const PixelAux& aux,
                              const Vec3& d_pixel, const Vec3& background, Sink&& sink,
                              std::vector<double>* trace = nullptr) {
    double t_after = aux.final_T;
    Vec3 suffix = background * aux.final_T;
    if (trace)
        trace->push_back(t_after);
    for (std::size_t k = aux.range_end; k-- > 0;) {
        const ProjectedGaussian& p = projected[order[k]];
        const Gaussian3D& g = scene[p.source_index];
        const AlphaSample s = eval_alpha(p, g.opacity, pixel);
        if (!s.active())
            continue;
        const double t_n = t_after / (1.0 - s.alpha);
        if (trace)
            trace->push_back(t_n);

        Splat2DGrads out;
        out.d_color = d_pixel * (s.alpha * t_n);
        const double d_alpha = d_pixel.dot(g.color * t_n - suffix / (1.0 - s.alpha));
        suffix += g.color * (s.alpha * t_n);
        t_after = t_n;

        if (!s.clamped) {
            out.d_opacity = d_alpha * s.falloff;
            const double d_sigma = -d_alpha * g.opacity * s.falloff;
            const Vec2 v = inverse_2x2(p.cov2d) * s.delta;
            // delta = pixel - mean2d, so dsigma/dmean2d = -conic * delta.
            out.d_mean2d = -d_sigma * v;
            out.d_cov2d = (-0.5 * d_sigma) * (v * v.transpose());
        }
        sink(k, out);
    }
}

/// Sums per-pixel contributions into one Splat2DGrads per projected Gaussian.
/// Tiles are processed independently and reduced in tile order, pixels in
/// row-major order within a tile, so results do not depend on thread count.
inline std::vector<Splat2DGrads> accumulate_image_backward(const RenderResult& fwd, std::span<const Gaussian3D> scene,
                                                           const ImageBuffer& d_image, const RenderOptions& options) {
    if (d_image.width != fwd.image.width || d_image.height != fwd.image.height)
        throw Error(ErrorKind::invalid_input, "accumulate_image_backward: gradient image size does not match render");
    const TileGrid& grid = fwd.grid;
    std::vector<std::vector<Splat2DGrads>> per_tile(grid.bins.size());

    parallel_for(grid.bins.size(), options.threads, [&](std::size_t t) {
        const auto& bin = grid.bins[t];
        auto& local = per_tile[t];
        local.assign(bin.size(), Splat2DGrads{});
        if (bin.empty())
            return;
        const int tx = static_cast<int>(t % grid.tiles_x);
        const int ty = static_cast<int>(t / grid.tiles_x);
        const int row_end = std::min((ty + 1) * kTileSize, grid.height);
        const int col_end = std::min((tx + 1) * kTileSize, grid.width);
        for (int row = ty * kTileSize; row < row_end; ++row) {
            for (int col = tx * kTileSize; col < col_end; ++col) {
                const std::size_t idx = fwd.aux.index(col, row);
                const Vec3& d_pixel = d_image.pixels[idx];
                if (d_pixel.isZero(0.0))
                    continue;
                composite_pixel_backward(bin, fwd.projected, scene, pixel_center(col, row), aux_entry(fwd.aux, idx),
                                         d_pixel, options.background,
                                         [&](std::size_t k, const Splat2DGrads& g) { local[k] += g; });
            }
        }
    });

    std::vector<Splat2DGrads> totals(fwd.projected.size());
    for (std::size_t t = 0; t < grid.bins.size(); ++t)
        for (std::size_t k = 0; k < grid.bins[t].size(); ++k)
            totals[grid.bins[t][k]] += per_tile[t][k];
    return totals;
}

}  // namespace splat
