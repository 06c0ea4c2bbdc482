#pragma once

#include "splat/binning.hpp"
#include "splat/parallel.hpp"
#include "splat/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace splat {

/// Contributions below one quantization step are skipped.
inline constexpr double kAlphaMin = 1.0 / 255.0;
/// Keeps 1 - alpha away from zero so the backward recurrence can divide by it.
inline constexpr double kAlphaMax = 0.999;
/// Early-termination threshold on transmittance.
inline constexpr double kTransmittanceMin = 1e-4;

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    bool early_termination = true;
    int threads = 1;
};

struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<Vec3> pixels;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, const Vec3& fill = Vec3::Zero())
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    Vec3& at(int col, int row) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    const Vec3& at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// Per-pixel state saved by the forward pass for the backward pass.
struct RenderAux {
    int width = 0;
    int height = 0;
    std::vector<double> final_T;
    /// Gaussians that passed the alpha threshold before termination.
    std::vector<std::uint32_t> n_contrib;
    /// One past the last list position the compositing loop visited.
    std::vector<std::uint32_t> range_end;

    RenderAux() = default;
    RenderAux(int w, int h)
        : width(w), height(h), final_T(static_cast<std::size_t>(w) * h, 1.0),
          n_contrib(static_cast<std::size_t>(w) * h, 0), range_end(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
};

struct PixelAux {
    double final_T = 1.0;
    std::uint32_t n_contrib = 0;
    std::uint32_t range_end = 0;
};

inline PixelAux aux_entry(const RenderAux& aux, std::size_t idx) {
    return {aux.final_T[idx], aux.n_contrib[idx], aux.range_end[idx]};
}

struct AlphaSample {
    double alpha = 0.0;
    Vec2 delta = Vec2::Zero();
    double sigma = 0.0;
    /// exp(-sigma), i.e. d alpha / d opacity when not clamped.
    double falloff = 0.0;
    bool clamped = false;

    bool active() const { return alpha > 0.0; }
};

inline Vec2 pixel_center(int col, int row) { return {col + 0.5, row + 0.5}; }

/// Inverse of a symmetric 2x2, element-wise so the result stays symmetric.
inline Mat2 inverse_2x2(const Mat2& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    if (!(det > 0.0) || !std::isfinite(det))
        throw Error(ErrorKind::degenerate_covariance, "2D covariance is not invertible");
    Mat2 inv;
    inv << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
    return inv;
}

/// Evaluates one splat at a pixel center. The result is inactive (alpha == 0)
/// when the pixel is outside the splat's bounding square or alpha < kAlphaMin.
inline AlphaSample eval_alpha(const ProjectedGaussian& g, double opacity, const Vec2& pixel) {
    AlphaSample s;
    s.delta = pixel - g.mean2d;
    const Mat2 conic = inverse_2x2(g.cov2d);
    if (std::abs(s.delta.x()) > g.radius || std::abs(s.delta.y()) > g.radius)
        return s;
    s.sigma = 0.5 * (conic(0, 0) * s.delta.x() * s.delta.x() + conic(1, 1) * s.delta.y() * s.delta.y()) +
              0.5 * (conic(0, 1) + conic(1, 0)) * s.delta.x() * s.delta.y();
    s.falloff = std::exp(-s.sigma);
    const double raw = opacity * s.falloff;
    if (raw < kAlphaMin)
        return s;
    s.clamped = raw > kAlphaMax;
    s.alpha = s.clamped ? kAlphaMax : raw;
    return s;
}

struct PixelResult {
    Vec3 color = Vec3::Zero();
    double final_T = 1.0;
    std::uint32_t n_contrib = 0;
    std::uint32_t range_end = 0;
};

/// Front-to-back compositing of `order` (indices into `projected`) at one pixel.
/// If `trace` is given, it receives T_n before each contributor followed by
/// the final transmittance.
inline PixelResult composite_pixel(std::span<const std::uint32_t> order, std::span<const ProjectedGaussian> projected,
                                   std::span<const Gaussian3D> scene, const Vec2& pixel, const RenderOptions& options,
                                   std::vector<double>* trace = nullptr) {
    PixelResult out;
    double transmittance = 1.0;
    out.range_end = static_cast<std::uint32_t>(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const ProjectedGaussian& p = projected[order[k]];
        const Gaussian3D& g = scene[p.source_index];
        const AlphaSample s = eval_alpha(p, g.opacity, pixel);
        if (!s.active())
            continue;
        if (trace)
            trace->push_back(transmittance);
        out.color += g.color * (s.alpha * transmittance);
        transmittance *= 1.0 - s.alpha;
        ++out.n_contrib;
        if (options.early_termination && transmittance < kTransmittanceMin) {
            out.range_end = static_cast<std::uint32_t>(k + 1);
            break;
        }
    }
    if (trace)
        trace->push_back(transmittance);
    out.color += options.background * transmittance;
    out.final_T = transmittance;
    return out;
}

struct RenderResult {
    ImageBuffer image;
    RenderAux aux;
    TileGrid grid;
    std::vector<ProjectedGaussian> projected;
};

/// Projects every Gaussian and keeps the survivors in source order.
inline std::vector<ProjectedGaussian> project_scene(std::span<const Gaussian3D> scene, const Camera& camera,
                                                    int threads = 1) {
    std::vector<std::optional<ProjectedGaussian>> slots(scene.size());
    parallel_for(scene.size(), threads, [&](std::size_t i) { slots[i] = project_gaussian(scene[i], camera, i); });
    std::vector<ProjectedGaussian> projected;
    projected.reserve(scene.size());
    for (auto& s : slots)
        if (s)
            projected.push_back(*s);
    return projected;
}

inline RenderResult render(std::span<const Gaussian3D> scene, const Camera& camera, const RenderOptions& options = {}) {
    RenderResult r;
    r.projected = project_scene(scene, camera, options.threads);
    r.grid = sort_bins(assign_tiles(r.projected, camera.width, camera.height), r.projected, options.threads);
    r.image = ImageBuffer(camera.width, camera.height);
    r.aux = RenderAux(camera.width, camera.height);

    parallel_for(r.grid.bins.size(), options.threads, [&](std::size_t t) {
        const int tx = static_cast<int>(t % r.grid.tiles_x);
        const int ty = static_cast<int>(t / r.grid.tiles_x);
        const auto& bin = r.grid.bins[t];
        const int row_end = std::min((ty + 1) * kTileSize, camera.height);
        const int col_end = std::min((tx + 1) * kTileSize, camera.width);
        for (int row = ty * kTileSize; row < row_end; ++row) {
            for (int col = tx * kTileSize; col < col_end; ++col) {
                const PixelResult px = composite_pixel(bin, r.projected, scene, pixel_center(col, row), options);
                const std::size_t idx = r.aux.index(col, row);
                r.image.pixels[idx] = px.color;
                r.aux.final_T[idx] = px.final_T;
                r.aux.n_contrib[idx] = px.n_contrib;
                r.aux.range_end[idx] = px.range_end;
            }
        }
    });
    return r;
}

struct BruteForceResult {
    ImageBuffer image;
    RenderAux aux;
};

/// Reference renderer without tiles: one global depth sort, every pixel
/// composited against every projected Gaussian.
inline BruteForceResult render_brute_force(std::span<const Gaussian3D> scene, const Camera& camera,
                                           const RenderOptions& options = {}) {
    const std::vector<ProjectedGaussian> projected = project_scene(scene, camera, 1);
    std::vector<std::uint32_t> order(projected.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return depth_order_less(projected[a], projected[b]);
    });
    BruteForceResult r{ImageBuffer(camera.width, camera.height), RenderAux(camera.width, camera.height)};
    for (int row = 0; row < camera.height; ++row) {
        for (int col = 0; col < camera.width; ++col) {
            const PixelResult px = composite_pixel(order, projected, scene, pixel_center(col, row), options);
            const std::size_t idx = r.aux.index(col, row);
            r.image.pixels[idx] = px.color;
            r.aux.final_T[idx] = px.final_T;
            r.aux.n_contrib[idx] = px.n_contrib;
            r.aux.range_end[idx] = px.range_end;
        }
    }
    return r;
}

}  // namespace splat
