#include "oracles.hpp"

#include "splat/random_scene.hpp"
#include "splat/raster_backward.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace splat;

namespace {

ProjectedGaussian splat2d(const Vec2& mean, const Mat2& cov, std::size_t src, double depth) {
    ProjectedGaussian p;
    p.mean2d = mean;
    p.cov2d = cov;
    p.radius = 1e6;
    p.depth = depth;
    p.source_index = src;
    return p;
}

struct PixelSetup {
    std::vector<ProjectedGaussian> projected;
    std::vector<Gaussian3D> scene;
    std::vector<std::uint32_t> order;
    Vec2 pixel;
    Vec3 d_pixel;
    RenderOptions options;
};

std::vector<Splat2DGrads> pixel_backward(const PixelSetup& s) {
    const PixelResult fwd = composite_pixel(s.order, s.projected, s.scene, s.pixel, s.options);
    std::vector<Splat2DGrads> out(s.order.size());
    composite_pixel_backward(s.order, s.projected, s.scene, s.pixel, PixelAux{fwd.final_T, fwd.n_contrib, fwd.range_end},
                             s.d_pixel, s.options.background, [&](std::size_t k, const Splat2DGrads& g) { out[k] += g; });
    return out;
}

double pixel_loss(const PixelSetup& s) {
    return s.d_pixel.dot(composite_pixel(s.order, s.projected, s.scene, s.pixel, s.options).color);
}

PixelSetup three_splats(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    PixelSetup s;
    s.pixel = Vec2(4.5, 3.5);
    for (std::uint32_t i = 0; i < 3; ++i) {
        Mat2 cov = oracle::random_spd2(rng) + Mat2::Identity();
        s.projected.push_back(splat2d(s.pixel + Vec2(0.8 * n(rng), 0.8 * n(rng)), cov, i, 1.0 + i));
        Gaussian3D g;
        g.opacity = 0.2 + 0.6 * u01(rng);
        g.color = Vec3(u01(rng), u01(rng), u01(rng));
        s.scene.push_back(g);
        s.order.push_back(i);
    }
    s.d_pixel = Vec3(n(rng), n(rng), n(rng));
    s.options.background = Vec3(u01(rng), u01(rng), u01(rng));
    return s;
}

}  // namespace

TEST(PixelBackward, SingleSplatExample) {
    PixelSetup s;
    s.pixel = Vec2(0.5, 0.5);
    s.projected = {splat2d(s.pixel, Mat2::Identity(), 0, 1.0)};
    Gaussian3D g;
    g.opacity = 0.5;
    g.color = Vec3(1, 0, 0);
    s.scene = {g};
    s.order = {0};
    s.d_pixel = Vec3(1, 0, 0);
    const auto grads = pixel_backward(s);
    EXPECT_DOUBLE_EQ(grads[0].d_color.x(), 0.5);
    EXPECT_DOUBLE_EQ(grads[0].d_color.y(), 0.0);
    EXPECT_DOUBLE_EQ(grads[0].d_opacity, 1.0);
    // Centered pixel: delta = 0, so the geometry gradients vanish.
    EXPECT_EQ(grads[0].d_mean2d, Vec2::Zero());
    EXPECT_EQ(grads[0].d_cov2d, Mat2::Zero());
}

TEST(PixelBackward, MatchesFiniteDifferences) {
    std::mt19937_64 rng(41);
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        const PixelSetup base = three_splats(rng);
        const auto grads = pixel_backward(base);
        const auto check = [&](double analytic, const std::function<void(PixelSetup&, double)>& bump) {
            const double fd = oracle::central_diff(
                [&](double eps) {
                    PixelSetup s = base;
                    bump(s, eps);
                    return pixel_loss(s);
                },
                0.0, h);
            EXPECT_NEAR(analytic, fd, 1e-6 * std::max(1.0, std::abs(fd)));
        };
        for (std::size_t k = 0; k < 3; ++k) {
            for (int c = 0; c < 3; ++c)
                check(grads[k].d_color[c], [&](PixelSetup& s, double e) { s.scene[k].color[c] += e; });
            check(grads[k].d_opacity, [&](PixelSetup& s, double e) { s.scene[k].opacity += e; });
            for (int c = 0; c < 2; ++c)
                check(grads[k].d_mean2d[c], [&](PixelSetup& s, double e) { s.projected[k].mean2d[c] += e; });
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c)
                    check(grads[k].d_cov2d(r, c), [&](PixelSetup& s, double e) { s.projected[k].cov2d(r, c) += e; });
        }
    }
}

TEST(PixelBackward, ClampedSplatOnlyPassesColor) {
    PixelSetup s;
    s.pixel = Vec2(2.5, 2.5);
    s.projected = {splat2d(Vec2(2.0, 2.7), Mat2::Identity() * 4.0, 0, 1.0)};
    Gaussian3D g;
    g.opacity = 5.0;
    g.color = Vec3(0.3, 0.6, 0.9);
    s.scene = {g};
    s.order = {0};
    s.d_pixel = Vec3(1, 1, 1);
    ASSERT_TRUE(eval_alpha(s.projected[0], g.opacity, s.pixel).clamped);
    const auto grads = pixel_backward(s);
    EXPECT_EQ(grads[0].d_opacity, 0.0);
    EXPECT_EQ(grads[0].d_mean2d, Vec2::Zero());
    EXPECT_EQ(grads[0].d_cov2d, Mat2::Zero());
    EXPECT_NEAR(grads[0].d_color.x(), kAlphaMax, 1e-15);
}

TEST(PixelBackward, RecurrenceReproducesForwardTransmittance) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed + 400);
        const Camera cam = random_camera(rng, 48, 48);
        RandomSceneParams params;
        params.opacity_max = 0.99;
        const std::vector<Gaussian3D> scene = random_scene(rng, cam, 60, params);
        const RenderResult r = render(scene, cam, {});
        double worst = 0.0;
        for (int row = 0; row < 48; ++row) {
            for (int col = 0; col < 48; ++col) {
                const auto& bin = r.grid.bin_for_pixel(col, row);
                std::vector<double> fwd_trace, bwd_trace;
                composite_pixel(bin, r.projected, scene, pixel_center(col, row), {}, &fwd_trace);
                composite_pixel_backward(bin, r.projected, scene, pixel_center(col, row),
                                         aux_entry(r.aux, r.aux.index(col, row)), Vec3::Ones(), Vec3::Zero(),
                                         [](std::size_t, const Splat2DGrads&) {}, &bwd_trace);
                ASSERT_EQ(fwd_trace.size(), bwd_trace.size());
                for (std::size_t k = 0; k < fwd_trace.size(); ++k)
                    worst = std::max(worst, std::abs(fwd_trace[k] - bwd_trace[bwd_trace.size() - 1 - k]));
            }
        }
        EXPECT_LE(worst, 1e-12) << "seed " << seed;
    }
}

TEST(ImageBackward, ZeroUpstreamGivesZero) {
    std::mt19937_64 rng(42);
    const Camera cam = random_camera(rng, 32, 32);
    const std::vector<Gaussian3D> scene = random_scene(rng, cam, 20);
    const RenderResult r = render(scene, cam, {});
    const auto grads = accumulate_image_backward(r, scene, ImageBuffer(32, 32), {});
    ASSERT_EQ(grads.size(), r.projected.size());
    for (const auto& g : grads) {
        EXPECT_EQ(g.d_color, Vec3::Zero());
        EXPECT_EQ(g.d_opacity, 0.0);
        EXPECT_EQ(g.d_mean2d, Vec2::Zero());
        EXPECT_EQ(g.d_cov2d, Mat2::Zero());
    }
}

TEST(ImageBackward, SizeMismatchThrows) {
    std::mt19937_64 rng(43);
    const Camera cam = random_camera(rng, 32, 32);
    const RenderResult r = render({}, cam, {});
    EXPECT_THROW(accumulate_image_backward(r, {}, ImageBuffer(16, 32), {}), Error);
}

TEST(ImageBackward, ColorGradientIsBlendWeightSum) {
    std::mt19937_64 rng(44);
    const Camera cam = random_camera(rng, 40, 40);
    const std::vector<Gaussian3D> scene = random_scene(rng, cam, 30);
    const RenderResult r = render(scene, cam, {});
    ImageBuffer d_image(40, 40, Vec3(1, 0, 0));
    const auto grads = accumulate_image_backward(r, scene, d_image, {});

    // Independent replay over the full depth-sorted list.
    std::vector<std::size_t> order(r.projected.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::make_pair(r.projected[a].depth, r.projected[a].source_index) <
               std::make_pair(r.projected[b].depth, r.projected[b].source_index);
    });
    std::vector<double> weights(r.projected.size(), 0.0);
    for (int row = 0; row < 40; ++row) {
        for (int col = 0; col < 40; ++col) {
            double t = 1.0;
            for (std::size_t i : order) {
                const AlphaSample s = eval_alpha(r.projected[i], scene[r.projected[i].source_index].opacity,
                                                 Vec2(col + 0.5, row + 0.5));
                if (!s.active())
                    continue;
                weights[i] += s.alpha * t;
                t *= 1.0 - s.alpha;
                if (t < kTransmittanceMin)
                    break;
            }
        }
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        EXPECT_NEAR(grads[i].d_color.x(), weights[i], 1e-10);
        EXPECT_EQ(grads[i].d_color.y(), 0.0);
    }
}

TEST(ImageBackward, IndependentOfThreadCount) {
    std::mt19937_64 rng(45);
    const Camera cam = random_camera(rng, 64, 64);
    const std::vector<Gaussian3D> scene = random_scene(rng, cam, 50);
    const RenderResult r = render(scene, cam, {});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ImageBuffer d_image(64, 64);
    for (Vec3& px : d_image.pixels)
        px = Vec3(u(rng), u(rng), u(rng));
    RenderOptions o1, o4;
    o4.threads = 4;
    const auto a = accumulate_image_backward(r, scene, d_image, o1);
    const auto b = accumulate_image_backward(r, scene, d_image, o4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].d_color, b[i].d_color);
        EXPECT_EQ(a[i].d_opacity, b[i].d_opacity);
        EXPECT_EQ(a[i].d_mean2d, b[i].d_mean2d);
        EXPECT_EQ(a[i].d_cov2d, b[i].d_cov2d);
    }
}
