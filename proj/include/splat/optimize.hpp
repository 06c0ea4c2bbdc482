#pragma once

#include "splat/loss.hpp"
#include "splat/proj_backward.hpp"
#include "splat/raster_forward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <vector>

namespace splat {

struct FitConfig {
    std::size_t n_gaussians = 100;
    std::size_t iterations = 1000;
    double lr_mean = 2e-3;
    double lr_log_scale = 1e-2;
    double lr_quat = 1e-2;
    double lr_logit_opacity = 2e-2;
    double lr_color = 1e-2;
    std::uint64_t seed = 0;
    Vec3 background = Vec3::Zero();
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Initial depths are uniform in [near + depth_margin, min(far, near + depth_span)].
    double depth_margin = 2.9;
    double depth_span = 5.9;
    /// Every learning rate decays exponentially to this fraction of its
    /// initial value by the last iteration.
    double lr_final_fraction = 0.03;
    int threads = 1;
};

inline void validate(const FitConfig& c) {
    const bool rates_ok = c.lr_mean > 0 && c.lr_log_scale > 0 && c.lr_quat > 0 && c.lr_logit_opacity > 0 &&
                          c.lr_color > 0;
    if (!rates_ok)
        throw Error(ErrorKind::invalid_input, "FitConfig: learning rates must be > 0");
    if (!(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1 && c.epsilon > 0))
        throw Error(ErrorKind::invalid_input, "FitConfig: invalid moment decay rates or epsilon");
    if (!(c.lr_final_fraction > 0 && c.lr_final_fraction <= 1))
        throw Error(ErrorKind::invalid_input, "FitConfig: lr_final_fraction must lie in (0,1]");
    if (!(c.depth_margin >= 0 && c.depth_span > c.depth_margin))
        throw Error(ErrorKind::invalid_input, "FitConfig: depth_span must exceed depth_margin");
}

/// Random initial scene: centers uniform over the image at random depths,
/// isotropic footprints of about image_area / n pixels, colors read from the
/// target under each center, opacity 0.5.
inline std::vector<Gaussian3D> init_random(const FitConfig& config, const Camera& camera, const ImageBuffer& target) {
    validate(config);
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double depth_lo = camera.near + config.depth_margin;
    const double depth_hi = std::min(camera.far, camera.near + config.depth_span);
    const double area = static_cast<double>(camera.width) * camera.height;
    const double sigma_px =
        config.n_gaussians > 0 ? std::sqrt(area / (3.14159265358979323846 * static_cast<double>(config.n_gaussians)))
                               : 1.0;

    std::vector<Gaussian3D> scene(config.n_gaussians);
    for (Gaussian3D& g : scene) {
        const double depth = depth_lo + (depth_hi - depth_lo) * u01(rng);
        const Vec2 pixel(u01(rng) * camera.width, u01(rng) * camera.height);
        g.mean = pixel_to_world(pixel, depth, camera);
        g.scale = Vec3::Constant(sigma_px * depth / camera.fx);
        g.quat = Vec4(1.0, 0.0, 0.0, 0.0);
        g.opacity = 0.5;
        const int col = std::clamp(static_cast<int>(std::floor(pixel.x())), 0, target.width - 1);
        const int row = std::clamp(static_cast<int>(std::floor(pixel.y())), 0, target.height - 1);
        g.color = target.at(col, row).cwiseMax(0.0).cwiseMin(1.0);
    }
    return scene;
}

struct FitResult {
    std::vector<Gaussian3D> scene;
    std::vector<double> loss_history;
};

namespace detail {

// Unconstrained coordinates per Gaussian: mean 3, log-scale 3, quat 4,
// logit-opacity 1, color 3.
inline constexpr std::size_t kRawPerGaussian = 14;

inline double logit(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

/// Gradient-descent image fit starting from `initial`.
inline FitResult fit(const ImageBuffer& target, const Camera& camera, const FitConfig& config,
                     std::vector<Gaussian3D> initial) {
    validate(config);
    if (target.width != camera.width || target.height != camera.height)
        throw Error(ErrorKind::invalid_input, "fit: target size does not match camera");

    const std::size_t n = initial.size();
    const std::size_t dim = n * detail::kRawPerGaussian;
    std::vector<double> raw(dim), lr(dim), m(dim, 0.0), v(dim, 0.0), grad(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian3D& g = initial[i];
        double* x = raw.data() + i * detail::kRawPerGaussian;
        double* r = lr.data() + i * detail::kRawPerGaussian;
        for (int k = 0; k < 3; ++k) { x[k] = g.mean[k]; r[k] = config.lr_mean; }
        for (int k = 0; k < 3; ++k) { x[3 + k] = std::log(g.scale[k]); r[3 + k] = config.lr_log_scale; }
        for (int k = 0; k < 4; ++k) { x[6 + k] = g.quat[k]; r[6 + k] = config.lr_quat; }
        x[10] = detail::logit(g.opacity);
        r[10] = config.lr_logit_opacity;
        for (int k = 0; k < 3; ++k) { x[11 + k] = g.color[k]; r[11 + k] = config.lr_color; }
    }

    FitResult result;
    result.scene = std::move(initial);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            double& c = raw[i * detail::kRawPerGaussian + 11 + k];
            c = std::clamp(c, 0.0, 1.0);
            result.scene[i].color[k] = c;
        }
    // Writes back only coordinates that moved, so an exact optimum is not
    // disturbed by log/exp and logit/sigmoid round-off.
    std::vector<char> moved(dim, 0);
    const auto apply = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            Gaussian3D& g = result.scene[i];
            double* x = raw.data() + i * detail::kRawPerGaussian;
            const char* mv = moved.data() + i * detail::kRawPerGaussian;
            for (int k = 0; k < 3; ++k)
                if (mv[k]) g.mean[k] = x[k];
            for (int k = 0; k < 3; ++k)
                if (mv[3 + k]) g.scale[k] = std::exp(x[3 + k]);
            for (int k = 0; k < 4; ++k)
                if (mv[6 + k]) g.quat[k] = x[6 + k];
            if (mv[10]) g.opacity = detail::sigmoid(x[10]);
            for (int k = 0; k < 3; ++k) {
                if (!mv[11 + k])
                    continue;
                x[11 + k] = std::clamp(x[11 + k], 0.0, 1.0);
                g.color[k] = x[11 + k];
            }
        }
    };

    RenderOptions ro;
    ro.background = config.background;
    ro.threads = config.threads;
    result.loss_history.reserve(config.iterations);
    double beta1_pow = 1.0;
    double beta2_pow = 1.0;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const RenderResult fwd = render(result.scene, camera, ro);
        const double loss = l2_loss(fwd.image, target);
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "fit: non-finite loss at iteration " << it;
            throw Error(ErrorKind::invalid_input, os.str());
        }
        result.loss_history.push_back(loss);
        const SceneGradients sg = scene_backward(result.scene, camera, fwd, l2_loss_gradient(fwd.image, target), ro);

        for (std::size_t i = 0; i < n; ++i) {
            const GaussianGrads& gg = sg.gaussians[i];
            const Gaussian3D& g = result.scene[i];
            double* d = grad.data() + i * detail::kRawPerGaussian;
            for (int k = 0; k < 3; ++k) d[k] = gg.d_mean[k];
            for (int k = 0; k < 3; ++k) d[3 + k] = g.scale[k] * gg.d_scale[k];
            for (int k = 0; k < 4; ++k) d[6 + k] = gg.d_quat[k];
            d[10] = g.opacity * (1.0 - g.opacity) * gg.d_opacity;
            for (int k = 0; k < 3; ++k) d[11 + k] = gg.d_color[k];
        }

        const double progress =
            config.iterations > 1 ? static_cast<double>(it) / static_cast<double>(config.iterations - 1) : 0.0;
        const double decay = std::pow(config.lr_final_fraction, progress);
        beta1_pow *= config.beta1;
        beta2_pow *= config.beta2;
        for (std::size_t j = 0; j < dim; ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * grad[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
            const double m_hat = m[j] / (1.0 - beta1_pow);
            const double v_hat = v[j] / (1.0 - beta2_pow);
            const double step = decay * lr[j] * m_hat / (std::sqrt(v_hat) + config.epsilon);
            raw[j] -= step;
            moved[j] = step != 0.0;
        }
        apply();
    }
    return result;
}

inline FitResult fit(const ImageBuffer& target, const Camera& camera, const FitConfig& config) {
    return fit(target, camera, config, init_random(config, camera, target));
}

/// Trailing moving average over `window` samples (shorter at the start).
inline std::vector<double> smooth_losses(const std::vector<double>& losses, std::size_t window) {
    std::vector<double> out(losses.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        sum += losses[i];
        if (i >= window)
            sum -= losses[i - window];
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

}  // namespace splat
