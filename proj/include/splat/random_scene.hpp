#pragma once

#include "splat/core.hpp"
#include "splat/projection.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace splat {

struct RandomSceneParams {
    double depth_min = 3.0;
    double depth_max = 6.0;
    /// Centers are drawn from the inner (1 - 2 * border) fraction of the image.
    double border = 0.15;
    double sigma_px_min = 1.0;
    double sigma_px_max = 3.0;
    double anisotropy = 0.4;
    double opacity_min = 0.3;
    double opacity_max = 0.9;
    double color_min = 0.05;
    double color_max = 0.95;
};

/// Rigid view looking at the world origin from about `distance` units, with a
/// random rotation of at most `max_angle` radians and intrinsics roughly
/// matched to the image size.
inline Camera random_camera(std::mt19937_64& rng, int width, int height, double max_angle = 0.3,
                            double distance = 4.5) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Camera cam;
    cam.width = width;
    cam.height = height;
    Vec3 axis(unit(rng), unit(rng), unit(rng));
    if (axis.norm() < 1e-3)
        axis = Vec3::UnitY();
    const double angle = max_angle * u01(rng);
    cam.view.topLeftCorner<3, 3>() = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    cam.view.topRightCorner<3, 1>() = Vec3(0.3 * unit(rng), 0.3 * unit(rng), distance + 0.3 * unit(rng));
    cam.fx = width * (0.9 + 0.4 * u01(rng));
    cam.fy = height * (0.9 + 0.4 * u01(rng));
    cam.cx = width / 2.0 - 0.5 + unit(rng);
    cam.cy = height / 2.0 - 0.5 + unit(rng);
    cam.near = 0.1;
    cam.far = 100.0;
    return cam;
}

/// Gaussians placed in the camera frustum with footprints of a few pixels.
inline std::vector<Gaussian3D> random_scene(std::mt19937_64& rng, const Camera& camera, std::size_t count,
                                            const RandomSceneParams& params = {}) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto lerp = [&](double a, double b) { return a + (b - a) * u01(rng); };
    std::vector<Gaussian3D> scene(count);
    for (Gaussian3D& g : scene) {
        const double depth = lerp(params.depth_min, params.depth_max);
        const Vec2 pixel(lerp(params.border, 1.0 - params.border) * camera.width,
                         lerp(params.border, 1.0 - params.border) * camera.height);
        g.mean = pixel_to_world(pixel, depth, camera);
        const double base = lerp(params.sigma_px_min, params.sigma_px_max) * depth / camera.fx;
        for (int k = 0; k < 3; ++k)
            g.scale[k] = base * lerp(1.0 - params.anisotropy, 1.0 + params.anisotropy);
        do {
            g.quat = Vec4(normal(rng), normal(rng), normal(rng), normal(rng));
        } while (g.quat.norm() < 0.1);
        g.opacity = lerp(params.opacity_min, params.opacity_max);
        g.color = Vec3(lerp(params.color_min, params.color_max), lerp(params.color_min, params.color_max),
                       lerp(params.color_min, params.color_max));
    }
    return scene;
}

}  // namespace splat
