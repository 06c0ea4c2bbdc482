#pragma once

#include "splat/core.hpp"

#include <cmath>
#include <cstddef>
#include <optional>

namespace splat {

/// Added to both diagonal entries of the 2D covariance (pixels^2).
inline constexpr double kCovDilation = 0.3;

struct ProjectedGaussian {
    Vec4 t_cam = Vec4::Zero();
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    double depth = 0.0;
    double radius = 0.0;
    std::size_t source_index = 0;
};

inline Vec4 world_to_camera(const Vec3& mean, const Camera& camera) {
    return camera.view * Vec4(mean.x(), mean.y(), mean.z(), 1.0);
}

inline Vec2 camera_to_pixel(const Vec4& t_cam, const Camera& camera) {
    const Vec4 clip = camera.projection() * t_cam;
    if (!(std::abs(clip.w()) >= 1e-12))
        throw Error(ErrorKind::degenerate_projection, "camera_to_pixel: |t'_w| < 1e-12");
    return {(camera.width * clip.x() / clip.w() + 1.0) / 2.0 + camera.cx,
            (camera.height * clip.y() / clip.w() + 1.0) / 2.0 + camera.cy};
}

/// World point that projects to `pixel` at camera-space depth `depth`.
/// Assumes the view rotation block is orthonormal.
inline Vec3 pixel_to_world(const Vec2& pixel, double depth, const Camera& camera) {
    const Vec3 cam((pixel.x() - 0.5 - camera.cx) * depth / camera.fx,
                   (pixel.y() - 0.5 - camera.cy) * depth / camera.fy, depth);
    return camera.rotation().transpose() * (cam - camera.translation());
}

/// Local affine approximation of the perspective map at t_cam.
inline Mat23 projection_jacobian(const Vec4& t_cam, const Camera& camera) {
    const double tz = t_cam.z();
    if (!(tz > 0.0))
        throw Error(ErrorKind::behind_camera, "projection_jacobian: point is behind the camera");
    Mat23 j;
    j << camera.fx / tz, 0.0, -camera.fx * t_cam.x() / (tz * tz),
        0.0, camera.fy / tz, -camera.fy * t_cam.y() / (tz * tz);
    return j;
}

/// J R_cw sigma R_cw^T J^T plus dilation. The result is exactly symmetric.
inline Mat2 project_covariance(const Mat23& jac, const Mat3& rot_cw, const Mat3& sigma) {
    const Mat23 t = jac * rot_cw;
    Mat2 cov = t * sigma * t.transpose();
    const double off = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 1) = off;
    cov(1, 0) = off;
    cov(0, 0) += kCovDilation;
    cov(1, 1) += kCovDilation;
    return cov;
}

/// ceil(3 sqrt(lambda_max)) of a symmetric positive-definite 2x2.
inline double bounding_radius(const Mat2& cov2d) {
    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
    if (!(det > 0.0) || !(cov2d(0, 0) > 0.0))
        throw Error(ErrorKind::degenerate_covariance, "bounding_radius: covariance is not positive definite");
    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    return std::ceil(3.0 * std::sqrt(lambda_max));
}

/// Full per-Gaussian projection. Returns nullopt when the Gaussian lies outside
/// the clip range or its bounding square misses the image.
inline std::optional<ProjectedGaussian> project_gaussian(const Gaussian3D& g, const Camera& camera,
                                                         std::size_t source_index = 0) {
    ProjectedGaussian p;
    p.source_index = source_index;
    p.t_cam = world_to_camera(g.mean, camera);
    p.depth = p.t_cam.z();
    if (!(p.depth > camera.near && p.depth < camera.far))
        return std::nullopt;

    const Cov3DBundle cov3d = compose_covariance_3d(g.quat, g.scale);
    const Mat23 jac = projection_jacobian(p.t_cam, camera);
    p.cov2d = project_covariance(jac, camera.rotation(), cov3d.sigma);
    p.mean2d = camera_to_pixel(p.t_cam, camera);
    p.radius = bounding_radius(p.cov2d);

    if (p.mean2d.x() + p.radius < 0.0 || p.mean2d.x() - p.radius > camera.width ||
        p.mean2d.y() + p.radius < 0.0 || p.mean2d.y() - p.radius > camera.height)
        return std::nullopt;
    return p;
}

}  // namespace splat
