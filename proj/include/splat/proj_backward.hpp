#pragma once

#include "splat/core.hpp"
#include "splat/parallel.hpp"
#include "splat/projection.hpp"
#include "splat/raster_backward.hpp"

#include <span>
#include <vector>

namespace splat {

struct GaussianGrads {
    Vec3 d_mean = Vec3::Zero();
    Vec3 d_scale = Vec3::Zero();
    Vec4 d_quat = Vec4::Zero();
    double d_opacity = 0.0;
    Vec3 d_color = Vec3::Zero();
};

/// Loss gradients for every Gaussian field plus the full 4x4 view matrix.
struct SceneGradients {
    std::vector<GaussianGrads> gaussians;
    Mat4 d_view = Mat4::Zero();
};

/// Gradient of the 2D mean's loss contribution with respect to the homogeneous
/// camera-space point, differentiating the pixel mapping through t' = P t.
inline Vec4 mean2d_backward(const Vec2& d_mean2d, const Vec4& t_cam, const Camera& camera) {
    const Mat4 proj = camera.projection();
    const Vec4 clip = proj * t_cam;
    const double tw = clip.w();
    if (!(std::abs(tw) >= 1e-12))
        throw Error(ErrorKind::degenerate_projection, "mean2d_backward: |t'_w| < 1e-12");
    Eigen::Matrix<double, 2, 4> d_pix_d_clip;
    d_pix_d_clip << camera.width / tw, 0.0, 0.0, -camera.width * clip.x() / (tw * tw),
        0.0, camera.height / tw, 0.0, -camera.height * clip.y() / (tw * tw);
    return 0.5 * proj.transpose() * (d_pix_d_clip.transpose() * d_mean2d);
}

struct Cov2DBackward {
    Mat3 d_sigma = Mat3::Zero();
    Vec4 d_t = Vec4::Zero();
    /// Covariance-path gradient of the view rotation block.
    Mat3 d_rot = Mat3::Zero();
};

/// Backward of cov2d = T sigma T^T with T = J(t) R_cw. Dilation passes the
/// gradient through unchanged.
inline Cov2DBackward cov2d_backward(const Mat2& d_cov2d, const Mat23& t_proj, const Mat3& sigma, const Mat23& jac,
                                    const Mat3& rot_cw, const Vec4& t_cam, const Camera& camera) {
    Cov2DBackward out;
    out.d_sigma = t_proj.transpose() * d_cov2d * t_proj;
    const Mat23 d_t_proj = d_cov2d * t_proj * sigma.transpose() + d_cov2d.transpose() * t_proj * sigma;
    const Mat23 d_jac = d_t_proj * rot_cw.transpose();
    out.d_rot = jac.transpose() * d_t_proj;

    const double tx = t_cam.x();
    const double ty = t_cam.y();
    const double tz = t_cam.z();
    const double fx = camera.fx;
    const double fy = camera.fy;
    const double tz2 = tz * tz;
    const double tz3 = tz2 * tz;
    Mat23 dj_dtx;
    dj_dtx << 0.0, 0.0, -fx / tz2, 0.0, 0.0, 0.0;
    Mat23 dj_dty;
    dj_dty << 0.0, 0.0, 0.0, 0.0, 0.0, -fy / tz2;
    Mat23 dj_dtz;
    dj_dtz << -fx / tz2, 0.0, 2.0 * fx * tx / tz3, 0.0, -fy / tz2, 2.0 * fy * ty / tz3;
    out.d_t = Vec4(frobenius_inner(d_jac, dj_dtx), frobenius_inner(d_jac, dj_dty), frobenius_inner(d_jac, dj_dtz), 0.0);
    return out;
}

struct WorldBackward {
    Vec3 d_mean = Vec3::Zero();
    Mat4 d_view = Mat4::Zero();
};

/// Backward of t = T_cw [mean 1]^T.
inline WorldBackward world_backward(const Vec4& d_t_total, const Camera& camera, const Vec3& mean) {
    WorldBackward out;
    out.d_view = d_t_total * Vec4(mean.x(), mean.y(), mean.z(), 1.0).transpose();
    out.d_mean = camera.rotation().transpose() * d_t_total.head<3>();
    return out;
}

struct Cov3DBackward {
    Vec4 d_quat = Vec4::Zero();
    Vec3 d_scale = Vec3::Zero();
};

/// Backward of sigma = (R S)(R S)^T to the raw (unnormalized) quaternion and
/// the scale vector.
inline Cov3DBackward covariance3d_backward(const Mat3& d_sigma, const Cov3DBundle& bundle, const Vec4& quat,
                                           [[maybe_unused]] const Vec3& scale) {
    Cov3DBackward out;
    const Mat3 d_m = d_sigma * bundle.M + d_sigma.transpose() * bundle.M;
    const Mat3 d_r = d_m * bundle.S.transpose();
    const Mat3 d_s = bundle.R.transpose() * d_m;
    out.d_scale = d_s.diagonal();

    const double n = quat.norm();
    const Vec4 u = quat / n;
    const double w = u[0], x = u[1], y = u[2], z = u[3];
    Mat3 dr_dw, dr_dx, dr_dy, dr_dz;
    dr_dw << 0, -z, y, z, 0, -x, -y, x, 0;
    dr_dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    dr_dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    dr_dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    const Vec4 d_unit = 2.0 * Vec4(frobenius_inner(d_r, dr_dw), frobenius_inner(d_r, dr_dx),
                                   frobenius_inner(d_r, dr_dy), frobenius_inner(d_r, dr_dz));
    // Chain through u = q / |q|: du/dq = (I - u u^T) / |q|.
    out.d_quat = (d_unit - u * u.dot(d_unit)) / n;
    return out;
}

/// Full backward pass: image gradients to every Gaussian parameter and the view
/// matrix. `fwd` must come from render() on the same scene, camera and options.
inline SceneGradients scene_backward(std::span<const Gaussian3D> scene, const Camera& camera, const RenderResult& fwd,
                                     const ImageBuffer& d_image, const RenderOptions& options) {
    const std::vector<Splat2DGrads> grads2d = accumulate_image_backward(fwd, scene, d_image, options);

    SceneGradients out;
    out.gaussians.assign(scene.size(), GaussianGrads{});
    std::vector<Mat4> view_parts(fwd.projected.size(), Mat4::Zero());
    const Mat3 rot_cw = camera.rotation();

    parallel_for(fwd.projected.size(), options.threads, [&](std::size_t i) {
        const ProjectedGaussian& p = fwd.projected[i];
        const Gaussian3D& g = scene[p.source_index];
        const Splat2DGrads& g2 = grads2d[i];
        GaussianGrads& dst = out.gaussians[p.source_index];
        dst.d_color = g2.d_color;
        dst.d_opacity = g2.d_opacity;

        const Cov3DBundle bundle = compose_covariance_3d(g.quat, g.scale);
        const Mat23 jac = projection_jacobian(p.t_cam, camera);
        const Mat23 t_proj = jac * rot_cw;
        const Vec4 d_t_mean = mean2d_backward(g2.d_mean2d, p.t_cam, camera);
        const Cov2DBackward cov = cov2d_backward(g2.d_cov2d, t_proj, bundle.sigma, jac, rot_cw, p.t_cam, camera);
        const WorldBackward world = world_backward(d_t_mean + cov.d_t, camera, g.mean);
        const Cov3DBackward c3 = covariance3d_backward(cov.d_sigma, bundle, g.quat, g.scale);

        dst.d_mean = world.d_mean;
        dst.d_quat = c3.d_quat;
        dst.d_scale = c3.d_scale;
        view_parts[i] = world.d_view;
        view_parts[i].topLeftCorner<3, 3>() += cov.d_rot;
    });

    for (const Mat4& part : view_parts)
        out.d_view += part;
    return out;
}

}  // namespace splat
