#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace splat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

enum class ErrorKind {
    invalid_input,
    degenerate_projection,
    degenerate_covariance,
    behind_camera,
    oracle_failure,
    parse_error,
    io_error,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::degenerate_projection: return "degenerate projection";
    case ErrorKind::degenerate_covariance: return "degenerate covariance";
    case ErrorKind::behind_camera: return "behind camera";
    case ErrorKind::oracle_failure: return "oracle failure";
    case ErrorKind::parse_error: return "parse error";
    case ErrorKind::io_error: return "i/o error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// One splat's optimizable parameters. The quaternion is stored in (w, x, y, z)
/// order and is normalized on use, never on storage.
struct Gaussian3D {
    Vec3 mean = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Vec4 quat = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity = 1.0;
    Vec3 color = Vec3::Zero();
};

inline void validate(const Gaussian3D& g) {
    if (!(g.scale.array() > 0.0).all())
        throw Error(ErrorKind::invalid_input, "scale components must be > 0");
    if (!(g.quat.norm() > 1e-12))
        throw Error(ErrorKind::invalid_input, "quaternion has near-zero norm");
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0))
        throw Error(ErrorKind::invalid_input, "opacity must lie in [0,1]");
    if (!((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all()))
        throw Error(ErrorKind::invalid_input, "color channels must lie in [0,1]");
}

/// Pinhole camera. `view` maps world points to camera space (T_cw).
///
/// The rotation block is not re-checked during rendering: finite-difference
/// probes perturb individual view entries and must stay renderable.
struct Camera {
    Mat4 view = Mat4::Identity();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double near = 0.01;
    double far = 100.0;

    Mat3 rotation() const { return view.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return view.topRightCorner<3, 1>(); }

    /// Camera-space to clip-space matrix P.
    Mat4 projection() const {
        Mat4 p = Mat4::Zero();
        p(0, 0) = 2.0 * fx / width;
        p(1, 1) = 2.0 * fy / height;
        p(2, 2) = (far + near) / (far - near);
        p(2, 3) = -2.0 * far * near / (far - near);
        p(3, 2) = 1.0;
        return p;
    }
};

inline void validate(const Camera& cam) {
    const Mat3 r = cam.rotation();
    if (!((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9))
        throw Error(ErrorKind::invalid_input, "camera.view rotation block is not orthonormal");
    if (!(std::abs(r.determinant() - 1.0) <= 1e-9))
        throw Error(ErrorKind::invalid_input, "camera.view rotation block must have determinant +1");
    if (!(cam.view.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).isZero(0.0))
        throw Error(ErrorKind::invalid_input, "camera.view bottom row must be (0,0,0,1)");
    if (!(cam.near > 0.0 && cam.near < cam.far))
        throw Error(ErrorKind::invalid_input, "camera clip planes must satisfy 0 < near < far");
    if (cam.width < 1 || cam.height < 1)
        throw Error(ErrorKind::invalid_input, "camera width and height must be >= 1");
    if (!(cam.fx > 0.0 && cam.fy > 0.0))
        throw Error(ErrorKind::invalid_input, "camera focal lengths must be > 0");
}

struct Cov3DBundle {
    Mat3 R;
    Mat3 S;
    Mat3 M;
    Mat3 sigma;
};

/// Rotation matrix of the normalized quaternion (w, x, y, z).
inline Mat3 quat_to_rotmat(const Vec4& quat) {
    const double n = quat.norm();
    if (!(n > 1e-12))
        throw Error(ErrorKind::invalid_input, "quaternion has near-zero norm");
    const double w = quat[0] / n;
    const double x = quat[1] / n;
    const double y = quat[2] / n;
    const double z = quat[3] / n;
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

inline Cov3DBundle compose_covariance_3d(const Vec4& quat, const Vec3& scale) {
    if (!(scale.array() > 0.0).all())
        throw Error(ErrorKind::invalid_input, "scale components must be > 0");
    Cov3DBundle b;
    b.R = quat_to_rotmat(quat);
    b.S = scale.asDiagonal();
    b.M = b.R * b.S;
    // Written out so sigma(i,j) and sigma(j,i) use identical operation order.
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            b.sigma(i, j) = b.M(i, 0) * b.M(j, 0) + b.M(i, 1) * b.M(j, 1) + b.M(i, 2) * b.M(j, 2);
    return b;
}

/// Matrix dot product Tr(X^T Y).
template <typename A, typename B>
double frobenius_inner(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw Error(ErrorKind::invalid_input, "frobenius_inner: shape mismatch");
    return x.cwiseProduct(y).sum();
}

}  // namespace splat
