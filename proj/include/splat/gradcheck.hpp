#pragma once

#include "splat/loss.hpp"
#include "splat/parallel.hpp"
#include "splat/proj_backward.hpp"
#include "splat/random_scene.hpp"
#include "splat/raster_forward.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace splat {

enum class ParamClass { mean, scale, quat, opacity, color, view };

inline constexpr std::array<ParamClass, 6> kParamClasses = {ParamClass::mean,    ParamClass::scale,
                                                            ParamClass::quat,    ParamClass::opacity,
                                                            ParamClass::color,   ParamClass::view};

inline const char* to_string(ParamClass c) {
    switch (c) {
    case ParamClass::mean: return "mean";
    case ParamClass::scale: return "scale";
    case ParamClass::quat: return "quat";
    case ParamClass::opacity: return "opacity";
    case ParamClass::color: return "color";
    case ParamClass::view: return "view";
    }
    return "?";
}

inline std::optional<ParamClass> param_class_from_string(const std::string& s) {
    for (ParamClass c : kParamClasses)
        if (s == to_string(c))
            return c;
    return std::nullopt;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& probe,
                                             const std::vector<double>& params, double h, int threads = 1) {
    std::vector<double> grad(params.size(), 0.0);
    parallel_for(params.size(), threads, [&](std::size_t i) {
        std::vector<double> x = params;
        x[i] = params[i] + h;
        const double up = probe(x);
        x[i] = params[i] - h;
        const double down = probe(x);
        if (!std::isfinite(up) || !std::isfinite(down))
            throw Error(ErrorKind::oracle_failure, "finite_difference: probe returned a non-finite value at coordinate " +
                                                       std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    });
    return grad;
}

// Flat parameter layout: 14 values per Gaussian (mean 3, scale 3, quat 4,
// opacity 1, color 3) followed by the top three rows of the view matrix.
inline constexpr std::size_t kParamsPerGaussian = 14;
inline constexpr std::size_t kViewParams = 12;

struct ParamRef {
    ParamClass cls;
    std::size_t gaussian;
    int component;
};

inline std::vector<ParamRef> parameter_layout(std::size_t n_gaussians) {
    std::vector<ParamRef> refs;
    refs.reserve(n_gaussians * kParamsPerGaussian + kViewParams);
    for (std::size_t i = 0; i < n_gaussians; ++i) {
        for (int k = 0; k < 3; ++k) refs.push_back({ParamClass::mean, i, k});
        for (int k = 0; k < 3; ++k) refs.push_back({ParamClass::scale, i, k});
        for (int k = 0; k < 4; ++k) refs.push_back({ParamClass::quat, i, k});
        refs.push_back({ParamClass::opacity, i, 0});
        for (int k = 0; k < 3; ++k) refs.push_back({ParamClass::color, i, k});
    }
    for (int k = 0; k < static_cast<int>(kViewParams); ++k)
        refs.push_back({ParamClass::view, 0, k});
    return refs;
}

inline std::string describe(const ParamRef& r) {
    std::ostringstream os;
    if (r.cls == ParamClass::view)
        os << "view[" << r.component / 4 << "][" << r.component % 4 << "]";
    else if (r.cls == ParamClass::opacity)
        os << "gaussians[" << r.gaussian << "].opacity";
    else
        os << "gaussians[" << r.gaussian << "]." << to_string(r.cls) << "[" << r.component << "]";
    return os.str();
}

inline std::vector<double> pack_parameters(std::span<const Gaussian3D> scene, const Camera& camera) {
    std::vector<double> x;
    x.reserve(scene.size() * kParamsPerGaussian + kViewParams);
    for (const Gaussian3D& g : scene) {
        x.insert(x.end(), g.mean.data(), g.mean.data() + 3);
        x.insert(x.end(), g.scale.data(), g.scale.data() + 3);
        x.insert(x.end(), g.quat.data(), g.quat.data() + 4);
        x.push_back(g.opacity);
        x.insert(x.end(), g.color.data(), g.color.data() + 3);
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            x.push_back(camera.view(r, c));
    return x;
}

inline void unpack_parameters(std::span<const double> x, std::vector<Gaussian3D>& scene, Camera& camera) {
    std::size_t at = 0;
    for (Gaussian3D& g : scene) {
        for (int k = 0; k < 3; ++k) g.mean[k] = x[at++];
        for (int k = 0; k < 3; ++k) g.scale[k] = x[at++];
        for (int k = 0; k < 4; ++k) g.quat[k] = x[at++];
        g.opacity = x[at++];
        for (int k = 0; k < 3; ++k) g.color[k] = x[at++];
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            camera.view(r, c) = x[at++];
}

inline std::vector<double> pack_gradients(const SceneGradients& grads) {
    std::vector<double> x;
    x.reserve(grads.gaussians.size() * kParamsPerGaussian + kViewParams);
    for (const GaussianGrads& g : grads.gaussians) {
        x.insert(x.end(), g.d_mean.data(), g.d_mean.data() + 3);
        x.insert(x.end(), g.d_scale.data(), g.d_scale.data() + 3);
        x.insert(x.end(), g.d_quat.data(), g.d_quat.data() + 4);
        x.push_back(g.d_opacity);
        x.insert(x.end(), g.d_color.data(), g.d_color.data() + 3);
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            x.push_back(grads.d_view(r, c));
    return x;
}

struct Tolerances {
    double rel = 1e-4;
    double abs = 1e-8;
    double h = 1e-5;
    /// Coordinates whose gradient magnitude exceeds this are judged by
    /// relative error, the rest by absolute error.
    double significance = 1e-7;
};

struct ClassReport {
    ParamClass cls = ParamClass::mean;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool pass = true;
};

struct GradReport {
    std::vector<ClassReport> classes;
    bool pass = true;

    const ClassReport& at(ParamClass c) const {
        for (const ClassReport& r : classes)
            if (r.cls == c)
                return r;
        throw Error(ErrorKind::invalid_input, "GradReport: missing class");
    }
};

struct AuditOptions {
    Tolerances tol;
    RenderOptions render;
    /// Negates one analytic gradient block before comparison (fault injection).
    std::optional<ParamClass> negate_class;
};

inline GradReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                    std::span<const ParamRef> layout, const Tolerances& tol) {
    GradReport report;
    std::array<double, kParamClasses.size()> worst_score{};
    for (ParamClass c : kParamClasses) {
        ClassReport cr;
        cr.cls = c;
        report.classes.push_back(cr);
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        ClassReport& cr = report.classes[static_cast<std::size_t>(layout[i].cls)];
        const double a = analytic[i];
        const double n = numeric[i];
        const double err = std::abs(a - n);
        const double mag = std::max(std::abs(a), std::abs(n));
        ++cr.count;
        cr.max_abs_error = std::max(cr.max_abs_error, err);
        double score;
        if (mag > tol.significance) {
            const double rel = err / mag;
            cr.max_rel_error = std::max(cr.max_rel_error, rel);
            score = rel / tol.rel;
        } else {
            score = err / tol.abs;
        }
        if (!std::isfinite(score))
            score = std::numeric_limits<double>::infinity();
        if (score > 1.0)
            cr.pass = false;
        double& ws = worst_score[static_cast<std::size_t>(layout[i].cls)];
        if (cr.worst.empty() || score > ws) {
            ws = score;
            cr.worst = describe(layout[i]);
            cr.worst_analytic = a;
            cr.worst_numeric = n;
        }
    }
    for (const ClassReport& cr : report.classes)
        report.pass = report.pass && cr.pass;
    return report;
}

/// Audits the analytic gradient of L = sum ||render - target||^2 against
/// central finite differences over every Gaussian field and the 12 upper
/// entries of the view matrix.
inline GradReport audit_scene(std::span<const Gaussian3D> scene, const Camera& camera, const ImageBuffer& target,
                              const AuditOptions& options = {}) {
    const RenderOptions& ro = options.render;
    const RenderResult fwd = render(scene, camera, ro);
    const SceneGradients grads = scene_backward(scene, camera, fwd, l2_loss_gradient(fwd.image, target), ro);
    std::vector<double> analytic = pack_gradients(grads);
    const std::vector<ParamRef> layout = parameter_layout(scene.size());
    if (options.negate_class)
        for (std::size_t i = 0; i < layout.size(); ++i)
            if (layout[i].cls == *options.negate_class)
                analytic[i] = -analytic[i];

    const std::vector<Gaussian3D> base(scene.begin(), scene.end());
    RenderOptions probe_ro = ro;
    probe_ro.threads = 1;
    const auto probe = [&](std::span<const double> x) {
        std::vector<Gaussian3D> s = base;
        Camera cam = camera;
        unpack_parameters(x, s, cam);
        return l2_loss(render(s, cam, probe_ro).image, target);
    };
    const std::vector<double> numeric =
        finite_difference(probe, pack_parameters(scene, camera), options.tol.h, ro.threads);
    return compare_gradients(analytic, numeric, layout, options.tol);
}

/// Discrete structure of a render: cull set, radii, and for every pixel which
/// list entries were active or clamped and where the loop stopped. Two renders
/// with equal structure lie on the same smooth piece of the loss.
inline std::vector<std::int64_t> render_structure(std::span<const Gaussian3D> scene, const Camera& camera,
                                                  const RenderOptions& options) {
    RenderOptions ro = options;
    ro.threads = 1;
    const RenderResult r = render(scene, camera, ro);
    std::vector<std::int64_t> sig;
    for (const ProjectedGaussian& p : r.projected) {
        sig.push_back(static_cast<std::int64_t>(p.source_index));
        sig.push_back(static_cast<std::int64_t>(p.radius));
    }
    for (int row = 0; row < camera.height; ++row) {
        for (int col = 0; col < camera.width; ++col) {
            const std::size_t idx = r.aux.index(col, row);
            const auto& bin = r.grid.bin_for_pixel(col, row);
            sig.push_back(-1);
            sig.push_back(r.aux.range_end[idx]);
            for (std::uint32_t k = 0; k < r.aux.range_end[idx]; ++k) {
                const ProjectedGaussian& p = r.projected[bin[k]];
                const AlphaSample s = eval_alpha(p, scene[p.source_index].opacity, pixel_center(col, row));
                if (s.active())
                    sig.push_back(static_cast<std::int64_t>(p.source_index) * 2 + (s.clamped ? 1 : 0));
            }
        }
    }
    return sig;
}

/// True when no +/-h probe of any parameter, for each h in `steps`, changes
/// the render structure.
inline bool structurally_stable(std::span<const Gaussian3D> scene, const Camera& camera, const RenderOptions& options,
                                std::span<const double> steps) {
    const std::vector<std::int64_t> nominal = render_structure(scene, camera, options);
    const std::vector<double> x0 = pack_parameters(scene, camera);
    const std::vector<Gaussian3D> base(scene.begin(), scene.end());
    for (double h : steps) {
        for (std::size_t i = 0; i < x0.size(); ++i) {
            for (double sign : {1.0, -1.0}) {
                std::vector<double> x = x0;
                x[i] += sign * h;
                std::vector<Gaussian3D> s = base;
                Camera cam = camera;
                unpack_parameters(x, s, cam);
                if (render_structure(s, cam, options) != nominal)
                    return false;
            }
        }
    }
    return true;
}

struct AuditCase {
    std::vector<Gaussian3D> scene;
    Camera camera;
    ImageBuffer target;
    RenderOptions render;
};

/// Deterministic audit scene for `seed`: 5-10 Gaussians, 16x16 for even seeds
/// and 32x32 for odd ones, random background and a uniform-noise target.
/// Candidates whose structure changes under probes of size 1e-5 or 1e-4 are
/// redrawn, so finite differences never straddle a threshold.
inline AuditCase make_audit_case(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> count(5, 10);
    const int size = (seed % 2 == 0) ? 16 : 32;
    const std::array<double, 2> steps = {1e-5, 1e-4};
    for (int attempt = 0; attempt < 500; ++attempt) {
        AuditCase c;
        c.camera = random_camera(rng, size, size);
        c.scene = random_scene(rng, c.camera, static_cast<std::size_t>(count(rng)));
        c.render.background = Vec3(u01(rng), u01(rng), u01(rng));
        c.target = ImageBuffer(size, size);
        for (Vec3& px : c.target.pixels)
            px = Vec3(u01(rng), u01(rng), u01(rng));
        if (structurally_stable(c.scene, c.camera, c.render, steps))
            return c;
    }
    throw Error(ErrorKind::oracle_failure, "make_audit_case: no structurally stable scene found");
}

inline std::string format_report(const GradReport& report) {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(3);
    os << "class     count  max_rel    max_abs    status  worst\n";
    for (const ClassReport& c : report.classes) {
        os << std::left;
        os.width(9);
        os << to_string(c.cls) << " ";
        os.width(6);
        os << c.count << " " << c.max_rel_error << "  " << c.max_abs_error << "  " << (c.pass ? "PASS  " : "FAIL  ")
           << "  " << c.worst << " (analytic " << c.worst_analytic << ", numeric " << c.worst_numeric << ")\n";
    }
    os << "overall: " << (report.pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

}  // namespace splat
