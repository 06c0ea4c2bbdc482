#include "splat/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace splat;

TEST(FiniteDifference, Square) {
    const auto g = finite_difference([](std::span<const double> x) { return x[0] * x[0]; }, {3.0}, 1e-5);
    EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDifference, Constant) {
    const auto g = finite_difference([](std::span<const double>) { return 4.2; }, {1.0, -2.0}, 1e-5);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], 0.0);
}

TEST(FiniteDifference, ExponentialDecay) {
    const auto g = finite_difference([](std::span<const double> x) { return std::exp(-x[0]) + 2.0 * x[1]; },
                                     {0.7, 5.0}, 1e-5, 2);
    EXPECT_NEAR(g[0], -std::exp(-0.7), 1e-9);
    EXPECT_NEAR(g[1], 2.0, 1e-9);
}

TEST(FiniteDifference, NonFiniteProbeIsOracleFailure) {
    try {
        finite_difference([](std::span<const double> x) { return std::log(x[0]); }, {0.0}, 1e-5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::oracle_failure);
    }
}

TEST(Layout, PackRoundTripAndNames) {
    const AuditCase c = make_audit_case(0);
    const std::vector<double> x = pack_parameters(c.scene, c.camera);
    EXPECT_EQ(x.size(), c.scene.size() * kParamsPerGaussian + kViewParams);
    std::vector<Gaussian3D> s(c.scene.size());
    Camera cam;
    unpack_parameters(x, s, cam);
    EXPECT_EQ(pack_parameters(s, cam), x);
    const auto layout = parameter_layout(2);
    EXPECT_EQ(describe(layout[3]), "gaussians[0].scale[0]");
    EXPECT_EQ(describe(layout[24]), "gaussians[1].opacity");
    EXPECT_EQ(describe(layout[28 + 7]), "view[1][3]");
}

TEST(ClassNames, RoundTrip) {
    for (ParamClass c : kParamClasses)
        EXPECT_EQ(param_class_from_string(to_string(c)), c);
    EXPECT_FALSE(param_class_from_string("nonsense"));
}

TEST(Audit, EmptySceneViewGradientIsZero) {
    const AuditCase c = make_audit_case(1);
    const GradReport r = audit_scene({}, c.camera, c.target, {});
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.at(ParamClass::view).count, kViewParams);
    EXPECT_EQ(r.at(ParamClass::mean).count, 0u);
    EXPECT_EQ(r.at(ParamClass::view).max_abs_error, 0.0);
}

TEST(Audit, RandomScenesPass) {
    for (std::uint64_t seed : {2u, 5u, 8u}) {
        const AuditCase c = make_audit_case(seed);
        AuditOptions opts;
        opts.render = c.render;
        const GradReport r = audit_scene(c.scene, c.camera, c.target, opts);
        EXPECT_TRUE(r.pass) << "seed " << seed << "\n" << format_report(r);
    }
}

TEST(Audit, PassesAtLargerStep) {
    const AuditCase c = make_audit_case(4);
    AuditOptions opts;
    opts.render = c.render;
    opts.tol.h = 1e-4;
    const GradReport r = audit_scene(c.scene, c.camera, c.target, opts);
    EXPECT_TRUE(r.pass) << format_report(r);
}

TEST(Audit, FaultInjectionFlagsOnlyThatClass) {
    const AuditCase c = make_audit_case(6);
    for (ParamClass cls : kParamClasses) {
        AuditOptions opts;
        opts.render = c.render;
        opts.negate_class = cls;
        const GradReport r = audit_scene(c.scene, c.camera, c.target, opts);
        EXPECT_FALSE(r.pass) << to_string(cls);
        for (ParamClass other : kParamClasses)
            EXPECT_EQ(r.at(other).pass, other != cls) << to_string(cls) << " vs " << to_string(other);
        EXPECT_FALSE(r.at(cls).worst.empty());
    }
}

TEST(Audit, DeterministicAcrossRunsAndThreads) {
    const AuditCase a = make_audit_case(9);
    const AuditCase b = make_audit_case(9);
    EXPECT_EQ(pack_parameters(a.scene, a.camera), pack_parameters(b.scene, b.camera));
    AuditOptions o1;
    o1.render = a.render;
    AuditOptions o4 = o1;
    o4.render.threads = 4;
    const GradReport r1 = audit_scene(a.scene, a.camera, a.target, o1);
    const GradReport r4 = audit_scene(a.scene, a.camera, a.target, o4);
    for (ParamClass c : kParamClasses) {
        EXPECT_EQ(r1.at(c).max_abs_error, r4.at(c).max_abs_error);
        EXPECT_EQ(r1.at(c).max_rel_error, r4.at(c).max_rel_error);
    }
}

TEST(CompareGradients, SmallValuesJudgedAbsolutely) {
    const std::vector<ParamRef> layout = {{ParamClass::color, 0, 0}, {ParamClass::color, 0, 1}};
    Tolerances tol;
    const std::vector<double> a = {1e-9, 1.0};
    const std::vector<double> n = {5e-9, 1.0 + 5e-5};
    EXPECT_TRUE(compare_gradients(a, n, layout, tol).pass);
    const std::vector<double> bad = {1e-9, 1.0 + 2e-4};
    const GradReport r = compare_gradients(a, bad, layout, tol);
    EXPECT_FALSE(r.pass);
    EXPECT_EQ(r.at(ParamClass::color).worst, "gaussians[0].color[1]");
}
