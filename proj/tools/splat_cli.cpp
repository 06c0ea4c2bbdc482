// Command-line front end: render, gradcheck and fit.
//
// Exit codes: 0 success, 1 gradient audit failure, 2 input or I/O error.

#include "splat/splat.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAuditFailed = 1;
constexpr int kExitInput = 2;

int default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

struct RenderArgs {
    std::string scene;
    std::string output;
    std::string aux;
    bool brute_force = false;
    bool no_early_termination = false;
};

struct GradcheckArgs {
    std::uint64_t seed = 0;
    std::uint64_t count = 1;
    double h = 1e-5;
    double tol_rel = 1e-4;
    double tol_abs = 1e-8;
    std::string report;
    std::string inject_fault;
};

struct FitArgs {
    std::string target;
    std::size_t n = 100;
    std::size_t iters = 1000;
    std::uint64_t seed = 0;
    std::string output;
    std::string loss_out;
    std::string camera;
};

int run_render(const RenderArgs& args, int threads) {
    const splat::SceneDocument doc = splat::parse_scene(splat::read_file(args.scene));
    splat::RenderOptions ro;
    ro.background = doc.background;
    ro.early_termination = !args.no_early_termination;
    ro.threads = threads;
    splat::ImageBuffer image;
    splat::RenderAux aux;
    if (args.brute_force) {
        auto r = splat::render_brute_force(doc.gaussians, doc.camera, ro);
        image = std::move(r.image);
        aux = std::move(r.aux);
    } else {
        auto r = splat::render(doc.gaussians, doc.camera, ro);
        image = std::move(r.image);
        aux = std::move(r.aux);
    }
    splat::write_image(image, args.output);
    if (!args.aux.empty())
        splat::write_image(splat::transmittance_image(aux), args.aux);
    return kExitOk;
}

int run_gradcheck(const GradcheckArgs& args, int threads) {
    splat::AuditOptions opts;
    opts.tol.h = args.h;
    opts.tol.rel = args.tol_rel;
    opts.tol.abs = args.tol_abs;
    if (!args.inject_fault.empty()) {
        opts.negate_class = splat::param_class_from_string(args.inject_fault);
        if (!opts.negate_class)
            throw splat::Error(splat::ErrorKind::invalid_input, "--inject-fault: unknown class '" + args.inject_fault + "'");
    }
    std::vector<splat::SeededReport> runs;
    bool pass = true;
    for (std::uint64_t s = args.seed; s < args.seed + args.count; ++s) {
        splat::AuditCase c = splat::make_audit_case(s);
        opts.render = c.render;
        opts.render.threads = threads;
        splat::GradReport report = splat::audit_scene(c.scene, c.camera, c.target, opts);
        std::cout << "seed " << s << " (" << c.camera.width << "x" << c.camera.height << ", " << c.scene.size()
                  << " gaussians)\n"
                  << splat::format_report(report) << "\n";
        pass = pass && report.pass;
        runs.push_back({s, c.camera.width, c.camera.height, c.scene.size(), std::move(report)});
    }
    if (!args.report.empty())
        splat::write_file(args.report, splat::report_to_json(runs, opts.tol));
    std::cout << (pass ? "gradcheck: PASS" : "gradcheck: FAIL") << "\n";
    return pass ? kExitOk : kExitAuditFailed;
}

splat::Camera default_fit_camera(int width, int height) {
    splat::Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = width;
    cam.fy = width;
    cam.cx = width / 2.0 - 0.5;
    cam.cy = height / 2.0 - 0.5;
    cam.near = 0.1;
    cam.far = 100.0;
    return cam;
}

int run_fit(const FitArgs& args, int threads) {
    const splat::ImageBuffer target = splat::read_image(args.target);
    splat::Camera camera = default_fit_camera(target.width, target.height);
    splat::Vec3 background = splat::Vec3::Zero();
    if (!args.camera.empty()) {
        const splat::SceneDocument doc = splat::parse_scene(splat::read_file(args.camera));
        camera = doc.camera;
        background = doc.background;
        if (camera.width != target.width || camera.height != target.height)
            throw splat::Error(splat::ErrorKind::invalid_input, "camera size does not match target image");
    }
    splat::FitConfig config;
    config.n_gaussians = args.n;
    config.iterations = args.iters;
    config.seed = args.seed;
    config.background = background;
    config.threads = threads;
    const splat::FitResult result = splat::fit(target, camera, config);

    splat::SceneDocument out;
    out.camera = camera;
    out.background = background;
    out.gaussians = result.scene;
    splat::write_file(args.output, splat::serialize_scene(out));
    if (!args.loss_out.empty()) {
        std::ostringstream os;
        os.precision(17);
        for (double l : result.loss_history)
            os << l << "\n";
        splat::write_file(args.loss_out, os.str());
    }
    if (!result.loss_history.empty())
        std::cout << "loss: " << result.loss_history.front() << " -> " << result.loss_history.back() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CPU differentiable Gaussian-splatting rasterizer"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = default_threads();
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "Render a scene file to a PPM image");
    render->add_option("scene", ra.scene, "Scene file")->required();
    render->add_option("-o,--output", ra.output, "Output PPM")->required();
    render->add_option("--aux", ra.aux, "Write final transmittance as a grayscale PPM");
    render->add_flag("--brute-force", ra.brute_force, "Use the untiled reference renderer");
    render->add_flag("--no-early-termination", ra.no_early_termination, "Composite every splat");

    GradcheckArgs ga;
    auto* gradcheck = app.add_subcommand("gradcheck", "Audit analytic gradients against finite differences");
    gradcheck->set_help_flag("--help", "Print this help message and exit");
    gradcheck->add_option("--seed", ga.seed, "First scene seed");
    gradcheck->add_option("--count", ga.count, "Number of consecutive seeds")->check(CLI::PositiveNumber);
    gradcheck->add_option("--h", ga.h, "Finite-difference step")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tol-rel", ga.tol_rel, "Relative tolerance")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tol-abs", ga.tol_abs, "Absolute tolerance")->check(CLI::PositiveNumber);
    gradcheck->add_option("--report", ga.report, "Write a JSON report");
    gradcheck->add_option("--inject-fault", ga.inject_fault,
                          "Negate one analytic gradient class (mean|scale|quat|opacity|color|view)");

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Fit Gaussians to a target PPM image");
    fit->add_option("target", fa.target, "Target PPM")->required();
    fit->add_option("-n", fa.n, "Gaussian count")->required();
    fit->add_option("--iters", fa.iters, "Iterations")->required();
    fit->add_option("--seed", fa.seed, "Initialization seed");
    fit->add_option("-o,--output", fa.output, "Output scene file")->required();
    fit->add_option("--loss-out", fa.loss_out, "Write loss history, one value per line");
    fit->add_option("--camera", fa.camera, "Scene file whose camera and background are used");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*render)
            return run_render(ra, threads);
        if (*gradcheck)
            return run_gradcheck(ga, threads);
        if (*fit)
            return run_fit(fa, threads);
    } catch (const splat::Error& e) {
        std::cerr << "error (" << splat::to_string(e.kind()) << "): " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
