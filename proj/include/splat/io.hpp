#pragma once

#include "splat/core.hpp"
#include "splat/gradcheck.hpp"
#include "splat/raster_forward.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace splat {

inline constexpr int kSceneFormatVersion = 1;

struct SceneDocument {
    std::vector<Gaussian3D> gaussians;
    Camera camera;
    Vec3 background = Vec3::Zero();
};

namespace detail {

using Json = nlohmann::json;

[[noreturn]] inline void field_error(const std::string& field, const std::string& msg) {
    throw Error(ErrorKind::parse_error, field + ": " + msg);
}

inline void reject_unknown(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!keys.count(it.key()))
            field_error(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
}

inline const Json& require(const Json& obj, const std::string& where, const char* key) {
    if (!obj.is_object())
        field_error(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        field_error(where.empty() ? key : where + "." + key, "missing field");
    return *it;
}

inline double number(const Json& v, const std::string& field) {
    if (!v.is_number())
        field_error(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        field_error(field, "expected a finite number");
    return d;
}

inline std::vector<double> numbers(const Json& v, const std::string& field, std::size_t n) {
    if (!v.is_array() || v.size() != n)
        field_error(field, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(number(v[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

inline int positive_int(const Json& v, const std::string& field) {
    if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > (1 << 20))
        field_error(field, "expected a positive integer");
    return static_cast<int>(v.get<long long>());
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const Json& v, const std::string& field) {
    const std::vector<double> xs = numbers(v, field, N);
    return Eigen::Map<const Eigen::Matrix<double, N, 1>>(xs.data());
}

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Parses and validates a scene document. Errors name the offending field,
/// e.g. "gaussians[3].scale".
inline SceneDocument parse_scene(const std::string& text) {
    using detail::Json;
    Json root;
    try {
        root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse_error, "syntax error at " + detail::line_col(text, e.byte) + ": " + e.what());
    }
    if (!root.is_object())
        detail::field_error("<root>", "expected an object");
    detail::reject_unknown(root, "", {"version", "camera", "background", "gaussians"});

    const Json& version = detail::require(root, "", "version");
    if (!version.is_number_integer() || version.get<long long>() != kSceneFormatVersion)
        detail::field_error("version", "unsupported version (expected 1)");

    SceneDocument doc;
    const Json& cam = detail::require(root, "", "camera");
    if (!cam.is_object())
        detail::field_error("camera", "expected an object");
    detail::reject_unknown(cam, "camera", {"view", "fx", "fy", "cx", "cy", "width", "height", "near", "far"});
    const std::vector<double> view = detail::numbers(detail::require(cam, "camera", "view"), "camera.view", 16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            doc.camera.view(r, c) = view[static_cast<std::size_t>(r * 4 + c)];
    doc.camera.fx = detail::number(detail::require(cam, "camera", "fx"), "camera.fx");
    doc.camera.fy = detail::number(detail::require(cam, "camera", "fy"), "camera.fy");
    doc.camera.cx = detail::number(detail::require(cam, "camera", "cx"), "camera.cx");
    doc.camera.cy = detail::number(detail::require(cam, "camera", "cy"), "camera.cy");
    doc.camera.width = detail::positive_int(detail::require(cam, "camera", "width"), "camera.width");
    doc.camera.height = detail::positive_int(detail::require(cam, "camera", "height"), "camera.height");
    doc.camera.near = detail::number(detail::require(cam, "camera", "near"), "camera.near");
    doc.camera.far = detail::number(detail::require(cam, "camera", "far"), "camera.far");
    try {
        validate(doc.camera);
    } catch (const Error& e) {
        detail::field_error("camera", e.what());
    }

    doc.background = detail::vec<3>(detail::require(root, "", "background"), "background");
    if (!((doc.background.array() >= 0.0).all() && (doc.background.array() <= 1.0).all()))
        detail::field_error("background", "channels must lie in [0,1]");

    const Json& gs = detail::require(root, "", "gaussians");
    if (!gs.is_array())
        detail::field_error("gaussians", "expected an array");
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const std::string where = "gaussians[" + std::to_string(i) + "]";
        const Json& jg = gs[i];
        if (!jg.is_object())
            detail::field_error(where, "expected an object");
        detail::reject_unknown(jg, where, {"mean", "scale", "quat", "opacity", "color"});
        Gaussian3D g;
        g.mean = detail::vec<3>(detail::require(jg, where, "mean"), where + ".mean");
        g.scale = detail::vec<3>(detail::require(jg, where, "scale"), where + ".scale");
        g.quat = detail::vec<4>(detail::require(jg, where, "quat"), where + ".quat");
        g.opacity = detail::number(detail::require(jg, where, "opacity"), where + ".opacity");
        g.color = detail::vec<3>(detail::require(jg, where, "color"), where + ".color");
        if (!(g.scale.array() > 0.0).all())
            detail::field_error(where + ".scale", "components must be > 0");
        if (!(g.quat.norm() > 1e-12))
            detail::field_error(where + ".quat", "norm must be nonzero");
        if (!(g.opacity >= 0.0 && g.opacity <= 1.0))
            detail::field_error(where + ".opacity", "must lie in [0,1]");
        if (!((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all()))
            detail::field_error(where + ".color", "channels must lie in [0,1]");
        doc.gaussians.push_back(g);
    }
    return doc;
}

inline std::string serialize_scene(const SceneDocument& doc) {
    using detail::Json;
    const auto arr = [](const auto& v) {
        Json a = Json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i)
            a.push_back(v[i]);
        return a;
    };
    Json view = Json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            view.push_back(doc.camera.view(r, c));
    Json root;
    root["version"] = kSceneFormatVersion;
    root["camera"] = {{"view", view},          {"fx", doc.camera.fx},         {"fy", doc.camera.fy},
                      {"cx", doc.camera.cx},   {"cy", doc.camera.cy},         {"width", doc.camera.width},
                      {"height", doc.camera.height}, {"near", doc.camera.near}, {"far", doc.camera.far}};
    root["background"] = arr(doc.background);
    root["gaussians"] = Json::array();
    for (const Gaussian3D& g : doc.gaussians)
        root["gaussians"].push_back({{"mean", arr(g.mean)},
                                     {"scale", arr(g.scale)},
                                     {"quat", arr(g.quat)},
                                     {"opacity", g.opacity},
                                     {"color", arr(g.color)}});
    return root.dump(2) + "\n";
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io_error, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::io_error, "cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorKind::io_error, "write to '" + path + "' failed");
}

/// round(clamp(v, 0, 1) * 255), halves rounded away from zero.
inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Binary PPM (P6, maxval 255).
inline std::string encode_ppm(const ImageBuffer& image) {
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.reserve(out.size() + image.pixels.size() * 3);
    for (const Vec3& px : image.pixels)
        for (int c = 0; c < 3; ++c)
            out.push_back(static_cast<char>(quantize(px[c])));
    return out;
}

inline void write_image(const ImageBuffer& image, const std::string& path) { write_file(path, encode_ppm(image)); }

/// Decodes a binary P6 image with maxval 255 into [0,1] channel values.
inline ImageBuffer decode_ppm(const std::string& bytes) {
    std::size_t pos = 0;
    const auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    const auto token = [&] {
        skip_space();
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        return bytes.substr(start, pos - start);
    };
    const auto int_token = [&](const char* what) {
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
            t.size() > 7)
            throw Error(ErrorKind::parse_error, std::string("PPM: bad ") + what);
        return std::stoi(t);
    };
    if (token() != "P6")
        throw Error(ErrorKind::parse_error, "PPM: expected P6 magic");
    const int w = int_token("width");
    const int h = int_token("height");
    const int maxval = int_token("maxval");
    if (w < 1 || h < 1 || maxval != 255)
        throw Error(ErrorKind::parse_error, "PPM: need positive size and maxval 255");
    ++pos;  // single whitespace byte before the payload
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() < pos + need)
        throw Error(ErrorKind::parse_error, "PPM: truncated payload");
    ImageBuffer img(w, h);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c)
            img.pixels[i][c] = static_cast<unsigned char>(bytes[pos + i * 3 + c]) / 255.0;
    return img;
}

inline ImageBuffer read_image(const std::string& path) { return decode_ppm(read_file(path)); }

/// Grayscale view of the final transmittance, written as P6 with equal channels.
inline ImageBuffer transmittance_image(const RenderAux& aux) {
    ImageBuffer img(aux.width, aux.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = Vec3::Constant(aux.final_T[i]);
    return img;
}

struct SeededReport {
    std::uint64_t seed;
    int width;
    int height;
    std::size_t n_gaussians;
    GradReport report;
};

inline std::string report_to_json(const std::vector<SeededReport>& runs, const Tolerances& tol) {
    using detail::Json;
    Json root;
    root["tolerances"] = {{"rel", tol.rel}, {"abs", tol.abs}, {"h", tol.h}, {"significance", tol.significance}};
    bool pass = true;
    root["scenes"] = Json::array();
    for (const SeededReport& r : runs) {
        Json classes = Json::object();
        for (const ClassReport& c : r.report.classes)
            classes[to_string(c.cls)] = {{"count", c.count},
                                         {"max_rel_error", c.max_rel_error},
                                         {"max_abs_error", c.max_abs_error},
                                         {"worst", c.worst},
                                         {"worst_analytic", c.worst_analytic},
                                         {"worst_numeric", c.worst_numeric},
                                         {"pass", c.pass}};
        root["scenes"].push_back({{"seed", r.seed},
                                  {"width", r.width},
                                  {"height", r.height},
                                  {"gaussians", r.n_gaussians},
                                  {"classes", classes},
                                  {"pass", r.report.pass}});
        pass = pass && r.report.pass;
    }
    root["pass"] = pass;
    return root.dump(2) + "\n";
}

}  // namespace splat
