#include "splat/io.hpp"
#include "splat/random_scene.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace splat;

namespace {

const char* kMinimal = R"({
  "version": 1,
  "camera": {"view": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1],
             "fx": 16, "fy": 16, "cx": 7.5, "cy": 7.5, "width": 16, "height": 16, "near": 0.1, "far": 100},
  "background": [0, 0, 0],
  "gaussians": [
    {"mean": [0, 0, 4], "scale": [0.3, 0.3, 0.3], "quat": [1, 0, 0, 0], "opacity": 0.7, "color": [1, 0.5, 0]}
  ]
})";

std::string parse_error_message(const std::string& text) {
    try {
        parse_scene(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse_error);
        return e.what();
    }
    ADD_FAILURE() << "expected a parse error";
    return {};
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto at = s.find(from);
    EXPECT_NE(at, std::string::npos);
    return s.replace(at, from.size(), to);
}

}  // namespace

TEST(ParseScene, Minimal) {
    const SceneDocument doc = parse_scene(kMinimal);
    ASSERT_EQ(doc.gaussians.size(), 1u);
    EXPECT_EQ(doc.gaussians[0].mean, Vec3(0, 0, 4));
    EXPECT_EQ(doc.gaussians[0].opacity, 0.7);
    EXPECT_EQ(doc.camera.width, 16);
    EXPECT_EQ(doc.camera.cx, 7.5);
    EXPECT_EQ(doc.camera.view, Mat4::Identity());
}

TEST(ParseScene, NegativeScaleNamesField) {
    const std::string msg = parse_error_message(replace(kMinimal, "[0.3, 0.3, 0.3]", "[0.3, -0.3, 0.3]"));
    EXPECT_NE(msg.find("gaussians[0].scale"), std::string::npos) << msg;
}

TEST(ParseScene, UnknownFieldRejected) {
    const std::string msg = parse_error_message(replace(kMinimal, "\"opacity\": 0.7", "\"opacity\": 0.7, \"alpha\": 1"));
    EXPECT_NE(msg.find("gaussians[0].alpha"), std::string::npos) << msg;
}

TEST(ParseScene, MissingFieldRejected) {
    const std::string msg = parse_error_message(replace(kMinimal, "\"fy\": 16, ", ""));
    EXPECT_NE(msg.find("camera.fy"), std::string::npos) << msg;
}

TEST(ParseScene, WrongVersionRejected) {
    const std::string msg = parse_error_message(replace(kMinimal, "\"version\": 1", "\"version\": 2"));
    EXPECT_NE(msg.find("version"), std::string::npos);
}

TEST(ParseScene, SyntaxErrorReportsLine) {
    const std::string msg = parse_error_message(replace(kMinimal, "\"background\": [0, 0, 0],", "\"background\": [0, 0, 0"));
    EXPECT_NE(msg.find("line "), std::string::npos) << msg;
}

TEST(ParseScene, NonRigidViewRejected) {
    const std::string msg = parse_error_message(replace(kMinimal, "[1,0,0,0, 0,1,0,0", "[2,0,0,0, 0,1,0,0"));
    EXPECT_NE(msg.find("camera"), std::string::npos);
}

TEST(SerializeScene, RoundTripIsExact) {
    std::mt19937_64 rng(71);
    for (int i = 0; i < 20; ++i) {
        SceneDocument doc;
        doc.camera = random_camera(rng, 20 + i, 30 - i);
        doc.gaussians = random_scene(rng, doc.camera, static_cast<std::size_t>(i));
        doc.background = Vec3(0.25, 0.5, 1.0 / 3.0);
        const std::string text = serialize_scene(doc);
        const SceneDocument back = parse_scene(text);
        EXPECT_EQ(back.camera.view, doc.camera.view);
        EXPECT_EQ(back.camera.fx, doc.camera.fx);
        EXPECT_EQ(back.camera.cy, doc.camera.cy);
        EXPECT_EQ(back.background, doc.background);
        ASSERT_EQ(back.gaussians.size(), doc.gaussians.size());
        for (std::size_t k = 0; k < doc.gaussians.size(); ++k) {
            EXPECT_EQ(back.gaussians[k].mean, doc.gaussians[k].mean);
            EXPECT_EQ(back.gaussians[k].quat, doc.gaussians[k].quat);
            EXPECT_EQ(back.gaussians[k].color, doc.gaussians[k].color);
        }
        EXPECT_EQ(serialize_scene(back), text);
    }
}

TEST(Ppm, SinglePixelBytes) {
    ImageBuffer img(1, 1, Vec3(1.0, 0.0, 0.5));
    const std::string bytes = encode_ppm(img);
    EXPECT_EQ(bytes, std::string("P6\n1 1\n255\n\xff\x00\x80", 14));
}

TEST(Ppm, Quantization) {
    EXPECT_EQ(quantize(0.5), 128);
    EXPECT_EQ(quantize(-0.2), 0);
    EXPECT_EQ(quantize(1.7), 255);
    EXPECT_EQ(quantize(1.0 / 255.0), 1);
}

TEST(Ppm, DecodeRoundTrip) {
    ImageBuffer img(3, 2);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = Vec3(i / 255.0, (100 + i) / 255.0, 1.0);
    const ImageBuffer back = decode_ppm(encode_ppm(img));
    ASSERT_EQ(back.width, 3);
    ASSERT_EQ(back.height, 2);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        EXPECT_LT((back.pixels[i] - img.pixels[i]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Ppm, DecodeRejectsBadInput) {
    EXPECT_THROW(decode_ppm("P3\n1 1\n255\n0 0 0"), Error);
    EXPECT_THROW(decode_ppm("P6\n2 2\n255\n\x01\x02"), Error);
    EXPECT_THROW(decode_ppm("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06"), Error);
}

TEST(Files, MissingFileIsIoError) {
    try {
        read_file("/nonexistent/dir/scene.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io_error);
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/scene.json"), std::string::npos);
    }
}

TEST(Files, DataFixturesParse) {
    const SceneDocument golden = parse_scene(read_file(std::string(SPLAT_TEST_DATA_DIR) + "/golden_scene.json"));
    EXPECT_FALSE(golden.gaussians.empty());
    const ImageBuffer img = read_image(std::string(SPLAT_TEST_DATA_DIR) + "/golden.ppm");
    EXPECT_EQ(img.width, golden.camera.width);
    EXPECT_EQ(img.height, golden.camera.height);
    EXPECT_THROW(parse_scene(read_file(std::string(SPLAT_TEST_DATA_DIR) + "/bad_scale.json")), Error);
}
