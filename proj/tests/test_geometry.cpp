#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "radiart/error.hpp"
#include "radiart/geometry.hpp"
#include "test_util.hpp"

using namespace radiart;

namespace {

Camera front_camera(std::size_t w = 8, std::size_t h = 6) {
    return look_at(Vec3(0, 0, 4), Vec3::Zero(), Vec3::UnitY(), intrinsics_from_fov(w, h, 60.0));
}

MultiViewDataset tiny_dataset() {
    const auto cams = orbit_cameras(3, 4.0, 20.0, intrinsics_from_fov(6, 4, 40.0));
    return make_synthetic_dataset(make_sphere_scene(1.0, 5.0, Vec3(0.6, 0.4, 0.3)), cams, 2.5, 5.5, 0.05);
}

}  // namespace

TEST_CASE("centre ray looks down the optical axis") {
    const Camera cam = front_camera();
    const Ray r = generate_ray(cam, 4.0, 3.0);
    CHECK((r.origin - Vec3(0, 0, 4)).norm() < 1e-12);
    CHECK((r.direction - Vec3(0, 0, -1)).norm() < 1e-12);
}

TEST_CASE("pixel rays follow the pinhole model") {
    const Camera cam = front_camera();
    const Intrinsics& k = cam.intrinsics();
    const Ray r = generate_ray(cam, 0.5, 0.5);
    // image x grows to the right, image y grows downward
    const Vec3 expect = Vec3((0.5 - k.cx) / k.fx, -(0.5 - k.cy) / k.fy, -1.0).normalized();
    CHECK((r.direction - expect).norm() < 1e-12);
    CHECK(r.direction.norm() == doctest::Approx(1.0));
    CHECK(r.direction.x() < 0.0);
    CHECK(r.direction.y() > 0.0);
    CHECK_THROWS_AS(generate_ray(cam, 8.0, 0.0), PreconditionError);
    CHECK_THROWS_AS(generate_ray(cam, -0.1, 0.0), PreconditionError);
}

TEST_CASE("horizontal field of view") {
    const Intrinsics k = intrinsics_from_fov(100, 50, 90.0);
    CHECK(k.fx == doctest::Approx(50.0));
    CHECK(k.cx == 50.0);
    CHECK(k.cy == 25.0);
}

TEST_CASE("camera invariants") {
    Intrinsics k = intrinsics_from_fov(4, 4, 40.0);
    Mat4 m = Mat4::Identity();
    m(0, 0) = 2.0;
    CHECK_THROWS_AS(Camera(k, m), ValidationError);
    m = Mat4::Identity();
    m(3, 0) = 1.0;
    CHECK_THROWS_AS(Camera(k, m), ValidationError);
    k.fx = 0.0;
    CHECK_THROWS_AS(Camera(k, Mat4::Identity()), ValidationError);
    k = intrinsics_from_fov(4, 4, 40.0);
    k.cx = 9.0;
    CHECK_THROWS_AS(Camera(k, Mat4::Identity()), ValidationError);
}

TEST_CASE("box intersection") {
    const Aabb box;
    const auto hit = intersect(box, Ray{Vec3(0, 0, 5), Vec3(0, 0, -1)});
    REQUIRE(hit);
    CHECK(hit->first == doctest::Approx(4.0));
    CHECK(hit->second == doctest::Approx(6.0));
    CHECK_FALSE(intersect(box, Ray{Vec3(0, 3, 5), Vec3(0, 0, -1)}));
    CHECK_FALSE(intersect(box, Ray{Vec3(0, 0, 5), Vec3(0, 0, 1)}));
    const auto inside = intersect(box, Ray{Vec3::Zero(), Vec3(1, 0, 0)});
    REQUIRE(inside);
    CHECK(inside->first == 0.0);
    CHECK(inside->second == doctest::Approx(1.0));
}

TEST_CASE("pose interpolation hits its endpoints and stays rigid") {
    const auto cams = orbit_cameras(4, 4.0, 15.0, intrinsics_from_fov(8, 8, 40.0));
    const Camera a = interpolate_pose(cams[0], cams[1], 0.0);
    const Camera b = interpolate_pose(cams[0], cams[1], 1.0);
    CHECK((a.camera_to_world() - cams[0].camera_to_world()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b.camera_to_world() - cams[1].camera_to_world()).cwiseAbs().maxCoeff() < 1e-12);
    const Camera mid = interpolate_pose(cams[0], cams[1], 0.5);
    CHECK((mid.position() - 0.5 * (cams[0].position() + cams[1].position())).norm() < 1e-12);
}

TEST_CASE("orbit cameras look at the origin from the requested radius") {
    const auto cams = orbit_cameras(5, 3.0, 30.0, intrinsics_from_fov(9, 9, 40.0));
    REQUIRE(cams.size() == 5);
    for (const Camera& c : cams) {
        CHECK(c.position().norm() == doctest::Approx(3.0));
        CHECK(c.position().y() == doctest::Approx(3.0 * std::sin(std::numbers::pi / 6)));
        const Ray r = generate_ray(c, 4.5, 4.5);
        CHECK(r.direction.dot(-c.position().normalized()) == doctest::Approx(1.0));
    }
}

TEST_CASE("analytic render of a homogeneous slab matches Beer-Lambert") {
    const double sigma = 1.7, thickness = 0.6;
    const Vec3 color(0.2, 0.7, 0.4), bg(1.0, 1.0, 1.0);
    const SyntheticScene slab = make_slab_scene(-0.3, thickness, sigma, color, 5.0);
    const Camera cam = look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), intrinsics_from_fov(1, 1, 1.0));
    const Image img = render_scene_analytic(slab, cam, 0.01, bg);
    const double t = std::exp(-sigma * thickness);
    for (int c = 0; c < 3; ++c) CHECK(img.at(0, 0, c) == doctest::Approx(color[c] * (1 - t) + t * bg[c]).epsilon(1e-9));
    CHECK_THROWS_AS(render_scene_analytic(slab, cam, 0.0), PreconditionError);
}

TEST_CASE("dataset save and load") {
    testing::TempDir dir("ds");
    const MultiViewDataset ds = tiny_dataset();
    save_dataset(ds, dir.path());
    const MultiViewDataset back = load_dataset(dir.path());
    REQUIRE(back.frames.size() == 3);
    CHECK(back.near == 2.5);
    CHECK(back.far == 5.5);
    CHECK(back.width == 6);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK((back.frames[i].camera.camera_to_world() - ds.frames[i].camera.camera_to_world()).cwiseAbs().maxCoeff() <
              1e-12);
        CHECK(max_abs_diff(back.frames[i].image.pixels, ds.frames[i].image.pixels) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("malformed datasets") {
    testing::TempDir dir("dsbad");
    CHECK_THROWS_AS(load_dataset(dir.path()), DatasetFormatError);

    save_dataset(tiny_dataset(), dir.path());
    const auto manifest = dir / "cameras.json";
    nlohmann::json j;
    std::ifstream(manifest) >> j;
    const auto rewrite = [&](const nlohmann::json& doc) { std::ofstream(manifest) << doc.dump(); };

    std::ofstream(manifest) << "{ not json";
    CHECK_THROWS_AS(load_dataset(dir.path()), DatasetFormatError);

    auto missing_key = j;
    missing_key.erase("near");
    rewrite(missing_key);
    CHECK_THROWS_AS(load_dataset(dir.path()), DatasetFormatError);

    auto short_pose = j;
    short_pose["frames"][0]["c2w"] = {1, 0, 0};
    rewrite(short_pose);
    CHECK_THROWS_AS(load_dataset(dir.path()), DatasetFormatError);

    auto missing_image = j;
    missing_image["frames"][1]["file"] = "nope.png";
    rewrite(missing_image);
    CHECK_THROWS_AS(load_dataset(dir.path()), DatasetFormatError);

    auto skewed = j;
    skewed["frames"][0]["c2w"][0] = 3.0;
    rewrite(skewed);
    CHECK_THROWS_AS(load_dataset(dir.path()), ValidationError);

    auto bad_bounds = j;
    bad_bounds["near"] = 6.0;
    rewrite(bad_bounds);
    CHECK_THROWS_AS(load_dataset(dir.path()), ValidationError);

    auto wrong_size = j;
    wrong_size["width"] = 7;
    wrong_size["frames"][0]["cx"] = 3.5;
    rewrite(wrong_size);
    CHECK_THROWS_AS(load_dataset(dir.path()), ValidationError);
}
