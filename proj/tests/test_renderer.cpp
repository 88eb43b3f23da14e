#include "doctest.h"

#include <cmath>
#include <random>

#include "radiart/error.hpp"
#include "radiart/renderer.hpp"

using namespace radiart;

namespace {

Camera small_camera(std::size_t w, std::size_t h) {
    return look_at(Vec3(0.3, 0.8, 3.5), Vec3::Zero(), Vec3::UnitY(), intrinsics_from_fov(w, h, 45.0));
}

RenderConfig small_config(std::size_t k) {
    RenderConfig c;
    c.samples_per_ray = k;
    c.near = 2.0;
    c.far = 5.0;
    c.background = Vec3(0.2, 0.3, 0.4);
    c.seed = 17;
    return c;
}

}  // namespace

TEST_CASE("uniform samples cover both bounds") {
    const auto d = sample_ray(2.0, 6.0, 5, SamplingStrategy::Uniform, 0);
    REQUIRE(d.size() == 5);
    CHECK(d.front() == 2.0);
    CHECK(d[2] == 4.0);
    CHECK(d.back() == 6.0);
}

TEST_CASE("stratified samples fall one per bin and depend only on the seed") {
    const auto a = sample_ray(1.0, 3.0, 8, SamplingStrategy::Stratified, 5);
    const auto b = sample_ray(1.0, 3.0, 8, SamplingStrategy::Stratified, 5);
    const auto c = sample_ray(1.0, 3.0, 8, SamplingStrategy::Stratified, 6);
    CHECK(a == b);
    CHECK(a != c);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(a[k] >= 1.0 + 0.25 * k);
        CHECK(a[k] < 1.0 + 0.25 * (k + 1));
    }
    CHECK_THROWS_AS(sample_ray(3.0, 1.0, 8, SamplingStrategy::Uniform, 0), PreconditionError);
    CHECK_THROWS_AS(sample_ray(1.0, 3.0, 1, SamplingStrategy::Uniform, 0), PreconditionError);
}

TEST_CASE("homogeneous medium composites to the closed form") {
    const double sigma = 0.8, near = 2.0, far = 5.0;
    const Vec3 c(0.9, 0.5, 0.1), bg(0.0, 0.5, 1.0);
    for (std::size_t k : {2u, 7u, 192u}) {
        const auto b = sample_ray(near, far, k, SamplingStrategy::Uniform, 0);
        std::vector<double> bounds(b.begin(), b.end());
        bounds.push_back(far);  // last interval is empty
        const std::vector<double> sig(k, sigma);
        const std::vector<Vec3> col(k, c);
        const CompositeResult r = composite(sig, col, bounds, bg);
        const double t = std::exp(-sigma * (far - near));
        CHECK(r.transmittance.back() == doctest::Approx(t).epsilon(1e-12));
        for (int ch = 0; ch < 3; ++ch) CHECK(r.pixel[ch] == doctest::Approx(c[ch] * (1 - t) + t * bg[ch]).epsilon(1e-12));
        double wsum = 0.0;
        for (double w : r.weights) wsum += w;
        CHECK(wsum + r.transmittance.back() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.weights.back() == 0.0);
    }
}

TEST_CASE("composite follows the transmittance recursion") {
    const std::vector<double> sig{0.5, 0.0, 3.0};
    const std::vector<Vec3> col{Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const std::vector<double> bounds{1.0, 1.5, 2.5, 2.7};
    const CompositeResult r = composite(sig, col, bounds, Vec3::Zero());
    const double o0 = std::exp(-0.25), o2 = std::exp(-0.6);
    CHECK(r.omega[0] == doctest::Approx(o0));
    CHECK(r.omega[1] == 1.0);
    CHECK(r.transmittance[0] == 1.0);
    CHECK(r.transmittance[2] == doctest::Approx(o0));
    CHECK(r.weights[2] == doctest::Approx(o0 * (1 - o2)));
    CHECK(r.pixel.x() == doctest::Approx(1 - o0));
    CHECK(r.pixel.z() == doctest::Approx(o0 * (1 - o2)));
}

TEST_CASE("composite input checks") {
    const std::vector<Vec3> col(2, Vec3::Zero());
    CHECK_THROWS_AS(composite(std::vector<double>{1.0, -1.0}, col, std::vector<double>{0, 1, 2}, Vec3::Zero()),
                    PreconditionError);
    CHECK_THROWS_AS(composite(std::vector<double>{1.0, 1.0}, col, std::vector<double>{0, 0, 2}, Vec3::Zero()),
                    PreconditionError);
    CHECK_THROWS_AS(composite(std::vector<double>{1.0}, col, std::vector<double>{0, 1, 2}, Vec3::Zero()), UsageError);
}

TEST_CASE("render config validation") {
    RenderConfig c;
    c.validate();
    c.samples_per_ray = 1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = RenderConfig{};
    c.far = c.near;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = RenderConfig{};
    c.background = Vec3(1.5, 0, 0);
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("tape rendering agrees with the scalar compositor") {
    const FieldParams p = init_params({2, 1, 12, 2}, 4);
    const Camera cam = small_camera(5, 4);
    const RenderConfig cfg = small_config(16);
    const RayBatch rays = make_ray_batch(cam, cfg, {1, 1, 2, 2});
    ad::Tape t;
    const RenderedRays rr = render_rays(bind_params(t, p, false), p.arch, rays, cfg.background);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        std::vector<double> sig, bounds;
        std::vector<Vec3> col;
        const Vec3 o(rays.origins(r, 0), rays.origins(r, 1), rays.origins(r, 2));
        const Vec3 d(rays.directions(r, 0), rays.directions(r, 1), rays.directions(r, 2));
        for (std::size_t k = 0; k <= rays.samples(); ++k) bounds.push_back(rays.boundaries(r, k));
        for (std::size_t k = 0; k < rays.samples(); ++k) {
            const FieldOutput f = field_eval(p, o + bounds[k] * d, d);
            sig.push_back(f.sigma);
            col.push_back(f.color);
        }
        const CompositeResult cr = composite(sig, col, bounds, cfg.background);
        for (int ch = 0; ch < 3; ++ch) CHECK(rr.rgb.value()(r, ch) == doctest::Approx(cr.pixel[ch]).epsilon(1e-12));
        for (std::size_t k = 0; k < rays.samples(); ++k)
            CHECK(rr.weights.value()(r, k) == doctest::Approx(cr.weights[k]).epsilon(1e-12));
    }
}

TEST_CASE("rendered pixels differentiate correctly with respect to the field") {
    const FieldParams p = init_params({1, 0, 4, 1}, 2);
    const Camera cam = small_camera(3, 3);
    const RenderConfig cfg = small_config(8);
    const RayBatch rays = make_ray_batch(cam, cfg, {0, 0, 3, 1});
    FieldParams shape = p;
    const double err = ad::grad_check(
        [&](ad::Tape&, ad::Var theta) {
            FieldVars v;
            std::size_t off = 0;
            for (const Tensor& ten : shape.tensors) {
                v.tensors.push_back(ad::reshape(ad::slice_cols(theta, off, ten.size()), ten.rows(), ten.cols()));
                off += ten.size();
            }
            const RenderedRays rr = render_rays(v, shape.arch, rays, cfg.background);
            return ad::sum(ad::square(rr.rgb)) + ad::sum(rr.weights);
        },
        p.flatten(), 1e-6);
    CHECK(err < 1e-6);
}

TEST_CASE("patch renders are bit-identical to the full view") {
    const FieldParams p = init_params({3, 1, 16, 2}, 8);
    const Camera cam = small_camera(9, 7);
    RenderConfig cfg = small_config(24);
    cfg.chunk_rays = 5;  // chunks straddle image rows
    const ViewRender full = render_view(p, cam, cfg, true);
    const PixelRect rects[] = {{0, 0, 9, 7}, {2, 3, 4, 2}, {8, 6, 1, 1}};
    for (const PixelRect& rect : rects) {
        ad::Tape t;
        const RenderedRays rr = render_patch(bind_params(t, p, true), p.arch, cam, cfg, rect);
        for (std::size_t y = 0; y < rect.height; ++y)
            for (std::size_t x = 0; x < rect.width; ++x) {
                const std::size_t pr = y * rect.width + x;
                const std::size_t fr = (rect.y0 + y) * cam.width() + rect.x0 + x;
                for (int ch = 0; ch < 3; ++ch) CHECK(rr.rgb.value()(pr, ch) == full.image.pixels(fr, ch));
                for (std::size_t k = 0; k < cfg.samples_per_ray; ++k) {
                    CHECK(rr.weights.value()(pr, k) == full.weights(fr, k));
                    CHECK(rr.midpoints(pr, k) == full.midpoints(fr, k));
                }
            }
    }
    ad::Tape t;
    CHECK_THROWS_AS(render_patch(bind_params(t, p, false), p.arch, cam, cfg, {5, 0, 5, 1}), UsageError);
}

TEST_CASE("render resolution override rescales the camera") {
    const Camera cam = small_camera(8, 6);
    RenderConfig cfg = small_config(4);
    cfg.width = 16;
    cfg.height = 12;
    const Camera big = render_camera(cam, cfg);
    CHECK(big.width() == 16);
    CHECK(big.intrinsics().fx == doctest::Approx(2 * cam.intrinsics().fx));
    // the centre ray is unchanged
    CHECK((generate_ray(big, 8.0, 6.0).direction - generate_ray(cam, 4.0, 3.0).direction).norm() < 1e-12);
}

TEST_CASE("quadrature of a closed-form slab converges to Beer-Lambert") {
    const double sigma = 2.0, thickness = 0.5;
    const Vec3 color(0.3, 0.6, 0.9);
    const SyntheticScene slab = make_slab_scene(-0.25, thickness, sigma, color, 10.0);
    const Camera cam = look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), intrinsics_from_fov(1, 1, 1.0));
    RenderConfig cfg;
    cfg.near = 2.0;
    cfg.far = 4.0;
    cfg.samples_per_ray = 512;
    cfg.strategy = SamplingStrategy::Uniform;
    const Image img = render_view(slab, cam, cfg);
    const double t = std::exp(-sigma * thickness);
    for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(img.at(0, 0, ch) - color[ch] * (1 - t)) < 1e-2);
}
