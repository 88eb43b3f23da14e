#include "radiart/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "radiart/error.hpp"

namespace radiart {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace

void RenderConfig::validate() const {
    if (samples_per_ray < 2) throw ValidationError("samples_per_ray must be >= 2");
    if (!(near < far)) throw ValidationError("render bounds need near < far");
    if (chunk_rays == 0) throw ValidationError("chunk_rays must be positive");
    for (int c = 0; c < 3; ++c)
        if (!(background[c] >= 0.0 && background[c] <= 1.0))
            throw ValidationError("background color must lie in [0,1]");
}

std::vector<double> sample_ray(double near, double far, std::size_t samples,
                               SamplingStrategy strategy, std::uint64_t seed) {
    if (!(near < far)) throw PreconditionError("sample_ray: near must be < far");
    if (samples < 2) throw PreconditionError("sample_ray: need at least 2 samples");
    std::vector<double> d(samples);
    const double span = far - near;
    if (strategy == SamplingStrategy::Uniform) {
        for (std::size_t k = 0; k < samples; ++k)
            d[k] = near + span * static_cast<double>(k) / static_cast<double>(samples - 1);
        d.back() = far;
    } else {
        std::uint64_t state = seed;
        const double bin = span / static_cast<double>(samples);
        for (std::size_t k = 0; k < samples; ++k)
            d[k] = near + (static_cast<double>(k) + unit_uniform(state)) * bin;
    }
    return d;
}

std::uint64_t ray_seed(std::uint64_t seed, std::size_t pixel_index) {
    std::uint64_t s = seed ^ (0xD1B54A32D192ED03ull * (static_cast<std::uint64_t>(pixel_index) + 1));
    return splitmix64(s);
}

CompositeResult composite(std::span<const double> sigmas, std::span<const Vec3> colors,
                          std::span<const double> boundaries, const Vec3& background) {
    const std::size_t k = sigmas.size();
    if (colors.size() != k || boundaries.size() != k + 1)
        throw UsageError("composite: need K sigmas, K colors and K+1 boundaries");
    CompositeResult r;
    r.omega.resize(k);
    r.transmittance.resize(k + 1);
    r.weights.resize(k);
    double t = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (!(sigmas[i] >= 0.0)) throw PreconditionError("composite: negative density");
        const double delta = boundaries[i + 1] - boundaries[i];
        if (!(delta > 0.0) && !(i + 1 == k && delta == 0.0))
            throw PreconditionError("composite: boundaries must increase");
        r.transmittance[i] = t;
        r.omega[i] = std::exp(-sigmas[i] * delta);
        r.weights[i] = t * (1.0 - r.omega[i]);
        r.color += r.weights[i] * colors[i];
        t *= r.omega[i];
    }
    r.transmittance[k] = t;
    r.pixel = r.color + t * background;
    return r;
}

Tensor RayBatch::midpoints() const {
    const std::size_t k = samples();
    Tensor m(size(), k);
    for (std::size_t r = 0; r < size(); ++r)
        for (std::size_t i = 0; i < k; ++i) m(r, i) = 0.5 * (boundaries(r, i) + boundaries(r, i + 1));
    return m;
}

Camera render_camera(const Camera& camera, const RenderConfig& config) {
    const std::size_t w = config.width ? config.width : camera.width();
    const std::size_t h = config.height ? config.height : camera.height();
    if (w == camera.width() && h == camera.height()) return camera;
    return camera.resized(w, h);
}

RayBatch make_ray_batch(const Camera& camera, const RenderConfig& config, const PixelRect& rect) {
    if (rect.x0 + rect.width > camera.width() || rect.y0 + rect.height > camera.height())
        throw UsageError("pixel rectangle (" + std::to_string(rect.x0) + "," +
                         std::to_string(rect.y0) + " " + std::to_string(rect.width) + "x" +
                         std::to_string(rect.height) + ") exceeds image bounds");
    const std::size_t n = rect.area();
    const std::size_t k = config.samples_per_ray;
    RayBatch b{Tensor(n, 3), Tensor(n, 3), Tensor(n, k + 1)};
    std::size_t i = 0;
    for (std::size_t y = rect.y0; y < rect.y0 + rect.height; ++y) {
        for (std::size_t x = rect.x0; x < rect.x0 + rect.width; ++x, ++i) {
            const Ray ray = generate_ray(camera, x + 0.5, y + 0.5);
            const auto d = sample_ray(config.near, config.far, k, config.strategy,
                                      ray_seed(config.seed, y * camera.width() + x));
            for (int c = 0; c < 3; ++c) {
                b.origins(i, c) = ray.origin[c];
                b.directions(i, c) = ray.direction[c];
            }
            for (std::size_t s = 0; s < k; ++s) b.boundaries(i, s) = d[s];
            b.boundaries(i, k) = config.far;
        }
    }
    return b;
}

RenderedRays render_rays(const FieldVars& vars, const FieldArch& arch, const RayBatch& rays,
                         const Vec3& background) {
    ad::Tape& tape = *vars.tensors.front().tape;
    const std::size_t n = rays.size();
    const std::size_t k = rays.samples();
    Tensor positions(n * k, 3), dirs(n * k, 3), deltas(n, k);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t s = 0; s < k; ++s) {
            const double t = rays.boundaries(r, s);
            for (int c = 0; c < 3; ++c) {
                positions(r * k + s, c) = rays.origins(r, c) + t * rays.directions(r, c);
                dirs(r * k + s, c) = rays.directions(r, c);
            }
            deltas(r, s) = rays.boundaries(r, s + 1) - t;
        }
    }
    const FieldBatch f = field_forward(vars, arch, positions, dirs);
    ad::Var sigma = ad::reshape(f.sigma, n, k);
    ad::Var omega = ad::exp(ad::neg(ad::mul(sigma, tape.constant(std::move(deltas)))));
    ad::Var trans = ad::cumprod_exclusive(omega);
    ad::Var t_k = ad::slice_cols(trans, 0, k);
    ad::Var t_end = ad::slice_cols(trans, k, 1);
    ad::Var weights = ad::mul(t_k, 1.0 - omega);
    ad::Var channels[3];
    for (std::size_t c = 0; c < 3; ++c) {
        ad::Var cc = ad::reshape(ad::slice_cols(f.color, c, 1), n, k);
        channels[c] = ad::row_sum(ad::mul(weights, cc));
    }
    ad::Var rgb = ad::concat_cols(channels);
    Tensor bg(1, 3);
    for (int c = 0; c < 3; ++c) bg[c] = background[c];
    rgb = rgb + ad::matmul(t_end, tape.constant(std::move(bg)));
    return {rgb, weights, rays.midpoints()};
}

ViewRender render_view(const FieldParams& params, const Camera& camera, const RenderConfig& config,
                       bool keep_weights) {
    config.validate();
    params.validate();
    const Camera cam = render_camera(camera, config);
    const std::size_t w = cam.width(), h = cam.height();
    const std::size_t k = config.samples_per_ray;
    ViewRender out;
    out.image = Image(w, h);
    if (keep_weights) {
        out.weights = Tensor(w * h, k);
        out.midpoints = Tensor(w * h, k);
    }
    // chunks are whole pixel rows so each chunk is a valid rectangle
    const std::size_t rows_per_chunk = std::max<std::size_t>(1, config.chunk_rays / w);
    for (std::size_t y0 = 0; y0 < h; y0 += rows_per_chunk) {
        const PixelRect rect{0, y0, w, std::min(rows_per_chunk, h - y0)};
        ad::Tape tape;
        const FieldVars vars = bind_params(tape, params, false);
        const RenderedRays rr = render_patch(vars, params.arch, cam, config, rect);
        const Tensor& rgb = rr.rgb.value();
        if (!rgb.all_finite()) throw NumericError("render_view: non-finite pixel values");
        const std::size_t base = y0 * w;
        std::copy_n(rgb.data(), rgb.size(), out.image.pixels.data() + base * 3);
        if (keep_weights) {
            std::copy_n(rr.weights.value().data(), rect.area() * k, out.weights.data() + base * k);
            std::copy_n(rr.midpoints.data(), rect.area() * k, out.midpoints.data() + base * k);
        }
    }
    return out;
}

RenderedRays render_patch(const FieldVars& vars, const FieldArch& arch, const Camera& camera,
                          const RenderConfig& config, const PixelRect& rect) {
    config.validate();
    const RayBatch rays = make_ray_batch(camera, config, rect);
    return render_rays(vars, arch, rays, config.background);
}

Image render_view(const SyntheticScene& scene, const Camera& camera, const RenderConfig& config) {
    config.validate();
    const Camera cam = render_camera(camera, config);
    const std::size_t k = config.samples_per_ray;
    const RayBatch rays = make_ray_batch(cam, config, PixelRect{0, 0, cam.width(), cam.height()});
    Image img(cam.width(), cam.height());
    std::vector<double> sig(k);
    std::vector<Vec3> col(k);
    std::vector<double> bounds(k + 1);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const Vec3 o(rays.origins(r, 0), rays.origins(r, 1), rays.origins(r, 2));
        const Vec3 d(rays.directions(r, 0), rays.directions(r, 1), rays.directions(r, 2));
        for (std::size_t s = 0; s <= k; ++s) bounds[s] = rays.boundaries(r, s);
        for (std::size_t s = 0; s < k; ++s) {
            const Vec3 p = o + bounds[s] * d;
            sig[s] = scene.density(p);
            col[s] = scene.color(p, d);
        }
        const CompositeResult c = composite(sig, col, bounds, config.background);
        for (int ch = 0; ch < 3; ++ch) img.pixels(r, ch) = c.pixel[ch];
    }
    return img;
}

}  // namespace radiart
