#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "radiart/autodiff.hpp"
#include "radiart/field.hpp"
#include "radiart/geometry.hpp"
#include "radiart/image.hpp"

namespace radiart {

enum class SamplingStrategy { Stratified, Uniform };

struct RenderConfig {
    std::size_t samples_per_ray = 192;
    SamplingStrategy strategy = SamplingStrategy::Stratified;
    Vec3 background = Vec3::Zero();
    double near = 2.0;
    double far = 6.0;
    /// Output resolution; 0 keeps the camera's own resolution.
    std::size_t width = 0;
    std::size_t height = 0;
    std::uint64_t seed = 0;
    /// Rays per forward chunk in render_view (memory knob only).
    std::size_t chunk_rays = 1024;

    void validate() const;
};

/// K sample distances in [near, far]. Uniform: evenly spaced including both
/// ends. Stratified: one uniform draw inside each of K equal bins.
std::vector<double> sample_ray(double near, double far, std::size_t samples,
                               SamplingStrategy strategy, std::uint64_t seed);

/// Per-pixel seed for stratified jitter; depends only on (seed, pixel index)
/// so any subset of rays reproduces the same samples.
std::uint64_t ray_seed(std::uint64_t seed, std::size_t pixel_index);

struct CompositeResult {
    Vec3 color = Vec3::Zero();       // Σ T_k(1−ω_k)c_k
    Vec3 pixel = Vec3::Zero();       // color + T_{K+1}·background
    std::vector<double> omega;       // ω_k = exp(−σ_k Δ_k)
    std::vector<double> transmittance;  // T_1..T_{K+1}
    std::vector<double> weights;     // w_k = T_k(1−ω_k)
};

/// Discrete volume-rendering sum. `boundaries` has K+1 entries; Δ_k =
/// boundaries[k+1] − boundaries[k] must be positive except the last, which may
/// be zero (a sample placed exactly on the far plane).
CompositeResult composite(std::span<const double> sigmas, std::span<const Vec3> colors,
                          std::span<const double> boundaries, const Vec3& background);

struct PixelRect {
    std::size_t x0 = 0;
    std::size_t y0 = 0;
    std::size_t width = 0;
    std::size_t height = 0;

    std::size_t area() const { return width * height; }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Rays for a set of pixels with their sample boundaries (K+1 per ray, the
/// last equal to far).
struct RayBatch {
    Tensor origins;     // R×3
    Tensor directions;  // R×3
    Tensor boundaries;  // R×(K+1)

    std::size_t size() const { return origins.rows(); }
    std::size_t samples() const { return boundaries.cols() - 1; }
    /// (d_k + d_{k+1})/2, R×K.
    Tensor midpoints() const;
};

RayBatch make_ray_batch(const Camera& camera, const RenderConfig& config, const PixelRect& rect);

/// Composited rays on a tape.
struct RenderedRays {
    ad::Var rgb;      // R×3, final pixels including background
    ad::Var weights;  // R×K
    Tensor midpoints;  // R×K
};

RenderedRays render_rays(const FieldVars& vars, const FieldArch& arch, const RayBatch& rays,
                         const Vec3& background);

struct ViewRender {
    Image image;
    /// Filled when requested: per-pixel weights and midpoints, (W·H)×K.
    Tensor weights;
    Tensor midpoints;
};

/// Full image without gradient tracking; processed in chunks of
/// config.chunk_rays but numerically identical to any render_patch tiling.
ViewRender render_view(const FieldParams& params, const Camera& camera, const RenderConfig& config,
                       bool keep_weights = false);

/// Renders the pixels of `rect` on `tape` using `vars` (which may require
/// grad). Throws UsageError if `rect` leaves the image.
RenderedRays render_patch(const FieldVars& vars, const FieldArch& arch, const Camera& camera,
                          const RenderConfig& config, const PixelRect& rect);

/// The same quadrature applied to a closed-form scene.
Image render_view(const SyntheticScene& scene, const Camera& camera, const RenderConfig& config);

/// Camera at the configured output resolution.
Camera render_camera(const Camera& camera, const RenderConfig& config);

}  // namespace radiart
