#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "radiart/image.hpp"

namespace radiart {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    std::size_t width = 1;
    std::size_t height = 1;
};

/// Pinhole camera, right-handed, looking down −z in camera space with +y up.
/// camera_to_world is a rigid transform.
class Camera {
public:
    Camera() = default;
    /// Throws ValidationError when the intrinsics or the rotation block violate
    /// the camera invariants.
    Camera(Intrinsics intrinsics, const Mat4& camera_to_world);

    const Intrinsics& intrinsics() const { return intrinsics_; }
    const Mat4& camera_to_world() const { return c2w_; }
    std::size_t width() const { return intrinsics_.width; }
    std::size_t height() const { return intrinsics_.height; }
    Vec3 position() const { return c2w_.block<3, 1>(0, 3); }
    Mat3 rotation() const { return c2w_.block<3, 3>(0, 0); }

    /// Same pose with intrinsics rescaled to a new resolution.
    Camera resized(std::size_t width, std::size_t height) const;

private:
    Intrinsics intrinsics_;
    Mat4 c2w_ = Mat4::Identity();
};

/// Camera at `eye` looking at `target`.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics);
/// Focal length giving a horizontal field of view of `fov_x_deg`, principal point at the centre.
Intrinsics intrinsics_from_fov(std::size_t width, std::size_t height, double fov_x_deg);
/// Rotation slerp and translation lerp between two poses, t ∈ [0,1].
Camera interpolate_pose(const Camera& a, const Camera& b, double t);

struct Ray {
    Vec3 origin;
    Vec3 direction;
};

/// Ray through the continuous pixel position (px, py); pixel centres sit at
/// integer + 0.5. Throws PreconditionError unless 0 ≤ px < W and 0 ≤ py < H.
Ray generate_ray(const Camera& camera, double px, double py);

struct Aabb {
    Vec3 lo = Vec3::Constant(-1.0);
    Vec3 hi = Vec3::Constant(1.0);
};

/// Parametric entry/exit distances of a ray through a box, clipped to t ≥ 0.
std::optional<std::pair<double, double>> intersect(const Aabb& box, const Ray& ray);

/// Closed-form volumetric scene used as ground truth.
struct SyntheticScene {
    std::string name;
    Aabb bounds;
    std::function<double(const Vec3&)> density;
    std::function<Vec3(const Vec3&, const Vec3&)> color;
};

SyntheticScene make_empty_scene(const Aabb& bounds);
/// Sphere of constant density; color varies smoothly with position when
/// `gradient_color` is set, otherwise constant `base_color`.
SyntheticScene make_sphere_scene(double radius, double sigma, const Vec3& base_color,
                                 bool gradient_color = true);
/// Density that peaks on a spherical shell: σ(x) = σ₀·exp(−((|x|−r)/width)²).
SyntheticScene make_soft_shell_scene(double radius, double width, double sigma,
                                     const Vec3& color);
/// Homogeneous emissive slab occupying z ∈ [z0, z0+thickness] across the box.
SyntheticScene make_slab_scene(double z0, double thickness, double sigma, const Vec3& color,
                               double half_extent = 1.0);

/// Brute-force midpoint quadrature of the volume-rendering integral through the
/// scene bounds with the given step; pixel = C + T_exit·background.
Image render_scene_analytic(const SyntheticScene& scene, const Camera& camera, double step,
                            const Vec3& background = Vec3::Zero());

struct Frame {
    std::string file;
    Image image;
    Camera camera;
};

struct MultiViewDataset {
    std::vector<Frame> frames;
    double near = 0.0;
    double far = 1.0;
    std::size_t width = 0;
    std::size_t height = 0;

    /// Throws ValidationError if the shared-resolution or bounds invariants fail.
    void validate() const;
};

/// Reads `cameras.json` and the PNG images it lists.
MultiViewDataset load_dataset(const std::filesystem::path& dir);
/// Writes PNG frames and a `cameras.json` manifest.
void save_dataset(const MultiViewDataset& dataset, const std::filesystem::path& dir);

/// Cameras on a ring (elevated by `elevation_deg`) around the origin, all
/// looking at the origin.
std::vector<Camera> orbit_cameras(std::size_t count, double radius, double elevation_deg,
                                  const Intrinsics& intrinsics, double phase_deg = 0.0);
/// Ground-truth dataset rendered from a synthetic scene.
MultiViewDataset make_synthetic_dataset(const SyntheticScene& scene,
                                        const std::vector<Camera>& cameras, double near,
                                        double far, double step,
                                        const Vec3& background = Vec3::Zero());

}  // namespace radiart
