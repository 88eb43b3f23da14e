#include "radiart/geometry.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "radiart/error.hpp"

namespace radiart {

namespace {

constexpr double kRotationTolerance = 1e-6;

void check_intrinsics(const Intrinsics& k) {
    if (k.width == 0 || k.height == 0) throw ValidationError("camera resolution must be positive");
    if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw ValidationError("camera focal lengths must be > 0");
    if (!(k.cx >= 0.0 && k.cx < static_cast<double>(k.width)) ||
        !(k.cy >= 0.0 && k.cy < static_cast<double>(k.height)))
        throw ValidationError("principal point outside the image");
}

void check_rigid(const Mat4& m) {
    if (!m.allFinite()) throw ValidationError("camera pose has non-finite entries");
    const Mat3 r = m.block<3, 3>(0, 0);
    const double err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err < kRotationTolerance))
        throw ValidationError("camera rotation is not orthonormal (|RᵀR − I|∞ = " +
                              std::to_string(err) + ")");
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
        throw ValidationError("camera pose last row must be [0,0,0,1]");
}

}  // namespace

Camera::Camera(Intrinsics intrinsics, const Mat4& camera_to_world)
    : intrinsics_(intrinsics), c2w_(camera_to_world) {
    check_intrinsics(intrinsics_);
    check_rigid(c2w_);
}

Camera Camera::resized(std::size_t width, std::size_t height) const {
    const double sx = static_cast<double>(width) / static_cast<double>(intrinsics_.width);
    const double sy = static_cast<double>(height) / static_cast<double>(intrinsics_.height);
    Intrinsics k = intrinsics_;
    k.fx *= sx;
    k.cx *= sx;
    k.fy *= sy;
    k.cy *= sy;
    k.width = width;
    k.height = height;
    return Camera(k, c2w_);
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics) {
    const Vec3 back = (eye - target).normalized();  // camera +z
    Vec3 right = up.cross(back);
    if (right.norm() < 1e-12) right = Vec3::UnitX().cross(back);
    right.normalize();
    const Vec3 cam_up = back.cross(right);
    Mat4 m = Mat4::Identity();
    m.block<3, 1>(0, 0) = right;
    m.block<3, 1>(0, 1) = cam_up;
    m.block<3, 1>(0, 2) = back;
    m.block<3, 1>(0, 3) = eye;
    return Camera(intrinsics, m);
}

Intrinsics intrinsics_from_fov(std::size_t width, std::size_t height, double fov_x_deg) {
    Intrinsics k;
    k.width = width;
    k.height = height;
    const double half = fov_x_deg * std::numbers::pi / 360.0;
    k.fx = 0.5 * static_cast<double>(width) / std::tan(half);
    k.fy = k.fx;
    k.cx = 0.5 * static_cast<double>(width);
    k.cy = 0.5 * static_cast<double>(height);
    return k;
}

Camera interpolate_pose(const Camera& a, const Camera& b, double t) {
    const Eigen::Quaterniond qa(a.rotation());
    const Eigen::Quaterniond qb(b.rotation());
    const Mat3 r = qa.slerp(t, qb).normalized().toRotationMatrix();
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = r;
    m.block<3, 1>(0, 3) = (1.0 - t) * a.position() + t * b.position();
    return Camera(a.intrinsics(), m);
}

Ray generate_ray(const Camera& camera, double px, double py) {
    const Intrinsics& k = camera.intrinsics();
    if (!(px >= 0.0 && px < static_cast<double>(k.width)) ||
        !(py >= 0.0 && py < static_cast<double>(k.height)))
        throw PreconditionError("generate_ray: pixel (" + std::to_string(px) + ", " +
                                std::to_string(py) + ") outside image");
    const Vec3 dir_cam((px - k.cx) / k.fx, -(py - k.cy) / k.fy, -1.0);
    const Vec3 dir = (camera.rotation() * dir_cam).normalized();
    return Ray{camera.position(), dir};
}

std::optional<std::pair<double, double>> intersect(const Aabb& box, const Ray& ray) {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a];
        const double d = ray.direction[a];
        if (std::abs(d) < 1e-300) {
            if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
            continue;
        }
        double ta = (box.lo[a] - o) / d;
        double tb = (box.hi[a] - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

SyntheticScene make_empty_scene(const Aabb& bounds) {
    return SyntheticScene{"empty", bounds, [](const Vec3&) { return 0.0; },
                          [](const Vec3&, const Vec3&) { return Vec3(0.5, 0.5, 0.5); }};
}

SyntheticScene make_sphere_scene(double radius, double sigma, const Vec3& base_color,
                                 bool gradient_color) {
    const double margin = 0.05 * radius;
    Aabb box{Vec3::Constant(-radius - margin), Vec3::Constant(radius + margin)};
    return SyntheticScene{
        "sphere", box,
        [radius, sigma](const Vec3& x) { return x.norm() <= radius ? sigma : 0.0; },
        [radius, base_color, gradient_color](const Vec3& x, const Vec3&) -> Vec3 {
            if (!gradient_color) return base_color;
            return (base_color + 0.35 * x / radius).cwiseMax(0.0).cwiseMin(1.0);
        }};
}

SyntheticScene make_soft_shell_scene(double radius, double width, double sigma,
                                     const Vec3& color) {
    const double ext = radius + 4.0 * width;
    Aabb box{Vec3::Constant(-ext), Vec3::Constant(ext)};
    return SyntheticScene{"soft_shell", box,
                          [radius, width, sigma](const Vec3& x) {
                              const double u = (x.norm() - radius) / width;
                              return sigma * std::exp(-u * u);
                          },
                          [color](const Vec3&, const Vec3&) { return color; }};
}

SyntheticScene make_slab_scene(double z0, double thickness, double sigma, const Vec3& color,
                               double half_extent) {
    Aabb box{Vec3(-half_extent, -half_extent, z0), Vec3(half_extent, half_extent, z0 + thickness)};
    return SyntheticScene{"slab", box,
                          [sigma, box](const Vec3& x) {
                              const bool inside = (x.array() >= box.lo.array()).all() &&
                                                  (x.array() <= box.hi.array()).all();
                              return inside ? sigma : 0.0;
                          },
                          [color](const Vec3&, const Vec3&) { return color; }};
}

Image render_scene_analytic(const SyntheticScene& scene, const Camera& camera, double step,
                            const Vec3& background) {
    if (!(step > 0.0)) throw PreconditionError("render_scene_analytic: step must be > 0");
    Image img(camera.width(), camera.height());
    for (std::size_t y = 0; y < camera.height(); ++y) {
        for (std::size_t x = 0; x < camera.width(); ++x) {
            const Ray ray = generate_ray(camera, x + 0.5, y + 0.5);
            Vec3 c = Vec3::Zero();
            double trans = 1.0;
            if (auto hit = intersect(scene.bounds, ray)) {
                const auto [t0, t1] = *hit;
                const std::size_t n =
                    static_cast<std::size_t>(std::ceil((t1 - t0) / step - 1e-12));
                for (std::size_t i = 0; i < n; ++i) {
                    const double a = t0 + static_cast<double>(i) * step;
                    const double b = std::min(t1, a + step);
                    const Vec3 p = ray.origin + 0.5 * (a + b) * ray.direction;
                    const double sigma = scene.density(p);
                    if (sigma <= 0.0) continue;
                    const double omega = std::exp(-sigma * (b - a));
                    c += trans * (1.0 - omega) * scene.color(p, ray.direction);
                    trans *= omega;
                }
            }
            const Vec3 px = c + trans * background;
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = px[ch];
        }
    }
    return img;
}

void MultiViewDataset::validate() const {
    if (!(near > 0.0 && near < far)) throw ValidationError("dataset bounds need 0 < near < far");
    for (const Frame& f : frames) {
        if (f.image.width != width || f.image.height != height)
            throw ValidationError("frame " + f.file + " is " + std::to_string(f.image.width) +
                                  "x" + std::to_string(f.image.height) + ", expected " +
                                  std::to_string(width) + "x" + std::to_string(height));
        if (f.camera.width() != width || f.camera.height() != height)
            throw ValidationError("camera resolution of " + f.file + " differs from dataset");
    }
}

MultiViewDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest = dir / "cameras.json";
    if (!std::filesystem::exists(manifest))
        throw DatasetFormatError("missing cameras.json in " + dir.string());
    nlohmann::json j;
    try {
        std::ifstream is(manifest);
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetFormatError("cameras.json: " + std::string(e.what()));
    }
    MultiViewDataset ds;
    try {
        ds.width = j.at("width").get<std::size_t>();
        ds.height = j.at("height").get<std::size_t>();
        ds.near = j.at("near").get<double>();
        ds.far = j.at("far").get<double>();
        for (const auto& fj : j.at("frames")) {
            Frame f;
            f.file = fj.at("file").get<std::string>();
            Intrinsics k;
            k.fx = fj.at("fx").get<double>();
            k.fy = fj.at("fy").get<double>();
            k.cx = fj.at("cx").get<double>();
            k.cy = fj.at("cy").get<double>();
            k.width = ds.width;
            k.height = ds.height;
            const auto c2w = fj.at("c2w").get<std::vector<double>>();
            if (c2w.size() != 16) throw DatasetFormatError("c2w of " + f.file + " needs 16 values");
            Mat4 m;
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) m(r, c) = c2w[r * 4 + c];
            f.camera = Camera(k, m);
            const auto img_path = dir / f.file;
            if (!std::filesystem::exists(img_path))
                throw DatasetFormatError("image " + img_path.string() + " not found");
            f.image = read_png(img_path);
            ds.frames.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DatasetFormatError("cameras.json: " + std::string(e.what()));
    }
    ds.validate();
    return ds;
}

void save_dataset(const MultiViewDataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["width"] = dataset.width;
    j["height"] = dataset.height;
    j["near"] = dataset.near;
    j["far"] = dataset.far;
    j["frames"] = nlohmann::json::array();
    for (const Frame& f : dataset.frames) {
        write_png(f.image, dir / f.file);
        const Intrinsics& k = f.camera.intrinsics();
        std::vector<double> c2w(16);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) c2w[r * 4 + c] = f.camera.camera_to_world()(r, c);
        j["frames"].push_back(
            {{"file", f.file}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"c2w", c2w}});
    }
    std::ofstream os(dir / "cameras.json");
    if (!os) throw IoError("cannot write cameras.json in " + dir.string());
    os << j.dump(2) << "\n";
}

std::vector<Camera> orbit_cameras(std::size_t count, double radius, double elevation_deg,
                                  const Intrinsics& intrinsics, double phase_deg) {
    std::vector<Camera> cams;
    const double elev = elevation_deg * std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double az = (phase_deg + 360.0 * static_cast<double>(i) / static_cast<double>(count)) *
                          std::numbers::pi / 180.0;
        const Vec3 eye(radius * std::cos(elev) * std::sin(az), radius * std::sin(elev),
                       radius * std::cos(elev) * std::cos(az));
        cams.push_back(look_at(eye, Vec3::Zero(), Vec3::UnitY(), intrinsics));
    }
    return cams;
}

MultiViewDataset make_synthetic_dataset(const SyntheticScene& scene,
                                        const std::vector<Camera>& cameras, double near,
                                        double far, double step, const Vec3& background) {
    MultiViewDataset ds;
    ds.near = near;
    ds.far = far;
    if (cameras.empty()) throw UsageError("make_synthetic_dataset: no cameras");
    ds.width = cameras.front().width();
    ds.height = cameras.front().height();
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << std::setw(3) << std::setfill('0') << i << ".png";
        ds.frames.push_back(
            Frame{name.str(), render_scene_analytic(scene, cameras[i], step, background), cameras[i]});
    }
    ds.validate();
    return ds;
}

}  // namespace radiart
