#include "radiart/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "radiart/config.hpp"
#include "radiart/embedding.hpp"
#include "radiart/error.hpp"
#include "radiart/geometry.hpp"
#include "radiart/meshing.hpp"
#include "radiart/trainer.hpp"

namespace radiart {

namespace {

bool env_deterministic() {
    const char* v = std::getenv("RADIART_DETERMINISTIC");
    return v && std::string(v) == "1";
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string numbered(const std::string& stem, std::size_t i, const std::string& suffix) {
    std::ostringstream s;
    s << stem << std::setw(3) << std::setfill('0') << i << suffix;
    return s.str();
}

void write_image_pair(const Image& img, const std::filesystem::path& png) {
    write_png(img, png);
    std::filesystem::path pfm = png;
    pfm.replace_extension(".pfm");
    write_pfm(img, pfm);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream o(path);
    if (!o) throw IoError("cannot write " + path.string());
    o << text;
    if (!o) throw IoError("failed writing " + path.string());
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& sets, bool deterministic,
                      bool need_dataset) {
    if (!std::filesystem::exists(path)) throw ValidationError("config file " + path + " does not exist");
    RunConfig c = load_run_config(path, sets);
    c.deterministic = c.deterministic || deterministic || env_deterministic();
    validate_run_config(c, need_dataset);
    return c;
}

std::function<void(const nlohmann::json&)> progress(std::ostream& out) {
    return [&out](const nlohmann::json& rec) {
        if (!rec.contains("epoch_end")) return;
        out << rec["stage"].get<std::string>() << " epoch " << rec["epoch"].get<std::size_t>() << " step "
            << rec["step"].get<std::size_t>() << " loss " << rec["loss"].get<double>();
        if (rec.contains("heldout_psnr")) out << " heldout_psnr " << rec["heldout_psnr"].get<double>();
        if (rec.contains("epoch_cosine")) out << " cosine " << rec["epoch_cosine"].get<double>();
        out << std::endl;
    };
}

RenderConfig dataset_render(const RunConfig& c, const MultiViewDataset& ds) {
    RenderConfig r = c.render;
    r.near = ds.near;
    r.far = ds.far;
    r.seed = c.seeds.render;
    return r;
}

int cmd_reconstruct(const std::string& config_path, const std::vector<std::string>& sets, bool det,
                    std::ostream& out) {
    const RunConfig c = load_config(config_path, sets, det, true);
    const MultiViewDataset ds = load_dataset(c.dataset_path);
    TrainConfig tc = c.train_config();
    tc.on_step = progress(out);
    const auto [params, report] = train_reconstruction(ds, c.arch, tc);

    ensure_dir(c.output_dir);
    save_checkpoint(params, c.output_dir / "field_rec.ckpt");
    report.write_jsonl(c.output_dir / "report_reconstruct.jsonl");
    write_text(c.output_dir / "config.json", to_json(c).dump(2) + "\n");
    const RenderConfig r = dataset_render(c, ds);
    std::vector<std::size_t> shown = c.holdout;
    if (shown.empty()) shown.push_back(0);
    for (std::size_t h : shown)
        write_image_pair(render_view(params, ds.frames[h].camera, r).image,
                         c.output_dir / numbered("heldout_", h, ".png"));
    out << "wrote " << (c.output_dir / "field_rec.ckpt").string() << std::endl;
    return kExitOk;
}

int cmd_stylize(const std::string& config_path, const std::string& ckpt_path,
                const std::vector<std::string>& sets, bool det, std::ostream& out) {
    const RunConfig c = load_config(config_path, sets, det, true);
    if (c.task.target.empty()) throw ValidationError("task.target must be set for stylization");
    const FieldParams rec = load_checkpoint(ckpt_path);
    if (rec.role != CheckpointRole::Reconstructed)
        throw ValidationError("checkpoint " + ckpt_path + " is tagged '" + to_string(rec.role) +
                              "'; stylization needs a reconstructed checkpoint");
    const MultiViewDataset ds = load_dataset(c.dataset_path);
    const auto provider = make_provider(c.provider);
    TrainConfig tc = c.train_config();
    tc.on_step = progress(out);
    const auto [sty, report] = stylize(rec, ds, c.task, *provider, tc);

    ensure_dir(c.output_dir);
    save_checkpoint(sty, c.output_dir / "field_sty.ckpt");
    report.write_jsonl(c.output_dir / "report_stylize.jsonl");
    write_text(c.output_dir / "config.json", to_json(c).dump(2) + "\n");
    const RenderConfig r = dataset_render(c, ds);
    const std::size_t n = ds.frames.size();
    for (std::size_t pose : {std::size_t{0}, n / 3, 2 * n / 3}) {
        const Camera& cam = ds.frames[pose].camera;
        write_image_pair(render_view(rec, cam, r).image, c.output_dir / numbered("pose_", pose, "_before.png"));
        write_image_pair(render_view(sty, cam, r).image, c.output_dir / numbered("pose_", pose, "_after.png"));
    }
    out << "wrote " << (c.output_dir / "field_sty.ckpt").string() << std::endl;
    return kExitOk;
}

struct RenderArgs {
    std::string checkpoint;
    std::string config;
    std::vector<std::string> sets;
    long long pose = -2;
    std::string camera;
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t samples = 0;
    double near = 2.0;
    double far = 6.0;
    std::string out = "render.png";
    std::uint64_t seed = 2;
    bool uniform = false;
};

Camera camera_from_json(const std::string& path, double& near, double& far) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read camera file " + path);
    try {
        const auto j = nlohmann::json::parse(in);
        Intrinsics k;
        k.width = j.at("width").get<std::size_t>();
        k.height = j.at("height").get<std::size_t>();
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        const auto c2w = j.at("c2w").get<std::vector<double>>();
        if (c2w.size() != 16) throw ValidationError("camera c2w needs 16 values");
        Mat4 m;
        for (int r = 0; r < 4; ++r)
            for (int col = 0; col < 4; ++col) m(r, col) = c2w[r * 4 + col];
        if (j.contains("near")) near = j["near"].get<double>();
        if (j.contains("far")) far = j["far"].get<double>();
        return Camera(k, m);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad camera file " + path + ": " + e.what());
    }
}

int cmd_render(const RenderArgs& a, bool det, std::ostream& out) {
    const FieldParams params = load_checkpoint(a.checkpoint);
    RenderConfig r;
    Camera cam;
    if (!a.camera.empty()) {
        double near = a.near, far = a.far;
        cam = camera_from_json(a.camera, near, far);
        r.near = near;
        r.far = far;
        r.seed = a.seed;
    } else {
        if (a.config.empty()) throw ValidationError("render needs --camera or --config with --pose");
        const RunConfig c = load_config(a.config, a.sets, det, true);
        if (a.pose < 0) throw ValidationError("pose index must be >= 0");
        const MultiViewDataset ds = load_dataset(c.dataset_path);
        if (static_cast<std::size_t>(a.pose) >= ds.frames.size())
            throw ValidationError("pose index " + std::to_string(a.pose) + " out of range (dataset has " +
                                  std::to_string(ds.frames.size()) + " frames)");
        r = dataset_render(c, ds);
        cam = ds.frames[static_cast<std::size_t>(a.pose)].camera;
    }
    if (a.samples) r.samples_per_ray = a.samples;
    if (a.uniform) r.strategy = SamplingStrategy::Uniform;
    if (a.width) r.width = a.width;
    if (a.height) r.height = a.height;
    if ((r.width == 0) != (r.height == 0)) throw ValidationError("give both --width and --height");
    r.validate();
    const Image img = render_view(params, cam, r).image;
    const std::filesystem::path png(a.out);
    if (png.has_parent_path()) ensure_dir(png.parent_path());
    write_image_pair(img, png);
    out << "wrote " << png.string() << std::endl;
    return kExitOk;
}

int cmd_mesh(const std::string& ckpt, long long res, double iso, const std::vector<double>& bbox,
             const std::string& out_path, std::ostream& out, std::ostream& err) {
    if (res < 2) throw ValidationError("mesh resolution must be >= 2");
    if (bbox.size() != 6) throw ValidationError("--bbox needs 6 values");
    if (!std::isfinite(iso)) throw ValidationError("iso level must be finite");
    const FieldParams params = load_checkpoint(ckpt);
    Aabb box{Vec3(bbox[0], bbox[1], bbox[2]), Vec3(bbox[3], bbox[4], bbox[5])};
    const auto n = static_cast<std::size_t>(res);
    const DensityGrid grid = bake_density_grid(params, box, {n, n, n});
    const TriangleMesh mesh = marching_cubes(grid, iso);
    const std::filesystem::path p(out_path);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    export_obj(mesh, p);
    if (mesh.empty()) err << "warning: no surface at iso " << iso << "; wrote an empty mesh" << std::endl;
    out << "wrote " << p.string() << " (" << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
        << " triangles)" << std::endl;
    return kExitOk;
}

struct SynthArgs {
    std::string scene = "sphere";
    std::string out = "data";
    std::size_t views = 9;
    std::size_t size = 32;
    double radius = 1.0;
    double sigma = 8.0;
    double camera_radius = 4.0;
    double elevation = 20.0;
    double fov = 40.0;
    double near = 2.5;
    double far = 5.5;
    double step = 0.005;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SyntheticScene scene;
    if (a.scene == "sphere")
        scene = make_sphere_scene(a.radius, a.sigma, Vec3(0.8, 0.4, 0.2));
    else if (a.scene == "solid")
        scene = make_sphere_scene(a.radius, a.sigma, Vec3(0.3, 0.6, 0.9), false);
    else if (a.scene == "shell")
        scene = make_soft_shell_scene(a.radius, 0.1, a.sigma, Vec3(0.2, 0.7, 0.4));
    else if (a.scene == "slab")
        scene = make_slab_scene(-0.25, 0.5, a.sigma, Vec3(0.9, 0.8, 0.3), a.radius);
    else
        throw ValidationError("unknown scene '" + a.scene + "' (sphere, solid, shell, slab)");
    if (a.views == 0 || a.size == 0) throw ValidationError("--views and --size must be positive");
    const auto cams =
        orbit_cameras(a.views, a.camera_radius, a.elevation, intrinsics_from_fov(a.size, a.size, a.fov));
    const MultiViewDataset ds = make_synthetic_dataset(scene, cams, a.near, a.far, a.step);
    save_dataset(ds, a.out);
    out << "wrote " << a.views << " views to " << a.out << std::endl;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Text-guided radiance field stylization"};
    app.require_subcommand(1);
    bool det = false;
    app.add_flag("--deterministic", det, "Reproducible reports (same as RADIART_DETERMINISTIC=1)");

    std::string config_path, ckpt_path;
    std::vector<std::string> sets;
    auto* rec = app.add_subcommand("reconstruct", "Fit a field to a posed image set");
    rec->add_option("config", config_path, "Run config (JSON)")->required();
    rec->add_option("--set", sets, "Override section.key=value");

    auto* sty = app.add_subcommand("stylize", "Fine-tune a reconstructed field towards a text prompt");
    sty->add_option("config", config_path, "Run config (JSON)")->required();
    sty->add_option("checkpoint", ckpt_path, "Reconstructed checkpoint")->required();
    sty->add_option("--set", sets, "Override section.key=value");

    RenderArgs ra;
    auto* ren = app.add_subcommand("render", "Render a view of a checkpoint");
    ren->add_option("checkpoint", ra.checkpoint, "Checkpoint")->required();
    ren->add_option("--config", ra.config, "Run config naming the dataset for --pose");
    ren->add_option("--set", ra.sets, "Override section.key=value");
    ren->add_option("--pose", ra.pose, "Dataset frame index");
    ren->add_option("--camera", ra.camera, "Camera JSON (width, height, fx, fy, cx, cy, c2w, near, far)");
    ren->add_option("--width", ra.width, "Output width");
    ren->add_option("--height", ra.height, "Output height");
    ren->add_option("--samples", ra.samples, "Samples per ray");
    ren->add_option("--near", ra.near, "Near bound for --camera");
    ren->add_option("--far", ra.far, "Far bound for --camera");
    ren->add_option("--seed", ra.seed, "Sampling seed for --camera");
    ren->add_flag("--uniform", ra.uniform, "Evenly spaced samples instead of stratified");
    ren->add_option("--out", ra.out, "Output PNG (a PFM is written next to it)");

    long long res = 128;
    double iso = default_iso_level();
    std::vector<double> bbox = {-1.5, -1.5, -1.5, 1.5, 1.5, 1.5};
    std::string mesh_out = "mesh.obj";
    auto* msh = app.add_subcommand("mesh", "Extract an iso-surface of the density");
    msh->add_option("checkpoint", ckpt_path, "Checkpoint")->required();
    msh->add_option("--res", res, "Lattice points per axis");
    msh->add_option("--iso", iso, "Density iso level");
    msh->add_option("--bbox", bbox, "xmin ymin zmin xmax ymax zmax")->expected(6);
    msh->add_option("--out", mesh_out, "Output OBJ");

    SynthArgs sa;
    auto* syn = app.add_subcommand("synth", "Write a posed image set of an analytic scene");
    syn->add_option("--scene", sa.scene, "sphere, solid, shell or slab");
    syn->add_option("--out", sa.out, "Output directory");
    syn->add_option("--views", sa.views, "Number of orbit views");
    syn->add_option("--size", sa.size, "Image side in pixels");
    syn->add_option("--radius", sa.radius, "Object radius");
    syn->add_option("--sigma", sa.sigma, "Object density");
    syn->add_option("--camera-radius", sa.camera_radius, "Orbit radius");
    syn->add_option("--elevation", sa.elevation, "Orbit elevation in degrees");
    syn->add_option("--fov", sa.fov, "Horizontal field of view in degrees");
    syn->add_option("--near", sa.near, "Near bound");
    syn->add_option("--far", sa.far, "Far bound");
    syn->add_option("--step", sa.step, "Ground-truth quadrature step");

    std::vector<std::string> argv_store;
    argv_store.emplace_back("radiart");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*rec) return cmd_reconstruct(config_path, sets, det, out);
        if (*sty) return cmd_stylize(config_path, ckpt_path, sets, det, out);
        if (*ren) return cmd_render(ra, det, out);
        if (*msh) return cmd_mesh(ckpt_path, res, iso, bbox, mesh_out, out, err);
        if (*syn) return cmd_synth(sa, out);
    } catch (const DivergenceError& e) {
        err << "error (divergence): " << e.what() << std::endl;
        return kExitDivergence;
    } catch (const NumericError& e) {
        err << "error (numeric): " << e.what() << std::endl;
        return kExitDivergence;
    } catch (const BridgeError& e) {
        err << "error (bridge): " << e.what() << std::endl;
        return kExitBridge;
    } catch (const IoError& e) {
        err << "error (I/O): " << e.what() << std::endl;
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << std::endl;
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error (I/O): " << e.what() << std::endl;
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace radiart
