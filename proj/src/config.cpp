#include "radiart/config.hpp"

#include <fstream>

#include "radiart/error.hpp"

namespace radiart {

namespace {

using nlohmann::json;

void merge_checked(json& base, const json& patch, const std::string& where) {
    if (!patch.is_object()) throw ValidationError("config " + (where.empty() ? "document" : where) + " must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = where.empty() ? it.key() : where + "." + it.key();
        if (!base.contains(it.key())) throw ValidationError("unknown config key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object())
            merge_checked(slot, it.value(), key);
        else
            slot = it.value();
    }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config ") + section + "." + key + " has the wrong type");
    }
}

template <typename T>
T get_top(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config ") + key + " has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.stage1 = stage1;
    t.stage2 = stage2;
    t.render = render;
    t.seeds = seeds;
    t.holdout = holdout;
    t.deterministic = deterministic;
    return t;
}

json default_config_json() {
    const RenderConfig r;
    const Stage1Config s1;
    const Stage2Config s2;
    const StyleTask task;
    const Seeds seeds;
    const FieldArch arch = FieldArch::desk();
    const MeshSettings mesh;
    return {
        {"dataset", {{"path", ""}, {"holdout", json::array()}}},
        {"arch",
         {{"pe_levels_pos", arch.pe_levels_pos},
          {"pe_levels_dir", arch.pe_levels_dir},
          {"hidden_width", arch.hidden_width},
          {"depth", arch.depth}}},
        {"render",
         {{"samples_per_ray", r.samples_per_ray},
          {"strategy", "stratified"},
          {"background", {r.background.x(), r.background.y(), r.background.z()}},
          {"width", r.width},
          {"height", r.height},
          {"chunk_rays", r.chunk_rays}}},
        {"stage1",
         {{"epochs", s1.epochs},
          {"lr", s1.lr},
          {"rays_per_batch", s1.rays_per_batch},
          {"steps_per_epoch", s1.steps_per_epoch}}},
        {"stage2",
         {{"epochs", s2.epochs},
          {"lr", s2.lr},
          {"views_per_step", s2.views_per_step},
          {"tile_size", s2.tile_size},
          {"steps_per_epoch", s2.steps_per_epoch},
          {"freeze_density", s2.freeze_density},
          {"interpolate_poses", s2.interpolate_poses}}},
        {"task",
         {{"target", task.target},
          {"source", task.source},
          {"negatives_file", ""},
          {"tau", task.tau},
          {"lambda_dir", task.lambda_dir},
          {"lambda_global", task.lambda_global},
          {"lambda_local", task.lambda_local},
          {"lambda_perceptual", task.lambda_perceptual},
          {"lambda_reg", task.lambda_reg},
          {"patch_fraction", task.patch_fraction},
          {"patches_per_view", task.patches_per_view},
          {"negatives_per_step", task.negatives_per_step}}},
        {"provider", "toy:0"},
        {"output_dir", "out"},
        {"seeds", {{"init", seeds.init}, {"train", seeds.train}, {"render", seeds.render}}},
        {"deterministic", false},
        {"mesh",
         {{"resolution", mesh.resolution},
          {"iso", mesh.iso},
          {"bbox",
           {mesh.bounds.lo.x(), mesh.bounds.lo.y(), mesh.bounds.lo.z(), mesh.bounds.hi.x(),
            mesh.bounds.hi.y(), mesh.bounds.hi.z()}}}},
    };
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("override '" + assignment + "' must look like section.key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json defaults = default_config_json();
    json* node = &config;
    const json* ref = &defaults;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty() || !ref->is_object() || !ref->contains(key))
            throw ValidationError("unknown config key '" + path + "'");
        ref = &(*ref)[key];
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
    json j = default_config_json();
    merge_checked(j, doc, "");

    RunConfig c;
    c.dataset_path = resolve(base_dir, get<std::string>(j, "dataset", "path"));
    c.holdout = get<std::vector<std::size_t>>(j, "dataset", "holdout");

    c.arch.pe_levels_pos = get<int>(j, "arch", "pe_levels_pos");
    c.arch.pe_levels_dir = get<int>(j, "arch", "pe_levels_dir");
    c.arch.hidden_width = get<int>(j, "arch", "hidden_width");
    c.arch.depth = get<int>(j, "arch", "depth");

    c.render.samples_per_ray = get<std::size_t>(j, "render", "samples_per_ray");
    const auto strategy = get<std::string>(j, "render", "strategy");
    if (strategy == "stratified")
        c.render.strategy = SamplingStrategy::Stratified;
    else if (strategy == "uniform")
        c.render.strategy = SamplingStrategy::Uniform;
    else
        throw ValidationError("render.strategy must be 'stratified' or 'uniform'");
    const auto bg = get<std::vector<double>>(j, "render", "background");
    if (bg.size() != 3) throw ValidationError("render.background needs 3 values");
    c.render.background = Vec3(bg[0], bg[1], bg[2]);
    c.render.width = get<std::size_t>(j, "render", "width");
    c.render.height = get<std::size_t>(j, "render", "height");
    c.render.chunk_rays = get<std::size_t>(j, "render", "chunk_rays");

    c.stage1.epochs = get<std::size_t>(j, "stage1", "epochs");
    c.stage1.lr = get<double>(j, "stage1", "lr");
    c.stage1.rays_per_batch = get<std::size_t>(j, "stage1", "rays_per_batch");
    c.stage1.steps_per_epoch = get<std::size_t>(j, "stage1", "steps_per_epoch");

    c.stage2.epochs = get<std::size_t>(j, "stage2", "epochs");
    c.stage2.lr = get<double>(j, "stage2", "lr");
    c.stage2.views_per_step = get<std::size_t>(j, "stage2", "views_per_step");
    c.stage2.tile_size = get<std::size_t>(j, "stage2", "tile_size");
    c.stage2.steps_per_epoch = get<std::size_t>(j, "stage2", "steps_per_epoch");
    c.stage2.freeze_density = get<bool>(j, "stage2", "freeze_density");
    c.stage2.interpolate_poses = get<bool>(j, "stage2", "interpolate_poses");

    c.task.target = get<std::string>(j, "task", "target");
    c.task.source = get<std::string>(j, "task", "source");
    c.negatives_file = resolve(base_dir, get<std::string>(j, "task", "negatives_file"));
    c.task.tau = get<double>(j, "task", "tau");
    c.task.lambda_dir = get<double>(j, "task", "lambda_dir");
    c.task.lambda_global = get<double>(j, "task", "lambda_global");
    c.task.lambda_local = get<double>(j, "task", "lambda_local");
    c.task.lambda_perceptual = get<double>(j, "task", "lambda_perceptual");
    c.task.lambda_reg = get<double>(j, "task", "lambda_reg");
    c.task.patch_fraction = get<double>(j, "task", "patch_fraction");
    c.task.patches_per_view = get<std::size_t>(j, "task", "patches_per_view");
    c.task.negatives_per_step = get<std::size_t>(j, "task", "negatives_per_step");
    if (!c.negatives_file.empty()) {
        if (!std::filesystem::exists(c.negatives_file))
            throw ValidationError("negatives file " + c.negatives_file.string() + " does not exist");
        c.task.negatives = load_negative_bank(c.negatives_file);
    }

    c.provider = get_top<std::string>(j, "provider");
    c.output_dir = resolve(base_dir, get_top<std::string>(j, "output_dir"));
    c.seeds.init = get<std::uint64_t>(j, "seeds", "init");
    c.seeds.train = get<std::uint64_t>(j, "seeds", "train");
    c.seeds.render = get<std::uint64_t>(j, "seeds", "render");
    c.deterministic = get_top<bool>(j, "deterministic");

    c.mesh.resolution = get<std::size_t>(j, "mesh", "resolution");
    c.mesh.iso = get<double>(j, "mesh", "iso");
    const auto box = get<std::vector<double>>(j, "mesh", "bbox");
    if (box.size() != 6) throw ValidationError("mesh.bbox needs 6 values");
    c.mesh.bounds.lo = Vec3(box[0], box[1], box[2]);
    c.mesh.bounds.hi = Vec3(box[3], box[4], box[5]);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    for (const std::string& o : overrides) apply_override(doc, o);
    return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
    json j = default_config_json();
    j["dataset"]["path"] = c.dataset_path.string();
    j["dataset"]["holdout"] = c.holdout;
    j["arch"] = {{"pe_levels_pos", c.arch.pe_levels_pos},
                 {"pe_levels_dir", c.arch.pe_levels_dir},
                 {"hidden_width", c.arch.hidden_width},
                 {"depth", c.arch.depth}};
    j["render"]["samples_per_ray"] = c.render.samples_per_ray;
    j["render"]["strategy"] = c.render.strategy == SamplingStrategy::Uniform ? "uniform" : "stratified";
    j["render"]["background"] = {c.render.background.x(), c.render.background.y(), c.render.background.z()};
    j["render"]["width"] = c.render.width;
    j["render"]["height"] = c.render.height;
    j["render"]["chunk_rays"] = c.render.chunk_rays;
    j["stage1"] = {{"epochs", c.stage1.epochs},
                   {"lr", c.stage1.lr},
                   {"rays_per_batch", c.stage1.rays_per_batch},
                   {"steps_per_epoch", c.stage1.steps_per_epoch}};
    j["stage2"] = {{"epochs", c.stage2.epochs},
                   {"lr", c.stage2.lr},
                   {"views_per_step", c.stage2.views_per_step},
                   {"tile_size", c.stage2.tile_size},
                   {"steps_per_epoch", c.stage2.steps_per_epoch},
                   {"freeze_density", c.stage2.freeze_density},
                   {"interpolate_poses", c.stage2.interpolate_poses}};
    j["task"] = {{"target", c.task.target},
                 {"source", c.task.source},
                 {"negatives_file", c.negatives_file.string()},
                 {"tau", c.task.tau},
                 {"lambda_dir", c.task.lambda_dir},
                 {"lambda_global", c.task.lambda_global},
                 {"lambda_local", c.task.lambda_local},
                 {"lambda_perceptual", c.task.lambda_perceptual},
                 {"lambda_reg", c.task.lambda_reg},
                 {"patch_fraction", c.task.patch_fraction},
                 {"patches_per_view", c.task.patches_per_view},
                 {"negatives_per_step", c.task.negatives_per_step}};
    j["provider"] = c.provider;
    j["output_dir"] = c.output_dir.string();
    j["seeds"] = {{"init", c.seeds.init}, {"train", c.seeds.train}, {"render", c.seeds.render}};
    j["deterministic"] = c.deterministic;
    j["mesh"] = {{"resolution", c.mesh.resolution},
                 {"iso", c.mesh.iso},
                 {"bbox",
                  {c.mesh.bounds.lo.x(), c.mesh.bounds.lo.y(), c.mesh.bounds.lo.z(), c.mesh.bounds.hi.x(),
                   c.mesh.bounds.hi.y(), c.mesh.bounds.hi.z()}}};
    return j;
}

void validate_run_config(const RunConfig& c, bool need_dataset) {
    c.arch.validate();
    c.render.validate();
    c.train_config().validate();
    // the target prompt is only required by stylization
    StyleTask task = c.task;
    if (task.target.empty()) task.target = "-";
    task.validate();
    if (c.provider.rfind("toy:", 0) != 0 && c.provider.rfind("bridge:", 0) != 0)
        throw ValidationError("provider must be 'toy:<seed>' or 'bridge:<endpoint>'");
    if (c.mesh.resolution < 2) throw ValidationError("mesh.resolution must be >= 2");
    if (!std::isfinite(c.mesh.iso)) throw ValidationError("mesh.iso must be finite");
    for (int a = 0; a < 3; ++a)
        if (!(c.mesh.bounds.lo[a] < c.mesh.bounds.hi[a])) throw ValidationError("mesh.bbox is empty");
    if (need_dataset) {
        if (c.dataset_path.empty()) throw ValidationError("dataset.path is not set");
        if (!std::filesystem::is_directory(c.dataset_path))
            throw ValidationError("dataset directory " + c.dataset_path.string() + " does not exist");
        if (!std::filesystem::exists(c.dataset_path / "cameras.json"))
            throw ValidationError("dataset " + c.dataset_path.string() + " has no cameras.json");
    }
}

}  // namespace radiart
