#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "radiart/field.hpp"
#include "radiart/losses.hpp"
#include "radiart/meshing.hpp"
#include "radiart/renderer.hpp"
#include "radiart/trainer.hpp"

namespace radiart {

struct MeshSettings {
    std::size_t resolution = 128;
    double iso = default_iso_level();
    Aabb bounds{Vec3::Constant(-1.5), Vec3::Constant(1.5)};
};

/// One run's settings. Relative paths are resolved against the directory of
/// the config file they came from.
struct RunConfig {
    std::filesystem::path dataset_path;
    std::vector<std::size_t> holdout;
    FieldArch arch = FieldArch::desk();
    RenderConfig render;
    Stage1Config stage1;
    Stage2Config stage2;
    StyleTask task;
    /// Empty: the built-in bank.
    std::filesystem::path negatives_file;
    std::string provider = "toy:0";
    std::filesystem::path output_dir = "out";
    Seeds seeds;
    bool deterministic = false;
    MeshSettings mesh;

    TrainConfig train_config() const;
};

/// Every setting with its default value, in the on-disk layout:
/// {dataset, arch, render, stage1, stage2, task, provider, output_dir, seeds,
/// deterministic, mesh}.
nlohmann::json default_config_json();

/// Applies "section.key=value". The value is parsed as JSON when possible
/// and taken as a string otherwise. Throws ValidationError for unknown keys.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Builds a RunConfig from a (possibly partial) JSON document layered over the
/// defaults. Unknown sections or keys and ill-typed values are
/// ValidationErrors; the negative bank file, if named, is loaded here.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Reads the file, applies the overrides, parses. Throws IoError if the file
/// cannot be read and ValidationError if it is not valid JSON.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

/// Serialises back to the on-disk layout (negatives are referenced by file,
/// not inlined).
nlohmann::json to_json(const RunConfig& config);

/// Invariants of every module plus existence of the referenced files.
/// `need_dataset` requires dataset.path to name a directory with a manifest.
void validate_run_config(const RunConfig& config, bool need_dataset);

}  // namespace radiart
