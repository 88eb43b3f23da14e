#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "radiart/embedding.hpp"
#include "radiart/field.hpp"
#include "radiart/geometry.hpp"
#include "radiart/losses.hpp"
#include "radiart/renderer.hpp"

namespace radiart {

struct Stage1Config {
    std::size_t epochs = 6;
    double lr = 5e-4;
    std::size_t rays_per_batch = 1024;
    /// 0 means one pass over all training rays per epoch.
    std::size_t steps_per_epoch = 0;
};

struct Stage2Config {
    std::size_t epochs = 4;
    double lr = 1e-3;
    std::size_t views_per_step = 1;
    /// Side of the square tiles re-rendered with gradient tracking.
    std::size_t tile_size = 64;
    /// 0 means one step per training pose (one pass over the poses per epoch).
    std::size_t steps_per_epoch = 0;
    bool freeze_density = false;
    /// Train on poses interpolated between neighbouring training cameras.
    bool interpolate_poses = false;
};

struct Seeds {
    std::uint64_t init = 0;
    std::uint64_t train = 1;
    std::uint64_t render = 2;
};

struct TrainConfig {
    Stage1Config stage1;
    Stage2Config stage2;
    /// near/far are taken from the dataset.
    RenderConfig render;
    Seeds seeds;
    /// Dataset frames excluded from training and used for evaluation.
    std::vector<std::size_t> holdout;
    /// Deterministic mode drops wall-clock fields from reports so that runs
    /// with equal seeds produce byte-identical reports.
    bool deterministic = false;
    /// Called after every step with the step record (progress output).
    std::function<void(const nlohmann::json&)> on_step;

    /// Throws ValidationError on non-positive learning rates, zero epochs,
    /// batch sizes or tile size.
    void validate() const;
};

struct TrainReport {
    std::string stage;
    /// Stage 2: name of the embedding provider (a bridge reports its variant).
    std::string provider;
    /// One JSON object per optimisation step; the last record of each epoch
    /// also carries the epoch-level metrics.
    std::vector<nlohmann::json> records;
    std::vector<double> loss;
    /// Stage 1: held-out PSNR after each epoch.
    std::vector<double> epoch_psnr;
    /// Stage 2: mean cosine between the renders of the training poses and the
    /// target text, before training (index 0) and after each epoch.
    std::vector<double> epoch_cosine;
    /// Stage 2, per step.
    std::vector<double> step_cosine;
    std::vector<double> con_global;
    std::vector<StyleBreakdown> breakdowns;
    double wall_seconds = 0.0;

    /// JSON lines, one record per step.
    void write_jsonl(const std::filesystem::path& path) const;
};

/// Fits a field to the training frames with the mean squared color loss and
/// Adam. Throws DivergenceError when the loss or a gradient becomes non-finite.
std::pair<FieldParams, TrainReport> train_reconstruction(const MultiViewDataset& dataset,
                                                         const FieldArch& arch,
                                                         const TrainConfig& config);

/// `count` squares of side floor(fraction·min(W,H)) placed uniformly inside
/// the image. Throws UsageError when the side would be below 4 pixels.
std::vector<PixelRect> sample_patches(std::size_t width, std::size_t height, double fraction,
                                      std::size_t count, std::uint64_t seed);

/// Disjoint tiles of at most tile×tile pixels covering the image, row major.
std::vector<PixelRect> tile_grid(std::size_t width, std::size_t height, std::size_t tile);

struct StyleStep {
    std::vector<Tensor> grads;  // one per FieldParams tensor
    StyleBreakdown breakdown;
    Image image;
    /// Cosine between the rendered view's embedding and the target text.
    double cosine = 0.0;
};

/// Stylization gradient at bounded memory: (1) render the whole view without
/// gradient tracking, (2) differentiate the image-space objective with respect
/// to the pixels only, (3) re-render each tile with gradient tracking and
/// backpropagate Σ G⊙I_tile plus the tile's share of the weight regulariser.
StyleStep deferred_style_step(const FieldParams& params, const Camera& camera,
                              const RenderConfig& render, const StyleContext& ctx,
                              std::size_t tile_size);

/// Same gradient from a single graph over the whole view (memory-hungry
/// reference path).
StyleStep monolithic_style_step(const FieldParams& params, const Camera& camera,
                                const RenderConfig& render, const StyleContext& ctx);

/// Hooks for stylize(); all optional.
struct StylizeOptions {
    const FeatureExtractor* extractor = nullptr;
    /// Checked once per step; returning true stops training early.
    std::function<bool(std::size_t step)> stop;
};

/// Fine-tunes a copy of a reconstructed field towards task.target. Source
/// renders of every training pose are produced once from the frozen input.
/// Throws ValidationError if `reconstructed` is not tagged reconstructed and
/// DivergenceError on non-finite losses or gradients.
std::pair<FieldParams, TrainReport> stylize(const FieldParams& reconstructed,
                                            const MultiViewDataset& dataset, const StyleTask& task,
                                            const EmbeddingProvider& provider,
                                            const TrainConfig& config,
                                            const StylizeOptions& options = {});

/// Mean cosine similarity between embeddings of renders from `cameras` and
/// the embedding of `text`.
double mean_cosine_to_text(const FieldParams& params, const std::vector<Camera>& cameras,
                           const RenderConfig& render, const EmbeddingProvider& provider,
                           const std::string& text);

/// Mean per-ray weight regulariser over the renders of `cameras`.
double mean_weight_reg(const FieldParams& params, const std::vector<Camera>& cameras,
                       const RenderConfig& render);

/// Frames not listed in `holdout`, in dataset order.
std::vector<std::size_t> training_indices(std::size_t frame_count,
                                          const std::vector<std::size_t>& holdout);

}  // namespace radiart
