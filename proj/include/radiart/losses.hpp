#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "radiart/autodiff.hpp"
#include "radiart/embedding.hpp"
#include "radiart/renderer.hpp"
#include "radiart/tensor.hpp"

namespace radiart {

/// Built-in bank of 200 style descriptions used as contrastive negatives.
const std::vector<std::string>& default_negative_bank();

/// What the stylization stage optimises towards, and how the terms are weighted.
struct StyleTask {
    std::string target;
    std::string source = "a photo";
    std::vector<std::string> negatives = default_negative_bank();
    double tau = 0.07;
    double lambda_dir = 1.0;
    double lambda_global = 0.2;
    double lambda_local = 0.1;
    double lambda_perceptual = 2.0;
    double lambda_reg = 0.1;
    double patch_fraction = 0.1;
    std::size_t patches_per_view = 4;
    std::size_t negatives_per_step = 32;

    /// Throws ValidationError on τ ≤ 0, negative weights, a patch fraction
    /// outside (0,1], empty prompts, zero counts or a target inside the
    /// negative bank.
    void validate() const;
};

/// One prompt per line (UTF-8); blank lines and surrounding whitespace are
/// dropped. Throws IoError if unreadable, DatasetFormatError if empty.
std::vector<std::string> load_negative_bank(const std::filesystem::path& path);
/// `count` distinct indices drawn uniformly from [0, bank_size), sorted;
/// all indices when count ≥ bank_size.
std::vector<std::size_t> sample_negative_indices(std::size_t bank_size, std::size_t count,
                                                 std::uint64_t seed);

enum class Reduction { Sum, Mean };

// ---- objectives on the tape -------------------------------------------------
// Embeddings are rows (1×D, or B×D for batches of views) of unit length.

/// Squared color error per ray, reduced over rays (mean by default).
ad::Var reconstruction_loss(ad::Var rendered, ad::Var target, Reduction r = Reduction::Mean);

/// 1 − ⟨e_img, e_text⟩ per view; e_text is a single row or one row per view.
ad::Var dir_absolute_loss(ad::Var e_img, ad::Var e_text, Reduction r = Reduction::Sum);

struct DirRelative {
    ad::Var value;
    /// Δi or Δt had (near) zero length; value is the constant 1.
    bool degenerate = false;
};
/// 1 − cos(e_tgt_img − e_src_img, e_tgt_text − e_src_text) for single rows.
DirRelative dir_relative_loss(ad::Var e_tgt_img, ad::Var e_src_img, ad::Var e_tgt_text,
                              ad::Var e_src_text);

/// −log softmax of the positive among [v·v⁺, v·v⁻₁, …]/τ. negatives is N×D,
/// N ≥ 1 (UsageError otherwise).
ad::Var contrastive_loss(ad::Var query, ad::Var positive, ad::Var negatives, double tau);

/// Σ over unordered sample pairs of w_i·w_j·|m_i − m_j| per ray, evaluated in
/// O(K) with prefix sums; weights R×K on the tape, midpoints R×K ascending per
/// row. Throws PreconditionError on negative weights or unsorted midpoints.
ad::Var weight_reg_loss(ad::Var weights, const Tensor& midpoints, Reduction r = Reduction::Mean);
/// O(K²) double sum of the same quantity, for checking.
double weight_reg_brute_force(const Tensor& weights, const Tensor& midpoints,
                              Reduction r = Reduction::Mean);

/// Σ over extractor levels of the mean squared feature difference.
ad::Var perceptual_loss(const FeatureExtractor& extractor, ad::Var image, ad::Var reference,
                        std::size_t width, std::size_t height);
/// Same, against reference features computed once beforehand.
ad::Var perceptual_loss(const FeatureExtractor& extractor, ad::Var image,
                        std::span<const Tensor> reference_features, std::size_t width,
                        std::size_t height);

/// The w×h window of an image held on the tape as (height·width)×3.
ad::Var crop_on_tape(ad::Var image, std::size_t image_width, const PixelRect& rect);

// ---- plain-value conveniences -------------------------------------------------

double loss_reconstruction(const Tensor& rendered, const Tensor& target);
double loss_dir_absolute(std::span<const double> e_img, std::span<const double> e_text);
/// Returns {value, degenerate}.
std::pair<double, bool> loss_dir_relative(std::span<const double> e_tgt_img,
                                          std::span<const double> e_src_img,
                                          std::span<const double> e_tgt_text,
                                          std::span<const double> e_src_text);
double loss_contrastive(std::span<const double> query, std::span<const double> positive,
                        const Tensor& negatives, double tau);
double loss_weight_reg(const Tensor& weights, const Tensor& midpoints,
                       Reduction r = Reduction::Mean);
double loss_perceptual(const FeatureExtractor& extractor, const Image& image, const Image& reference);

// ---- stylization objective ---------------------------------------------------

/// Everything the image-space terms need besides the rendered view itself.
/// Text embeddings and the source-view quantities are computed once and reused.
struct StyleContext {
    const StyleTask* task = nullptr;
    const EmbeddingProvider* provider = nullptr;
    const FeatureExtractor* extractor = nullptr;
    Tensor target_text;           // 1×D
    Tensor source_text;           // 1×D
    Tensor negatives;             // N×D, the subset used for this step
    Tensor source_image_embedding;  // 1×D, embedding of the source render
    std::vector<Tensor> source_features;
    std::vector<PixelRect> patches;
};

/// Text-side embeddings for a task: target, source and the whole negative bank.
struct TextEmbeddings {
    Tensor target;     // 1×D
    Tensor source;     // 1×D
    Tensor negatives;  // |bank|×D
};
TextEmbeddings embed_task_text(const StyleTask& task, const EmbeddingProvider& provider);

struct StyleImageTerms {
    ad::Var dir;
    ad::Var con_global;
    ad::Var con_local;  // mean over patches; constant 0 without patches
    ad::Var con;        // λg·con_global + λl·con_local
    ad::Var per;
    ad::Var total;      // λdir·dir + con + λp·per
    bool dir_degenerate = false;
};
/// Image-dependent part of the objective for a rendered view held on the tape.
StyleImageTerms style_image_terms(ad::Var image, std::size_t width, std::size_t height,
                                  const StyleContext& ctx);

struct StyleBreakdown {
    double dir = 0.0;
    double con_global = 0.0;
    double con_local = 0.0;
    double con = 0.0;
    double per = 0.0;
    double reg = 0.0;
    double total = 0.0;
    bool dir_degenerate = false;
};

struct StyleLoss {
    ad::Var total;
    StyleBreakdown breakdown;
};
/// Full objective: λdir·L_dir + (λg·L_con^g + λl·L_con^l) + λp·L_per + λr·L_reg.
/// weights/midpoints are the rays of the rendered view (R×K).
StyleLoss total_style_loss(ad::Var image, std::size_t width, std::size_t height, ad::Var weights,
                           const Tensor& midpoints, const StyleContext& ctx);

}  // namespace radiart
