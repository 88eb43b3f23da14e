#include "radiart/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "radiart/error.hpp"

namespace radiart {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

ad::Var reduce(ad::Var per_item, Reduction r) {
    return r == Reduction::Sum ? ad::sum(per_item) : ad::mean(per_item);
}

ad::Var zero(ad::Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

}  // namespace

void StyleTask::validate() const {
    if (trim(target).empty()) throw ValidationError("task.target must be a non-empty prompt");
    if (trim(source).empty()) throw ValidationError("task.source must be a non-empty prompt");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("task.tau must be > 0");
    for (double l : {lambda_dir, lambda_global, lambda_local, lambda_perceptual, lambda_reg})
        if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("loss weights must be >= 0");
    if (!(patch_fraction > 0.0 && patch_fraction <= 1.0))
        throw ValidationError("task.patch_fraction must lie in (0, 1]");
    if (patches_per_view == 0) throw ValidationError("task.patches_per_view must be positive");
    if (negatives_per_step == 0) throw ValidationError("task.negatives_per_step must be positive");
    if (negatives.empty()) throw ValidationError("negative bank is empty");
    const std::string t = trim(target);
    for (const std::string& n : negatives)
        if (trim(n) == t) throw ValidationError("target prompt '" + t + "' appears in the negative bank");
}

std::vector<std::string> load_negative_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read negatives file " + path.string());
    std::vector<std::string> bank;
    for (std::string line; std::getline(in, line);) {
        line = trim(line);
        if (!line.empty()) bank.push_back(line);
    }
    if (bank.empty()) throw DatasetFormatError("negatives file " + path.string() + " has no prompts");
    return bank;
}

std::vector<std::size_t> sample_negative_indices(std::size_t bank_size, std::size_t count,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> idx(bank_size);
    std::iota(idx.begin(), idx.end(), 0);
    if (count >= bank_size) return idx;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (bank_size - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// ---- tape objectives ----------------------------------------------------------

ad::Var reconstruction_loss(ad::Var rendered, ad::Var target, Reduction r) {
    if (!rendered.value().same_shape(target.value()))
        throw UsageError("reconstruction_loss: shape mismatch");
    return reduce(ad::row_sum(ad::square(rendered - target)), r);
}

ad::Var dir_absolute_loss(ad::Var e_img, ad::Var e_text, Reduction r) {
    if (e_img.cols() != e_text.cols()) throw UsageError("dir_absolute_loss: dimension mismatch");
    return reduce(1.0 - ad::row_sum(e_img * e_text), r);
}

DirRelative dir_relative_loss(ad::Var e_tgt_img, ad::Var e_src_img, ad::Var e_tgt_text,
                              ad::Var e_src_text) {
    constexpr double kMinDelta = 1e-10;
    ad::Var di = e_tgt_img - e_src_img;
    ad::Var dt = e_tgt_text - e_src_text;
    if (di.cols() != dt.cols()) throw UsageError("dir_relative_loss: dimension mismatch");
    double ni = 0.0, nt = 0.0;
    for (double v : di.value().values()) ni += v * v;
    for (double v : dt.value().values()) nt += v * v;
    if (std::sqrt(ni) < kMinDelta || std::sqrt(nt) < kMinDelta)
        return {e_tgt_img.tape->constant(Tensor::scalar(1.0)), true};
    return {1.0 - ad::cosine_similarity(di, dt), false};
}

ad::Var contrastive_loss(ad::Var query, ad::Var positive, ad::Var negatives, double tau) {
    if (!(tau > 0.0)) throw PreconditionError("contrastive_loss: tau must be > 0");
    if (negatives.rows() == 0) throw UsageError("contrastive_loss: no negatives");
    const std::size_t d = query.cols();
    if (query.rows() != 1 || positive.cols() != d || negatives.cols() != d)
        throw UsageError("contrastive_loss: dimension mismatch");
    ad::Var s_pos = ad::dot(query, positive);
    ad::Var s_neg = ad::reshape(ad::matmul(negatives, ad::reshape(query, d, 1)), 1, negatives.rows());
    const ad::Var parts[] = {s_pos, s_neg};
    ad::Var logits = ad::concat_cols(parts) * (1.0 / tau);
    return ad::logsumexp_rows(logits) - s_pos * (1.0 / tau);
}

ad::Var weight_reg_loss(ad::Var weights, const Tensor& midpoints, Reduction r) {
    const Tensor& w = weights.value();
    if (!w.same_shape(midpoints)) throw UsageError("weight_reg_loss: weights/midpoints shape mismatch");
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t k = 0; k < w.cols(); ++k) {
            if (!(w(i, k) >= 0.0)) throw PreconditionError("weight_reg_loss: negative ray weight");
            if (k > 0 && midpoints(i, k) < midpoints(i, k - 1))
                throw PreconditionError("weight_reg_loss: sample distances are not sorted");
        }
    // for sorted m, Σ_{i<j} w_i w_j (m_j − m_i) = Σ_j w_j (m_j·S_j − P_j) with
    // S_j = Σ_{i<j} w_i and P_j = Σ_{i<j} w_i m_i. Distances are taken
    // relative to each ray's first sample, which leaves the sum unchanged but
    // makes it exactly zero when all samples share one distance.
    ad::Tape& tape = *weights.tape;
    Tensor rel = midpoints;
    for (std::size_t i = 0; i < rel.rows(); ++i) {
        const double m0 = midpoints(i, 0);
        for (double& v : rel.row_span(i)) v -= m0;
    }
    ad::Var m = tape.constant(std::move(rel));
    ad::Var s = ad::cumsum_exclusive(weights);
    ad::Var p = ad::cumsum_exclusive(weights * m);
    return reduce(ad::row_sum(weights * (m * s - p)), r);
}

double weight_reg_brute_force(const Tensor& weights, const Tensor& midpoints, Reduction r) {
    if (!weights.same_shape(midpoints)) throw UsageError("weight_reg_brute_force: shape mismatch");
    double total = 0.0;
    for (std::size_t ray = 0; ray < weights.rows(); ++ray) {
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.cols(); ++i)
            for (std::size_t j = i + 1; j < weights.cols(); ++j)
                acc += weights(ray, i) * weights(ray, j) * std::abs(midpoints(ray, i) - midpoints(ray, j));
        total += acc;
    }
    return r == Reduction::Sum || weights.rows() == 0 ? total : total / static_cast<double>(weights.rows());
}

ad::Var perceptual_loss(const FeatureExtractor& extractor, ad::Var image, ad::Var reference,
                        std::size_t width, std::size_t height) {
    if (!image.value().same_shape(reference.value())) throw UsageError("perceptual_loss: size mismatch");
    const auto fa = extractor.extract_on_tape(image, width, height);
    const auto fb = extractor.extract_on_tape(reference, width, height);
    ad::Var total = zero(*image.tape);
    for (std::size_t l = 0; l < fa.size(); ++l) total = total + ad::mean(ad::square(fa[l] - fb[l]));
    return total;
}

ad::Var perceptual_loss(const FeatureExtractor& extractor, ad::Var image,
                        std::span<const Tensor> reference_features, std::size_t width,
                        std::size_t height) {
    if (image.rows() != width * height) throw UsageError("perceptual_loss: size mismatch");
    const auto fa = extractor.extract_on_tape(image, width, height);
    if (fa.size() != reference_features.size())
        throw UsageError("perceptual_loss: reference feature levels differ");
    ad::Tape& tape = *image.tape;
    ad::Var total = zero(tape);
    for (std::size_t l = 0; l < fa.size(); ++l) {
        if (!fa[l].value().same_shape(reference_features[l]))
            throw UsageError("perceptual_loss: size mismatch");
        total = total + ad::mean(ad::square(fa[l] - tape.constant(reference_features[l])));
    }
    return total;
}

ad::Var crop_on_tape(ad::Var image, std::size_t image_width, const PixelRect& rect) {
    const std::size_t image_height = image.rows() / image_width;
    if (rect.x0 + rect.width > image_width || rect.y0 + rect.height > image_height)
        throw UsageError("crop_on_tape: rectangle exceeds image bounds");
    std::vector<std::size_t> rows;
    rows.reserve(rect.area());
    for (std::size_t y = rect.y0; y < rect.y0 + rect.height; ++y)
        for (std::size_t x = rect.x0; x < rect.x0 + rect.width; ++x) rows.push_back(y * image_width + x);
    return ad::gather_rows(image, rows);
}

// ---- plain values ---------------------------------------------------------------

double loss_reconstruction(const Tensor& rendered, const Tensor& target) {
    ad::Tape t;
    return reconstruction_loss(t.constant(rendered), t.constant(target)).value().item();
}

double loss_dir_absolute(std::span<const double> e_img, std::span<const double> e_text) {
    ad::Tape t;
    return dir_absolute_loss(t.constant(Tensor::row(e_img)), t.constant(Tensor::row(e_text)))
        .value()
        .item();
}

std::pair<double, bool> loss_dir_relative(std::span<const double> e_tgt_img,
                                          std::span<const double> e_src_img,
                                          std::span<const double> e_tgt_text,
                                          std::span<const double> e_src_text) {
    ad::Tape t;
    const DirRelative r =
        dir_relative_loss(t.constant(Tensor::row(e_tgt_img)), t.constant(Tensor::row(e_src_img)),
                          t.constant(Tensor::row(e_tgt_text)), t.constant(Tensor::row(e_src_text)));
    return {r.value.value().item(), r.degenerate};
}

double loss_contrastive(std::span<const double> query, std::span<const double> positive,
                        const Tensor& negatives, double tau) {
    ad::Tape t;
    return contrastive_loss(t.constant(Tensor::row(query)), t.constant(Tensor::row(positive)),
                            t.constant(negatives), tau)
        .value()
        .item();
}

double loss_weight_reg(const Tensor& weights, const Tensor& midpoints, Reduction r) {
    ad::Tape t;
    return weight_reg_loss(t.constant(weights), midpoints, r).value().item();
}

double loss_perceptual(const FeatureExtractor& extractor, const Image& image, const Image& reference) {
    if (image.width != reference.width || image.height != reference.height)
        throw UsageError("loss_perceptual: size mismatch");
    ad::Tape t;
    return perceptual_loss(extractor, t.constant(image.pixels), t.constant(reference.pixels),
                           image.width, image.height)
        .value()
        .item();
}

// ---- stylization objective ----------------------------------------------------

TextEmbeddings embed_task_text(const StyleTask& task, const EmbeddingProvider& provider) {
    TextEmbeddings out;
    out.target = Tensor::row(provider.embed_text(task.target));
    out.source = Tensor::row(provider.embed_text(task.source));
    out.negatives = Tensor(task.negatives.size(), provider.dim());
    for (std::size_t i = 0; i < task.negatives.size(); ++i) {
        const auto e = provider.embed_text(task.negatives[i]);
        std::copy(e.begin(), e.end(), out.negatives.row_span(i).begin());
    }
    return out;
}

StyleImageTerms style_image_terms(ad::Var image, std::size_t width, std::size_t height,
                                  const StyleContext& ctx) {
    if (!ctx.task || !ctx.provider) throw UsageError("style_image_terms: incomplete context");
    const StyleTask& task = *ctx.task;
    ad::Tape& tape = *image.tape;
    if (image.rows() != width * height || image.cols() != 3)
        throw UsageError("style_image_terms: image tensor does not match its size");

    StyleImageTerms t;
    const ad::Var e_img = ctx.provider->embed_image_on_tape(image, width, height);
    const ad::Var tgt = tape.constant(ctx.target_text);
    const ad::Var negs = tape.constant(ctx.negatives);

    if (task.lambda_dir > 0.0) {
        const DirRelative d = dir_relative_loss(e_img, tape.constant(ctx.source_image_embedding), tgt,
                                                tape.constant(ctx.source_text));
        t.dir = d.value;
        t.dir_degenerate = d.degenerate;
    } else {
        t.dir = zero(tape);
    }

    t.con_global = contrastive_loss(e_img, tgt, negs, task.tau);
    if (task.lambda_local > 0.0) {
        if (ctx.patches.empty())
            throw PreconditionError("local contrastive term needs at least one patch");
        ad::Var acc = zero(tape);
        for (const PixelRect& rect : ctx.patches) {
            const ad::Var patch = crop_on_tape(image, width, rect);
            const ad::Var e_patch = ctx.provider->embed_image_on_tape(patch, rect.width, rect.height);
            acc = acc + contrastive_loss(e_patch, tgt, negs, task.tau);
        }
        t.con_local = acc * (1.0 / static_cast<double>(ctx.patches.size()));
    } else {
        t.con_local = zero(tape);
    }
    t.con = t.con_global * task.lambda_global + t.con_local * task.lambda_local;

    if (task.lambda_perceptual > 0.0) {
        if (!ctx.extractor) throw UsageError("perceptual term needs a feature extractor");
        t.per = perceptual_loss(*ctx.extractor, image, ctx.source_features, width, height);
    } else {
        t.per = zero(tape);
    }
    t.total = t.dir * task.lambda_dir + t.con + t.per * task.lambda_perceptual;
    return t;
}

StyleLoss total_style_loss(ad::Var image, std::size_t width, std::size_t height, ad::Var weights,
                           const Tensor& midpoints, const StyleContext& ctx) {
    const StyleImageTerms t = style_image_terms(image, width, height, ctx);
    const StyleTask& task = *ctx.task;
    const ad::Var reg = weight_reg_loss(weights, midpoints);
    const ad::Var dir_w = t.dir * task.lambda_dir;
    const ad::Var per_w = t.per * task.lambda_perceptual;
    const ad::Var reg_w = reg * task.lambda_reg;
    StyleLoss out;
    out.total = ((dir_w + t.con) + per_w) + reg_w;
    StyleBreakdown& b = out.breakdown;
    b.dir = dir_w.value().item();
    b.con_global = t.con_global.value().item();
    b.con_local = t.con_local.value().item();
    b.con = t.con.value().item();
    b.per = per_w.value().item();
    b.reg = reg_w.value().item();
    b.total = out.total.value().item();
    b.dir_degenerate = t.dir_degenerate;
    return out;
}

}  // namespace radiart
