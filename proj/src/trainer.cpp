#include "radiart/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "radiart/error.hpp"

namespace radiart {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

RenderConfig dataset_render(const RenderConfig& base, const MultiViewDataset& dataset,
                            std::uint64_t seed) {
    RenderConfig r = base;
    r.near = dataset.near;
    r.far = dataset.far;
    r.seed = seed;
    return r;
}

void check_finite_grads(const std::vector<Tensor>& grads, const std::string& stage, std::size_t step) {
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!grads[i].all_finite())
            throw DivergenceError(stage + " diverged at step " + std::to_string(step) +
                                  ": non-finite gradient in parameter tensor " + std::to_string(i));
}

nlohmann::json breakdown_json(const StyleBreakdown& b) {
    return {{"dir", b.dir},       {"con", b.con}, {"con_global", b.con_global},
            {"con_local", b.con_local}, {"per", b.per}, {"reg", b.reg},
            {"total", b.total},   {"dir_degenerate", b.dir_degenerate}};
}

}  // namespace

void TrainConfig::validate() const {
    if (stage1.epochs == 0 || stage2.epochs == 0) throw ValidationError("epochs must be >= 1");
    if (!(stage1.lr > 0.0) || !(stage2.lr > 0.0)) throw ValidationError("learning rates must be > 0");
    if (!std::isfinite(stage1.lr) || !std::isfinite(stage2.lr))
        throw ValidationError("learning rates must be finite");
    if (stage1.rays_per_batch == 0) throw ValidationError("stage1.rays_per_batch must be positive");
    if (stage2.views_per_step == 0) throw ValidationError("stage2.views_per_step must be positive");
    if (stage2.tile_size == 0) throw ValidationError("stage2.tile_size must be positive");
    render.validate();
}

void TrainReport::write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path.string());
    for (const auto& r : records) out << r.dump() << '\n';
    if (!out) throw IoError("failed writing report " + path.string());
}

std::vector<std::size_t> training_indices(std::size_t frame_count,
                                          const std::vector<std::size_t>& holdout) {
    for (std::size_t h : holdout)
        if (h >= frame_count)
            throw ValidationError("holdout index " + std::to_string(h) + " out of range");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < frame_count; ++i)
        if (std::find(holdout.begin(), holdout.end(), i) == holdout.end()) out.push_back(i);
    if (out.empty()) throw ValidationError("no training frames left after holdout");
    return out;
}

// ---- stage 1 ------------------------------------------------------------------

std::pair<FieldParams, TrainReport> train_reconstruction(const MultiViewDataset& dataset,
                                                         const FieldArch& arch,
                                                         const TrainConfig& config) {
    const auto t0 = Clock::now();
    config.validate();
    arch.validate();
    if (dataset.frames.empty()) throw ValidationError("dataset has no frames");
    dataset.validate();
    const auto train = training_indices(dataset.frames.size(), config.holdout);

    // all training rays with their target colors
    const std::size_t per_frame = dataset.width * dataset.height;
    const std::size_t n_rays = train.size() * per_frame;
    Tensor origins(n_rays, 3), directions(n_rays, 3), colors(n_rays, 3);
    for (std::size_t f = 0; f < train.size(); ++f) {
        const Frame& frame = dataset.frames[train[f]];
        for (std::size_t y = 0; y < dataset.height; ++y)
            for (std::size_t x = 0; x < dataset.width; ++x) {
                const std::size_t i = f * per_frame + y * dataset.width + x;
                const Ray ray = generate_ray(frame.camera, x + 0.5, y + 0.5);
                for (int c = 0; c < 3; ++c) {
                    origins(i, c) = ray.origin[c];
                    directions(i, c) = ray.direction[c];
                    colors(i, c) = frame.image.at(x, y, c);
                }
            }
    }

    const RenderConfig eval_render = dataset_render(config.render, dataset, config.seeds.render);
    const std::size_t k = config.render.samples_per_ray;
    const std::size_t batch = config.stage1.rays_per_batch;
    const std::size_t steps_per_epoch = config.stage1.steps_per_epoch
                                            ? config.stage1.steps_per_epoch
                                            : (n_rays + batch - 1) / batch;

    FieldParams params = init_params(arch, config.seeds.init);
    params.role = CheckpointRole::Reconstructed;
    ad::AdamState adam = ad::AdamState::for_params(params.tensors, {config.stage1.lr});
    std::mt19937_64 rng(config.seeds.train);

    TrainReport report;
    report.stage = "reconstruct";
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.stage1.epochs; ++epoch) {
        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            RayBatch rays{Tensor(batch, 3), Tensor(batch, 3), Tensor(batch, k + 1)};
            Tensor target(batch, 3);
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t i = static_cast<std::size_t>(rng() % n_rays);
                const auto d = sample_ray(eval_render.near, eval_render.far, k, config.render.strategy,
                                          mix(mix(config.seeds.train, step), b));
                for (int c = 0; c < 3; ++c) {
                    rays.origins(b, c) = origins(i, c);
                    rays.directions(b, c) = directions(i, c);
                    target(b, c) = colors(i, c);
                }
                for (std::size_t j = 0; j < k; ++j) rays.boundaries(b, j) = d[j];
                rays.boundaries(b, k) = eval_render.far;
            }
            ad::Tape tape;
            const FieldVars vars = bind_params(tape, params, true);
            const RenderedRays rr = render_rays(vars, arch, rays, eval_render.background);
            const ad::Var loss = reconstruction_loss(rr.rgb, tape.constant(std::move(target)));
            const double value = loss.value().item();
            if (!std::isfinite(value))
                throw DivergenceError("reconstruction diverged at step " + std::to_string(step) +
                                      ": loss is not finite");
            try {
                tape.backward(loss);
            } catch (const NumericError& e) {
                throw DivergenceError("reconstruction diverged at step " + std::to_string(step) +
                                      ": " + e.what());
            }
            std::vector<Tensor> grads;
            grads.reserve(vars.tensors.size());
            for (const ad::Var& v : vars.tensors) grads.push_back(v.grad());
            check_finite_grads(grads, "reconstruction", step);
            ad::adam_step(adam, params.tensors, grads);
            if (!params.flatten().all_finite())
                throw DivergenceError("reconstruction diverged at step " + std::to_string(step) +
                                      ": parameters became non-finite");

            report.loss.push_back(value);
            nlohmann::json rec = {{"stage", report.stage}, {"step", step}, {"epoch", epoch}, {"loss", value}};
            if (s + 1 == steps_per_epoch) {
                if (!config.holdout.empty()) {
                    double acc = 0.0;
                    for (std::size_t h : config.holdout) {
                        const Frame& fr = dataset.frames[h];
                        acc += psnr(render_view(params, fr.camera, eval_render).image, fr.image);
                    }
                    report.epoch_psnr.push_back(acc / static_cast<double>(config.holdout.size()));
                    rec["heldout_psnr"] = report.epoch_psnr.back();
                }
                rec["epoch_end"] = true;
            }
            if (!config.deterministic) rec["wall_s"] = seconds_since(t0);
            report.records.push_back(rec);
            if (config.on_step) config.on_step(rec);
        }
    }
    report.wall_seconds = seconds_since(t0);
    return {std::move(params), std::move(report)};
}

// ---- stage 2 ------------------------------------------------------------------

std::vector<PixelRect> sample_patches(std::size_t width, std::size_t height, double fraction,
                                      std::size_t count, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("sample_patches: fraction must lie in (0,1]");
    const double side_real = fraction * static_cast<double>(std::min(width, height));
    if (side_real < 4.0)
        throw UsageError("image too small for patches: " + std::to_string(width) + "x" +
                         std::to_string(height) + " at fraction " + std::to_string(fraction));
    const auto side = static_cast<std::size_t>(std::floor(side_real));
    std::vector<PixelRect> out;
    out.reserve(count);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t x0 = static_cast<std::size_t>(rng() % (width - side + 1));
        const std::size_t y0 = static_cast<std::size_t>(rng() % (height - side + 1));
        out.push_back({x0, y0, side, side});
    }
    return out;
}

std::vector<PixelRect> tile_grid(std::size_t width, std::size_t height, std::size_t tile) {
    if (tile == 0) throw UsageError("tile_grid: tile size must be positive");
    std::vector<PixelRect> out;
    for (std::size_t y = 0; y < height; y += tile)
        for (std::size_t x = 0; x < width; x += tile)
            out.push_back({x, y, std::min(tile, width - x), std::min(tile, height - y)});
    return out;
}

StyleStep deferred_style_step(const FieldParams& params, const Camera& camera,
                              const RenderConfig& render, const StyleContext& ctx,
                              std::size_t tile_size) {
    const StyleTask& task = *ctx.task;
    const Camera cam = render_camera(camera, render);
    const std::size_t w = cam.width(), h = cam.height();
    const bool use_reg = task.lambda_reg > 0.0;

    // (1) whole view, no gradient tracking
    ViewRender view = render_view(params, cam, render, use_reg);

    // (2) pixel gradient of the image-space objective
    StyleStep out;
    Tensor pixel_grad;
    {
        ad::Tape tape;
        const ad::Var img = tape.input(view.image.pixels);
        const StyleImageTerms terms = style_image_terms(img, w, h, ctx);
        tape.backward(terms.total);
        pixel_grad = img.grad();
        const double reg = use_reg ? loss_weight_reg(view.weights, view.midpoints) : 0.0;
        StyleBreakdown& b = out.breakdown;
        b.dir = terms.dir.value().item() * task.lambda_dir;
        b.con_global = terms.con_global.value().item();
        b.con_local = terms.con_local.value().item();
        b.con = terms.con.value().item();
        b.per = terms.per.value().item() * task.lambda_perceptual;
        b.reg = reg * task.lambda_reg;
        b.total = ((b.dir + b.con) + b.per) + b.reg;
        b.dir_degenerate = terms.dir_degenerate;
        double c = 0.0;
        const auto e = ctx.provider->embed_image(view.image);
        for (std::size_t i = 0; i < e.size(); ++i) c += e[i] * ctx.target_text[i];
        out.cosine = c;
    }

    // (3) tile-wise re-render with gradient tracking
    out.grads.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) out.grads.emplace_back(t.rows(), t.cols());
    const double reg_scale = task.lambda_reg / static_cast<double>(w * h);
    for (const PixelRect& rect : tile_grid(w, h, tile_size)) {
        Tensor g(rect.area(), 3);
        bool any = false;
        for (std::size_t y = 0; y < rect.height; ++y)
            for (std::size_t x = 0; x < rect.width; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = pixel_grad((rect.y0 + y) * w + rect.x0 + x, c);
                    g(y * rect.width + x, c) = v;
                    any = any || v != 0.0;
                }
        if (!any && !use_reg) continue;
        ad::Tape tape;
        const FieldVars vars = bind_params(tape, params, true);
        const RenderedRays rr = render_patch(vars, params.arch, cam, render, rect);
        ad::Var surrogate = ad::sum(rr.rgb * tape.constant(std::move(g)));
        if (use_reg)
            surrogate = surrogate + weight_reg_loss(rr.weights, rr.midpoints, Reduction::Sum) * reg_scale;
        tape.backward(surrogate);
        for (std::size_t i = 0; i < vars.tensors.size(); ++i) out.grads[i] += vars.tensors[i].grad();
    }
    out.image = std::move(view.image);
    return out;
}

StyleStep monolithic_style_step(const FieldParams& params, const Camera& camera,
                                const RenderConfig& render, const StyleContext& ctx) {
    const Camera cam = render_camera(camera, render);
    const std::size_t w = cam.width(), h = cam.height();
    ad::Tape tape;
    const FieldVars vars = bind_params(tape, params, true);
    const RenderedRays rr = render_patch(vars, params.arch, cam, render, PixelRect{0, 0, w, h});
    const StyleLoss loss = total_style_loss(rr.rgb, w, h, rr.weights, rr.midpoints, ctx);
    tape.backward(loss.total);
    StyleStep out;
    for (const ad::Var& v : vars.tensors) out.grads.push_back(v.grad());
    out.breakdown = loss.breakdown;
    out.image = Image(w, h, rr.rgb.value());
    const auto e = ctx.provider->embed_image(out.image);
    for (std::size_t i = 0; i < e.size(); ++i) out.cosine += e[i] * ctx.target_text[i];
    return out;
}

double mean_cosine_to_text(const FieldParams& params, const std::vector<Camera>& cameras,
                           const RenderConfig& render, const EmbeddingProvider& provider,
                           const std::string& text) {
    if (cameras.empty()) throw UsageError("mean_cosine_to_text: no cameras");
    const auto t = provider.embed_text(text);
    double acc = 0.0;
    for (const Camera& cam : cameras) {
        const auto e = provider.embed_image(render_view(params, cam, render).image);
        for (std::size_t i = 0; i < e.size(); ++i) acc += e[i] * t[i];
    }
    return acc / static_cast<double>(cameras.size());
}

double mean_weight_reg(const FieldParams& params, const std::vector<Camera>& cameras,
                       const RenderConfig& render) {
    if (cameras.empty()) throw UsageError("mean_weight_reg: no cameras");
    double acc = 0.0;
    for (const Camera& cam : cameras) {
        const ViewRender v = render_view(params, cam, render, true);
        acc += loss_weight_reg(v.weights, v.midpoints);
    }
    return acc / static_cast<double>(cameras.size());
}

std::pair<FieldParams, TrainReport> stylize(const FieldParams& reconstructed,
                                            const MultiViewDataset& dataset, const StyleTask& task,
                                            const EmbeddingProvider& provider,
                                            const TrainConfig& config,
                                            const StylizeOptions& options) {
    const auto t0 = Clock::now();
    if (reconstructed.role != CheckpointRole::Reconstructed)
        throw ValidationError("stylization needs a reconstructed checkpoint, got role '" +
                              to_string(reconstructed.role) + "'");
    reconstructed.validate();
    config.validate();
    task.validate();
    if (dataset.frames.empty()) throw ValidationError("dataset has no frames");
    const auto train = training_indices(dataset.frames.size(), config.holdout);

    const RenderConfig render = dataset_render(config.render, dataset, config.seeds.render);
    std::vector<Camera> cams;
    for (std::size_t i : train) cams.push_back(render_camera(dataset.frames[i].camera, render));
    const std::size_t w = cams.front().width(), h = cams.front().height();
    if (task.lambda_local > 0.0) (void)sample_patches(w, h, task.patch_fraction, 0, 0);

    const FeatureExtractor default_extractor(mix(config.seeds.init, 0xFEA7));
    const FeatureExtractor& extractor = options.extractor ? *options.extractor : default_extractor;

    // frozen source quantities per training pose
    struct Source {
        Tensor embedding;
        std::vector<Tensor> features;
    };
    auto make_source = [&](const Camera& cam) {
        const Image img = render_view(reconstructed, cam, render).image;
        Source s{Tensor::row(provider.embed_image(img)), {}};
        if (task.lambda_perceptual > 0.0) s.features = extractor.extract(img);
        return s;
    };
    std::vector<Source> sources;
    for (const Camera& cam : cams) sources.push_back(make_source(cam));
    const TextEmbeddings text = embed_task_text(task, provider);

    FieldParams params = reconstructed;
    params.role = CheckpointRole::Stylized;
    ad::AdamState adam = ad::AdamState::for_params(params.tensors, {config.stage2.lr});
    std::mt19937_64 rng(config.seeds.train);
    const std::size_t n_views = cams.size();
    const std::size_t steps_per_epoch =
        config.stage2.steps_per_epoch ? config.stage2.steps_per_epoch : n_views;

    TrainReport report;
    report.stage = "stylize";
    report.provider = provider.name();
    report.epoch_cosine.push_back(mean_cosine_to_text(params, cams, render, provider, task.target));

    std::size_t step = 0;
    bool stopped = false;
    for (std::size_t epoch = 0; epoch < config.stage2.epochs && !stopped; ++epoch) {
        std::vector<std::size_t> order(n_views);
        for (std::size_t i = 0; i < n_views; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            if (options.stop && options.stop(step)) {
                stopped = true;
                break;
            }
            std::vector<Tensor> grads;
            StyleBreakdown acc;
            double cosine = 0.0;
            const std::size_t vps = config.stage2.views_per_step;
            for (std::size_t j = 0; j < vps; ++j) {
                const std::size_t v = order[(s * vps + j) % n_views];
                Camera cam = cams[v];
                Source fresh;
                const Source* src = &sources[v];
                if (config.stage2.interpolate_poses) {
                    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                    cam = render_camera(interpolate_pose(cams[v], cams[(v + 1) % n_views], u), render);
                    fresh = make_source(cam);
                    src = &fresh;
                }
                StyleContext ctx;
                ctx.task = &task;
                ctx.provider = &provider;
                ctx.extractor = &extractor;
                ctx.target_text = text.target;
                ctx.source_text = text.source;
                ctx.source_image_embedding = src->embedding;
                ctx.source_features = src->features;
                const auto neg_idx =
                    sample_negative_indices(task.negatives.size(), task.negatives_per_step, rng());
                ctx.negatives = Tensor(neg_idx.size(), text.negatives.cols());
                for (std::size_t r = 0; r < neg_idx.size(); ++r) {
                    const auto src_row = text.negatives.row_span(neg_idx[r]);
                    std::copy(src_row.begin(), src_row.end(), ctx.negatives.row_span(r).begin());
                }
                const std::uint64_t patch_seed = rng();
                if (task.lambda_local > 0.0)
                    ctx.patches = sample_patches(w, h, task.patch_fraction, task.patches_per_view, patch_seed);

                StyleStep st;
                try {
                    st = deferred_style_step(params, cam, render, ctx, config.stage2.tile_size);
                } catch (const NumericError& e) {
                    throw DivergenceError("stylization diverged at step " + std::to_string(step) +
                                          ": " + e.what());
                }
                if (!std::isfinite(st.breakdown.total))
                    throw DivergenceError("stylization diverged at step " + std::to_string(step) +
                                          ": loss is not finite");
                if (grads.empty()) {
                    grads = std::move(st.grads);
                } else {
                    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += st.grads[i];
                }
                acc.dir += st.breakdown.dir;
                acc.con_global += st.breakdown.con_global;
                acc.con_local += st.breakdown.con_local;
                acc.con += st.breakdown.con;
                acc.per += st.breakdown.per;
                acc.reg += st.breakdown.reg;
                acc.total += st.breakdown.total;
                acc.dir_degenerate = acc.dir_degenerate || st.breakdown.dir_degenerate;
                cosine += st.cosine;
            }
            const double inv = 1.0 / static_cast<double>(vps);
            for (Tensor& g : grads) g *= inv;
            acc.dir *= inv;
            acc.con_global *= inv;
            acc.con_local *= inv;
            acc.con *= inv;
            acc.per *= inv;
            acc.reg *= inv;
            acc.total *= inv;
            cosine *= inv;

            check_finite_grads(grads, "stylization", step);
            if (config.stage2.freeze_density)
                for (std::size_t i = 0; i < grads.size(); ++i)
                    if (params.affects_density(i)) grads[i].fill(0.0);
            ad::adam_step(adam, params.tensors, grads);
            if (!params.flatten().all_finite())
                throw DivergenceError("stylization diverged at step " + std::to_string(step) +
                                      ": parameters became non-finite");

            report.loss.push_back(acc.total);
            report.breakdowns.push_back(acc);
            report.con_global.push_back(acc.con_global);
            report.step_cosine.push_back(cosine);
            nlohmann::json rec = {{"stage", report.stage}, {"step", step},   {"epoch", epoch},
                                  {"loss", acc.total},     {"terms", breakdown_json(acc)},
                                  {"cosine", cosine}};
            if (step == 0) rec["provider"] = report.provider;
            if (s + 1 == steps_per_epoch) {
                report.epoch_cosine.push_back(
                    mean_cosine_to_text(params, cams, render, provider, task.target));
                rec["epoch_cosine"] = report.epoch_cosine.back();
                rec["epoch_end"] = true;
            }
            if (!config.deterministic) rec["wall_s"] = seconds_since(t0);
            report.records.push_back(rec);
            if (config.on_step) config.on_step(rec);
        }
    }
    report.wall_seconds = seconds_since(t0);
    return {std::move(params), std::move(report)};
}

}  // namespace radiart
