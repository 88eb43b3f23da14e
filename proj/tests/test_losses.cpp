#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "radiart/error.hpp"
#include "radiart/losses.hpp"
#include "test_util.hpp"

using namespace radiart;

namespace {

std::vector<double> unit(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    for (double& x : v) x /= std::sqrt(n);
    return v;
}

std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::vector<double> v(d);
    for (double& x : v) x = n(rng);
    return unit(v);
}

Tensor rows_of(const std::vector<std::vector<double>>& rows) {
    Tensor t(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), t.row_span(r).begin());
    return t;
}

// direct evaluation of −log softmax, no log-sum-exp
double contrastive_direct(const std::vector<double>& q, const std::vector<double>& pos,
                          const std::vector<std::vector<double>>& negs, double tau) {
    const auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    const double p = std::exp(dot(q, pos) / tau);
    double den = p;
    for (const auto& n : negs) den += std::exp(dot(q, n) / tau);
    return -std::log(p / den);
}

Image noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (double& v : img.pixels.values()) v = u(rng);
    return img;
}

struct Fixture {
    ToyEncoder encoder{3};
    FeatureExtractor extractor{4};
    StyleTask task;
    Image source = noise_image(20, 20, 1);
    StyleContext ctx;

    Fixture() {
        task.target = "a mosaic";
        rebuild();
    }

    void rebuild() {
        ctx.task = &task;
        ctx.provider = &encoder;
        ctx.extractor = &extractor;
        const TextEmbeddings te = embed_task_text(task, encoder);
        ctx.target_text = te.target;
        ctx.source_text = te.source;
        ctx.negatives = te.negatives;
        ctx.source_image_embedding = Tensor::row(encoder.embed_image(source));
        ctx.source_features = extractor.extract(source);
        ctx.patches = {{0, 0, 8, 8}, {10, 5, 8, 8}};
    }
};

}  // namespace

TEST_CASE("reconstruction loss") {
    const Tensor a = Tensor::from_rows({{0.1, 0.2, 0.3}, {0.5, 0.5, 0.5}});
    Tensor b = a;
    CHECK(loss_reconstruction(a, b) == 0.0);
    for (double& v : b.values()) v += 0.5;
    CHECK(loss_reconstruction(a, b) == doctest::Approx(0.75));
    ad::Tape t;
    CHECK(reconstruction_loss(t.constant(a), t.constant(b), Reduction::Sum).value().item() ==
          doctest::Approx(1.5));
    CHECK_THROWS_AS(loss_reconstruction(a, Tensor(1, 3)), UsageError);
}

TEST_CASE("absolute directional loss") {
    const std::vector<double> e{0.6, 0.8, 0.0}, neg_e{-0.6, -0.8, 0.0}, orth{0.0, 0.0, 1.0};
    CHECK(loss_dir_absolute(e, e) == doctest::Approx(0.0));
    CHECK(loss_dir_absolute(e, neg_e) == doctest::Approx(2.0));
    CHECK(loss_dir_absolute(e, orth) == doctest::Approx(1.0));
    // a batch of views sums per-view values
    ad::Tape t;
    const ad::Var imgs = t.constant(Tensor::from_rows({{0.6, 0.8, 0.0}, {0.0, 0.0, 1.0}}));
    const ad::Var text = t.constant(Tensor::row(e));
    CHECK(dir_absolute_loss(imgs, text).value().item() == doctest::Approx(1.0));
    CHECK(dir_absolute_loss(imgs, text, Reduction::Mean).value().item() == doctest::Approx(0.5));
}

TEST_CASE("relative directional loss") {
    const auto a = unit({1, 0, 0}), b = unit({0, 1, 0}), c = unit({1, 1, 1}), d = unit({1, -1, 2});
    // Δi = a − b is parallel to itself
    auto [v, deg] = loss_dir_relative(a, b, a, b);
    CHECK(v == doctest::Approx(0.0));
    CHECK_FALSE(deg);
    std::tie(v, deg) = loss_dir_relative(a, b, b, a);
    CHECK(v == doctest::Approx(2.0));
    std::tie(v, deg) = loss_dir_relative(c, c, a, b);
    CHECK(v == 1.0);
    CHECK(deg);
    std::tie(v, deg) = loss_dir_relative(a, b, d, d);
    CHECK(v == 1.0);
    CHECK(deg);
    // generic value against the explicit cosine
    std::vector<double> di(3), dt(3);
    for (int i = 0; i < 3; ++i) {
        di[i] = c[i] - a[i];
        dt[i] = d[i] - b[i];
    }
    double dot = 0, ni = 0, nt = 0;
    for (int i = 0; i < 3; ++i) {
        dot += di[i] * dt[i];
        ni += di[i] * di[i];
        nt += dt[i] * dt[i];
    }
    std::tie(v, deg) = loss_dir_relative(c, a, d, b);
    CHECK(v == doctest::Approx(1 - dot / std::sqrt(ni * nt)));
}

TEST_CASE("contrastive loss closed forms") {
    const auto v = unit({1, 0}), pos = unit({0.6, 0.8}), neg = unit({0.6, -0.8});
    for (double tau : {0.07, 1.0, 10.0})
        CHECK(loss_contrastive(v, pos, rows_of({neg}), tau) == doctest::Approx(std::log(2.0)));
    const auto anti = unit({-1, 0});
    const double tiny = loss_contrastive(v, v, rows_of({anti}), 0.07);
    CHECK(tiny == doctest::Approx(std::log1p(std::exp(-2.0 / 0.07))).epsilon(1e-9));
    CHECK(tiny == doctest::Approx(3.9e-13).epsilon(0.05));
    std::mt19937_64 rng(2);
    std::vector<std::vector<double>> negs;
    for (int i = 0; i < 5; ++i) negs.push_back(random_unit(8, rng));
    const auto q = random_unit(8, rng), p = random_unit(8, rng);
    CHECK(loss_contrastive(q, p, rows_of(negs), 1e9) == doctest::Approx(std::log(6.0)).epsilon(1e-6));
    CHECK(loss_contrastive(q, p, rows_of(negs), 0.5) == doctest::Approx(contrastive_direct(q, p, negs, 0.5)).epsilon(1e-12));
    ad::Tape t;
    CHECK_THROWS_AS(contrastive_loss(t.constant(Tensor::row(q)), t.constant(Tensor::row(p)), t.constant(Tensor(0, 8)), 0.5),
                    UsageError);
}

TEST_CASE("contrastive loss is monotone in the similarities") {
    // similarity to the positive rises as the query rotates toward it
    const auto pos = unit({0, 1}), neg = unit({1, 0});
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 10; ++k) {
        const double a = 0.15 * k;
        const double l = loss_contrastive(unit({std::cos(a), std::sin(a)}), pos, rows_of({neg}), 0.07);
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("weight regulariser") {
    CHECK(loss_weight_reg(Tensor::from_rows({{0.5, 0.5}}), Tensor::from_rows({{0.0, 1.0}})) == doctest::Approx(0.25));
    CHECK(loss_weight_reg(Tensor::from_rows({{0.0, 0.9, 0.0}}), Tensor::from_rows({{0.0, 1.0, 2.0}})) == 0.0);
    CHECK(loss_weight_reg(Tensor::from_rows({{0.3, 0.4, 0.2}}), Tensor::from_rows({{1.5, 1.5, 1.5}})) == 0.0);
    CHECK_THROWS_AS(loss_weight_reg(Tensor::from_rows({{0.3, -0.1}}), Tensor::from_rows({{0.0, 1.0}})), PreconditionError);
    CHECK_THROWS_AS(loss_weight_reg(Tensor::from_rows({{0.3, 0.1}}), Tensor::from_rows({{1.0, 0.0}})), PreconditionError);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor w(50, 64), m(50, 64);
    for (std::size_t r = 0; r < 50; ++r) {
        double d = 2.0;
        for (std::size_t k = 0; k < 64; ++k) {
            w(r, k) = u(rng) * u(rng);
            d += u(rng) * 0.1;
            m(r, k) = d;
        }
    }
    for (Reduction red : {Reduction::Sum, Reduction::Mean})
        CHECK(std::abs(loss_weight_reg(w, m, red) - weight_reg_brute_force(w, m, red)) < 1e-10);
    CHECK(loss_weight_reg(w, m, Reduction::Sum) == doctest::Approx(50 * loss_weight_reg(w, m, Reduction::Mean)));
}

TEST_CASE("weight regulariser gradient") {
    const Tensor mid = Tensor::from_rows({{0.1, 0.4, 0.45, 1.2, 2.0}, {0.0, 0.5, 1.0, 1.5, 2.0}});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Tensor theta(1, 10);
    for (double& v : theta.values()) v = u(rng);
    CHECK(ad::grad_check([&](ad::Tape&, ad::Var x) { return weight_reg_loss(ad::reshape(x, 2, 5), mid); }, theta, 1e-6) <
          1e-8);
}

TEST_CASE("perceptual loss") {
    const FeatureExtractor fx(2);
    const Image a = noise_image(16, 16, 1), b = noise_image(16, 16, 2);
    CHECK(loss_perceptual(fx, a, a) == 0.0);
    CHECK(loss_perceptual(fx, a, b) > 0.0);
    ad::Tape t;
    const ad::Var x = t.input(a.pixels);
    t.backward(perceptual_loss(fx, x, t.constant(a.pixels), 16, 16));
    CHECK(max_abs_diff(x.grad(), Tensor(256, 3)) == 0.0);
    // explicit level sum
    const auto fa = fx.extract(a), fb = fx.extract(b);
    double expect = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        double s = 0.0;
        for (std::size_t i = 0; i < fa[l].size(); ++i) s += (fa[l][i] - fb[l][i]) * (fa[l][i] - fb[l][i]);
        expect += s / static_cast<double>(fa[l].size());
    }
    CHECK(loss_perceptual(fx, a, b) == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(loss_perceptual(fx, a, noise_image(8, 16, 3)), UsageError);
}

TEST_CASE("crop on the tape") {
    const Image img = noise_image(7, 5, 4);
    ad::Tape t;
    const Tensor& c = crop_on_tape(t.constant(img.pixels), 7, {2, 1, 3, 2}).value();
    CHECK(c == img.crop(2, 1, 3, 2).pixels);
    CHECK_THROWS_AS(crop_on_tape(t.constant(img.pixels), 7, {5, 0, 3, 1}), UsageError);
}

TEST_CASE("task validation") {
    StyleTask t;
    t.target = "a sketch";
    t.validate();
    CHECK(t.negatives.size() == 200);
    const std::set<std::string> uniq(t.negatives.begin(), t.negatives.end());
    CHECK(uniq.size() == 200);
    auto bad = t;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = t;
    bad.lambda_reg = -0.1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = t;
    bad.patch_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = t;
    bad.target = t.negatives[3];
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = t;
    bad.target.clear();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("negative bank file and sampling") {
    testing::TempDir dir("neg");
    std::ofstream(dir / "bank.txt") << "  ink wash \n\nneon glow\r\npixel art\n";
    CHECK(load_negative_bank(dir / "bank.txt") == std::vector<std::string>{"ink wash", "neon glow", "pixel art"});
    std::ofstream(dir / "empty.txt") << "\n \n";
    CHECK_THROWS_AS(load_negative_bank(dir / "empty.txt"), DatasetFormatError);
    CHECK_THROWS_AS(load_negative_bank(dir / "none.txt"), IoError);

    const auto a = sample_negative_indices(200, 32, 7);
    CHECK(a.size() == 32);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    CHECK(a.back() < 200);
    CHECK(sample_negative_indices(200, 32, 7) == a);
    CHECK(sample_negative_indices(200, 32, 8) != a);
    CHECK(sample_negative_indices(5, 32, 1) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("global-local term composes the contrastive calls") {
    Fixture f;
    f.task.lambda_perceptual = 0.0;
    f.rebuild();
    const Image img = noise_image(20, 20, 9);
    ad::Tape t;
    const StyleImageTerms terms = style_image_terms(t.constant(img.pixels), 20, 20, f.ctx);
    const auto rowvec = [](const Tensor& r) { return std::vector<double>(r.values().begin(), r.values().end()); };
    const auto tgt = rowvec(f.ctx.target_text);
    const double lg = loss_contrastive(f.encoder.embed_image(img), tgt, f.ctx.negatives, 0.07);
    double ll = 0.0;
    for (const PixelRect& r : f.ctx.patches)
        ll += loss_contrastive(f.encoder.embed_image(img.crop(r.x0, r.y0, r.width, r.height)), tgt, f.ctx.negatives, 0.07);
    ll /= 2.0;
    CHECK(terms.con_global.value().item() == doctest::Approx(lg).epsilon(1e-12));
    CHECK(terms.con_local.value().item() == doctest::Approx(ll).epsilon(1e-12));
    CHECK(terms.con.value().item() == doctest::Approx(0.2 * lg + 0.1 * ll).epsilon(1e-12));

    // a single full-image patch makes the local query coincide with the global one
    f.ctx.patches = {{0, 0, 20, 20}};
    ad::Tape t2;
    const StyleImageTerms same = style_image_terms(t2.constant(img.pixels), 20, 20, f.ctx);
    CHECK(same.con.value().item() == doctest::Approx(0.2 * lg + 0.1 * lg).epsilon(1e-12));

    f.task.lambda_global = f.task.lambda_local = 0.0;
    ad::Tape t3;
    CHECK(style_image_terms(t3.constant(img.pixels), 20, 20, f.ctx).con.value().item() == 0.0);

    f.task.lambda_local = 0.1;
    f.ctx.patches.clear();
    ad::Tape t4;
    CHECK_THROWS_AS(style_image_terms(t4.constant(img.pixels), 20, 20, f.ctx), PreconditionError);
}

TEST_CASE("total objective bookkeeping") {
    Fixture f;
    const Image img = noise_image(20, 20, 10);
    Tensor w(400, 4, 0.2), m(400, 4);
    for (std::size_t r = 0; r < 400; ++r)
        for (std::size_t k = 0; k < 4; ++k) m(r, k) = 2.0 + 0.3 * static_cast<double>(k) + 0.01 * static_cast<double>(r % 3);
    ad::Tape t;
    const StyleLoss s = total_style_loss(t.constant(img.pixels), 20, 20, t.constant(w), m, f.ctx);
    const StyleBreakdown& b = s.breakdown;
    CHECK(b.total == ((b.dir + b.con) + b.per) + b.reg);
    CHECK(b.total == s.total.value().item());
    CHECK(b.reg == doctest::Approx(0.1 * loss_weight_reg(w, m)).epsilon(1e-12));
    CHECK(b.per == doctest::Approx(2.0 * loss_perceptual(f.extractor, img, f.source)).epsilon(1e-12));
    CHECK(b.con == doctest::Approx(0.2 * b.con_global + 0.1 * b.con_local).epsilon(1e-12));
    CHECK_FALSE(b.dir_degenerate);
}

TEST_CASE("degenerate configuration: every weight zero and no image change") {
    Fixture f;
    f.task.lambda_global = f.task.lambda_local = f.task.lambda_perceptual = f.task.lambda_reg = 0.0;
    f.rebuild();
    ad::Tape t;
    const Tensor w(400, 3, 0.3), m = [] {
        Tensor x(400, 3);
        for (std::size_t r = 0; r < 400; ++r)
            for (std::size_t k = 0; k < 3; ++k) x(r, k) = static_cast<double>(k);
        return x;
    }();
    const StyleLoss s = total_style_loss(t.constant(f.source.pixels), 20, 20, t.constant(w), m, f.ctx);
    CHECK(s.breakdown.dir == 1.0);
    CHECK(s.breakdown.dir_degenerate);
    CHECK(s.breakdown.con == 0.0);
    CHECK(s.breakdown.per == 0.0);
    CHECK(s.breakdown.reg == 0.0);
    CHECK(s.breakdown.total == 1.0);
}

TEST_CASE("style objective gradient matches central differences") {
    Fixture f;
    f.task.negatives_per_step = 8;
    f.rebuild();
    f.ctx.negatives = Tensor(8, f.encoder.dim());
    const TextEmbeddings te = embed_task_text(f.task, f.encoder);
    for (std::size_t r = 0; r < 8; ++r)
        std::copy(te.negatives.row_span(r * 7).begin(), te.negatives.row_span(r * 7).end(), f.ctx.negatives.row_span(r).begin());
    const Image img = noise_image(20, 20, 11);
    const double err = ad::grad_check(
        [&](ad::Tape&, ad::Var x) { return style_image_terms(ad::reshape(x, 400, 3), 20, 20, f.ctx).total; },
        img.pixels.reshaped(1, 1200), 1e-5);
    CHECK(err < 1e-6);
}
