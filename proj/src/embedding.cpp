#include "radiart/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "radiart/bridge.hpp"
#include "radiart/error.hpp"

namespace radiart {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Gaussian stream built from splitmix64 + Box–Muller, so the values do not
/// depend on the standard library's distribution implementation.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : state_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    double uniform() {
        state_ = mix64(state_);
        return static_cast<double>(state_ >> 11) * 0x1.0p-53;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Image to_image(const Tensor& px, std::size_t w, std::size_t h) { return Image(w, h, px); }

std::vector<double> axis_weights(std::size_t in, std::size_t out) {
    // out×in overlap fractions of [i, i+1) with [o·s, (o+1)·s), s = in/out
    std::vector<double> a(out * in, 0.0);
    const double s = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        const double lo = o * s, hi = (o + 1) * s;
        for (std::size_t i = static_cast<std::size_t>(std::floor(lo)); i < in && i < hi; ++i) {
            const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (overlap > 0.0) a[o * in + i] = overlap / s;
        }
    }
    return a;
}

}  // namespace

// ---- EmbeddingProvider ------------------------------------------------------

std::vector<double> EmbeddingProvider::embed_text(const std::string& text) const {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw UsageError("embed_text: empty text");
    if (!capabilities().text) throw CapabilityError(name() + " cannot embed text");
    return do_embed_text(text);
}

std::vector<double> EmbeddingProvider::embed_image(const Image& image) const {
    if (!capabilities().image) throw CapabilityError(name() + " cannot embed images");
    if (image.pixel_count() == 0) throw UsageError("embed_image: empty image");
    return do_embed_image(image);
}

Image EmbeddingProvider::image_embed_vjp(const Image& image, std::span<const double> upstream) const {
    if (!capabilities().image_vjp) throw CapabilityError(name() + " has no image VJP");
    if (upstream.size() != dim()) throw UsageError("image_embed_vjp: upstream has wrong dimension");
    return do_image_embed_vjp(image, upstream);
}

std::vector<double> EmbeddingProvider::do_embed_text(const std::string&) const {
    throw CapabilityError(name() + " cannot embed text");
}

std::vector<double> EmbeddingProvider::do_embed_image(const Image&) const {
    throw CapabilityError(name() + " cannot embed images");
}

Image EmbeddingProvider::do_image_embed_vjp(const Image&, std::span<const double>) const {
    throw CapabilityError(name() + " has no image VJP");
}

ad::Var EmbeddingProvider::embed_image_on_tape(ad::Var image, std::size_t width,
                                               std::size_t height) const {
    ad::Tape& tape = *image.tape;
    const std::vector<double> e = embed_image(to_image(image.value(), width, height));
    const std::size_t in = image.id;
    return tape.record("embed_image[" + name() + "]", Tensor::row(e), {in},
                       [this, in, width, height](ad::Tape& tp, std::size_t self) {
                           const Image g = image_embed_vjp(to_image(tp.value(in), width, height),
                                                           tp.out_grad(self).values());
                           tp.accumulate(in, g.pixels);
                       });
}

// ---- ToyEncoder -------------------------------------------------------------

ToyEncoder::ToyEncoder(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim), projection_(kInputSize * kInputSize * 3, dim), offset_(1, dim) {
    if (dim == 0) throw UsageError("ToyEncoder: dimension must be positive");
    GaussianStream g(mix64(seed ^ 0x1A2B3C4D5E6F7081ull));
    // preactivation std ≈ 1 for mid-gray input
    const double s = 2.0 / std::sqrt(static_cast<double>(projection_.rows()));
    for (double& v : projection_.values()) v = s * g.next();
    for (double& v : offset_.values()) v = 0.5 * g.next();
}

std::string ToyEncoder::name() const { return "toy:" + std::to_string(seed_); }

std::vector<double> ToyEncoder::do_embed_text(const std::string& text) const {
    std::istringstream is(text);
    std::vector<std::string> tokens;
    for (std::string tok; is >> tok;) tokens.push_back(tok);
    std::sort(tokens.begin(), tokens.end());
    std::vector<double> acc(dim_, 0.0);
    for (const std::string& tok : tokens) {
        GaussianStream g(mix64(fnv1a(tok) ^ mix64(seed_)));
        for (double& v : acc) v += g.next();
    }
    double n = 0.0;
    for (double& v : acc) {
        v /= static_cast<double>(tokens.size());
        n += v * v;
    }
    n = std::sqrt(n);
    for (double& v : acc) v /= n;
    return acc;
}

ad::Var ToyEncoder::embed_image_on_tape(ad::Var image, std::size_t width, std::size_t height) const {
    ad::Tape& tape = *image.tape;
    if (image.rows() != width * height || image.cols() != 3)
        throw UsageError("ToyEncoder: image tensor does not match its size");
    ad::Var resized = ad::matmul(
        tape.constant(area_resize_matrix(width, height, kInputSize, kInputSize)), image);
    ad::Var flat = ad::reshape(resized, 1, kInputSize * kInputSize * 3);
    ad::Var pre = ad::matmul(flat, tape.constant(projection_)) + tape.constant(offset_);
    return ad::l2_normalize_rows(ad::tanh(pre));
}

std::vector<double> ToyEncoder::do_embed_image(const Image& image) const {
    ad::Tape tape;
    return to_vector(embed_image_on_tape(tape.constant(image.pixels), image.width, image.height).value());
}

Image ToyEncoder::do_image_embed_vjp(const Image& image, std::span<const double> upstream) const {
    ad::Tape tape;
    ad::Var img = tape.input(image.pixels);
    ad::Var e = embed_image_on_tape(img, image.width, image.height);
    ad::Var s = ad::dot(e, tape.constant(Tensor::row(upstream)));
    tape.backward(s);
    return Image(image.width, image.height, img.grad());
}

Tensor area_resize_matrix(std::size_t in_w, std::size_t in_h, std::size_t out_w, std::size_t out_h) {
    if (!in_w || !in_h || !out_w || !out_h) throw UsageError("area_resize_matrix: zero size");
    const auto ax = axis_weights(in_w, out_w);
    const auto ay = axis_weights(in_h, out_h);
    Tensor m(out_w * out_h, in_w * in_h);
    for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t y = 0; y < in_h; ++y) {
            const double wy = ay[oy * in_h + y];
            if (wy == 0.0) continue;
            for (std::size_t ox = 0; ox < out_w; ++ox)
                for (std::size_t x = 0; x < in_w; ++x) {
                    const double wx = ax[ox * in_w + x];
                    if (wx != 0.0) m(oy * out_w + ox, y * in_w + x) = wy * wx;
                }
        }
    return m;
}

// ---- FeatureExtractor -------------------------------------------------------

FeatureExtractor::FeatureExtractor(std::uint64_t seed, std::vector<std::size_t> channels)
    : seed_(seed), channels_(std::move(channels)) {
    if (channels_.empty()) throw UsageError("FeatureExtractor needs at least one level");
    GaussianStream g(mix64(seed ^ 0x5EED0F3A7B2C1D09ull));
    std::size_t cin = 3;
    for (std::size_t cout : channels_) {
        Tensor w(9 * cin, cout);
        const double s = 1.0 / std::sqrt(static_cast<double>(9 * cin));
        for (double& v : w.values()) v = s * g.next();
        weights_.push_back(std::move(w));
        cin = cout;
    }
}

std::vector<ad::Var> FeatureExtractor::extract_on_tape(ad::Var image, std::size_t width,
                                                       std::size_t height) const {
    ad::Tape& tape = *image.tape;
    std::vector<ad::Var> feats;
    ad::Var x = image;
    std::size_t w = width, h = height, c = 3;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const ad::Im2ColSpec spec{h, w, c, 3, 2, 1};
        x = ad::tanh(ad::matmul(ad::im2col(x, spec), tape.constant(weights_[l])));
        feats.push_back(x);
        h = spec.out_height();
        w = spec.out_width();
        c = channels_[l];
    }
    return feats;
}

std::vector<Tensor> FeatureExtractor::extract(const Image& image) const {
    ad::Tape tape;
    std::vector<Tensor> out;
    for (ad::Var v : extract_on_tape(tape.constant(image.pixels), image.width, image.height))
        out.push_back(v.value());
    return out;
}

// ---- factory ----------------------------------------------------------------

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "toy") {
        std::uint64_t seed = 0;
        if (!arg.empty()) {
            try {
                std::size_t used = 0;
                seed = std::stoull(arg, &used);
                if (used != arg.size()) throw std::invalid_argument(arg);
            } catch (const std::exception&) {
                throw ValidationError("bad toy provider seed '" + arg + "'");
            }
        }
        return std::make_unique<ToyEncoder>(seed);
    }
    if (kind == "bridge") {
        if (arg.empty()) throw ValidationError("bridge provider needs an endpoint");
        return std::make_unique<BridgeProvider>(BridgeEndpoint::parse(arg));
    }
    throw ValidationError("unknown embedding provider '" + spec + "'");
}

}  // namespace radiart
