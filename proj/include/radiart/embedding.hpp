#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "radiart/autodiff.hpp"
#include "radiart/image.hpp"
#include "radiart/tensor.hpp"

namespace radiart {

struct EmbeddingCapabilities {
    bool text = false;
    bool image = false;
    bool image_vjp = false;
};

/// Paired image/text encoder into a shared space of unit vectors.
///
/// The public entry points validate arguments and capabilities, then defer to
/// the do_* hooks. embed_image_on_tape() lets the encoder participate in a
/// gradient computation; the default wraps embed_image/image_embed_vjp as a
/// single opaque tape node, which is all a remote encoder can offer.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingCapabilities capabilities() const = 0;

    /// Unit D-vector. Throws UsageError on empty text, CapabilityError when the
    /// provider cannot embed text.
    std::vector<double> embed_text(const std::string& text) const;
    std::vector<double> embed_image(const Image& image) const;
    /// (∂e/∂image)ᵀ·upstream as an image-shaped gradient.
    Image image_embed_vjp(const Image& image, std::span<const double> upstream) const;

    /// 1×D embedding of an image stored on the tape as (h·w)×3.
    virtual ad::Var embed_image_on_tape(ad::Var image, std::size_t width, std::size_t height) const;

protected:
    virtual std::vector<double> do_embed_text(const std::string& text) const;
    virtual std::vector<double> do_embed_image(const Image& image) const;
    virtual Image do_image_embed_vjp(const Image& image, std::span<const double> upstream) const;
};

/// Desk-scale stand-in for a real text-image encoder.
///
/// Image path: area resize to 16×16, flatten, fixed Gaussian projection to D
/// plus a fixed offset, tanh, L2 normalisation. Text path: whitespace tokens,
/// each hashed to a seeded Gaussian D-vector, averaged (bag of words) and
/// normalised. Everything is a pure function of the seed.
class ToyEncoder final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDim = 64;
    static constexpr std::size_t kInputSize = 16;

    explicit ToyEncoder(std::uint64_t seed, std::size_t dim = kDefaultDim);

    std::string name() const override;
    std::size_t dim() const override { return dim_; }
    EmbeddingCapabilities capabilities() const override { return {true, true, true}; }
    std::uint64_t seed() const { return seed_; }

    ad::Var embed_image_on_tape(ad::Var image, std::size_t width, std::size_t height) const override;

protected:
    std::vector<double> do_embed_text(const std::string& text) const override;
    std::vector<double> do_embed_image(const Image& image) const override;
    Image do_image_embed_vjp(const Image& image, std::span<const double> upstream) const override;

private:
    std::uint64_t seed_;
    std::size_t dim_;
    Tensor projection_;  // (16·16·3)×D
    Tensor offset_;      // 1×D
};

/// Row-stochastic matrix mapping a flattened (in_h·in_w) image to
/// (out_h·out_w) pixels by exact box-overlap averaging.
Tensor area_resize_matrix(std::size_t in_w, std::size_t in_h, std::size_t out_w, std::size_t out_h);

/// Fixed random-weight convolution pyramid used as the perceptual feature
/// stack: each level is a 3×3 stride-2 convolution followed by tanh.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed, std::vector<std::size_t> channels = {8, 16, 32});

    std::size_t levels() const { return weights_.size(); }
    std::uint64_t seed() const { return seed_; }

    /// One (h_l·w_l)×C_l tensor per level.
    std::vector<Tensor> extract(const Image& image) const;
    std::vector<ad::Var> extract_on_tape(ad::Var image, std::size_t width, std::size_t height) const;

private:
    std::uint64_t seed_;
    std::vector<std::size_t> channels_;
    std::vector<Tensor> weights_;  // (9·C_in)×C_out
};

/// Parses "toy:<seed>" or "bridge:<endpoint>".
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec);

}  // namespace radiart
