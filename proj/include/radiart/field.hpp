#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "radiart/autodiff.hpp"
#include "radiart/geometry.hpp"
#include "radiart/tensor.hpp"

namespace radiart {

/// MLP layout. The trunk has `depth` affine layers (softplus activations) fed
/// by the encoded position; density comes from a softplus head on the trunk
/// output and color from a sigmoid head on [trunk output, encoded direction].
struct FieldArch {
    int pe_levels_pos = 6;
    int pe_levels_dir = 2;
    int hidden_width = 128;
    int depth = 4;

    static FieldArch desk() { return {6, 2, 128, 4}; }
    static FieldArch full() { return {10, 4, 256, 8}; }

    void validate() const;
    std::size_t pos_features() const { return 3 * (1 + 2 * static_cast<std::size_t>(pe_levels_pos)); }
    std::size_t dir_features() const { return 3 * (1 + 2 * static_cast<std::size_t>(pe_levels_dir)); }
    /// Number of weight/bias tensors: two per trunk layer plus two per head.
    std::size_t tensor_count() const { return 2 * static_cast<std::size_t>(depth) + 4; }

    friend bool operator==(const FieldArch&, const FieldArch&) = default;
};

enum class CheckpointRole { Reconstructed, Stylized };

std::string to_string(CheckpointRole role);
CheckpointRole checkpoint_role_from_string(const std::string& s);

/// All trainable tensors of a field, ordered
/// [trunk W0, b0, …, W_{depth−1}, b_{depth−1}, density W, b, color W, b].
/// Weights are fan_in×fan_out, biases 1×fan_out.
struct FieldParams {
    FieldArch arch;
    CheckpointRole role = CheckpointRole::Reconstructed;
    std::vector<Tensor> tensors;

    std::size_t density_head_index() const { return 2 * static_cast<std::size_t>(arch.depth); }
    std::size_t color_head_index() const { return density_head_index() + 2; }
    /// True for tensors that influence density (trunk and density head).
    bool affects_density(std::size_t tensor_index) const {
        return tensor_index < color_head_index();
    }

    std::size_t scalar_count() const;
    Tensor flatten() const;
    void assign_flat(const Tensor& flat);
    /// Throws UsageError on shape mismatch with `arch`, NumericError on NaN/Inf.
    void validate() const;
    std::vector<std::string> tensor_names() const;
};

struct FieldOutput {
    double sigma = 0.0;
    Vec3 color = Vec3::Zero();
};

/// (x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx)); each entry
/// is the whole k-vector, so the result has k·(1+2L) values.
Tensor positional_encode(std::span<const double> x, int levels);
/// Row-wise encoding of an N×k tensor.
Tensor positional_encode_rows(const Tensor& x, int levels);

/// Glorot-uniform weights, zero biases; deterministic in (arch, seed).
FieldParams init_params(const FieldArch& arch, std::uint64_t seed);

/// Single-point evaluation. Throws NumericError on non-finite parameters.
FieldOutput field_eval(const FieldParams& params, const Vec3& x, const Vec3& d);

/// Parameters placed on a tape, in FieldParams::tensors order.
struct FieldVars {
    std::vector<ad::Var> tensors;
};
FieldVars bind_params(ad::Tape& tape, const FieldParams& params, bool requires_grad);

struct FieldBatch {
    ad::Var sigma;  // N×1
    ad::Var color;  // N×3
};
/// Batched field on the tape. positions/directions are N×3 constants.
FieldBatch field_forward(const FieldVars& vars, const FieldArch& arch, const Tensor& positions,
                         const Tensor& directions);

/// Binary checkpoint: 8-byte magic, little-endian u32 header length, JSON
/// header (version, role, arch, tensor names/shapes), then the parameters as a
/// little-endian float32 blob.
void save_checkpoint(const FieldParams& params, const std::filesystem::path& path);
FieldParams load_checkpoint(const std::filesystem::path& path);

}  // namespace radiart
