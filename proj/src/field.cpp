#include "radiart/field.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "radiart/error.hpp"

namespace radiart {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'A', 'R', 'T', 'C', 'K', '1'};
constexpr int kCheckpointVersion = 1;

std::pair<std::size_t, std::size_t> layer_shape(const FieldArch& a, std::size_t tensor_index) {
    const std::size_t w = static_cast<std::size_t>(a.hidden_width);
    const std::size_t layer = tensor_index / 2;
    const bool bias = tensor_index % 2 == 1;
    std::size_t in = 0, out = 0;
    if (layer < static_cast<std::size_t>(a.depth)) {
        in = layer == 0 ? a.pos_features() : w;
        out = w;
    } else if (layer == static_cast<std::size_t>(a.depth)) {
        in = w;
        out = 1;
    } else {
        in = w + a.dir_features();
        out = 3;
    }
    return bias ? std::make_pair(std::size_t{1}, out) : std::make_pair(in, out);
}

}  // namespace

void FieldArch::validate() const {
    if (depth < 1) throw ValidationError("field depth must be >= 1");
    if (hidden_width < 1) throw ValidationError("field hidden_width must be >= 1");
    if (pe_levels_pos < 0 || pe_levels_dir < 0)
        throw ValidationError("positional encoding levels must be >= 0");
}

std::string to_string(CheckpointRole role) {
    return role == CheckpointRole::Reconstructed ? "reconstructed" : "stylized";
}

CheckpointRole checkpoint_role_from_string(const std::string& s) {
    if (s == "reconstructed") return CheckpointRole::Reconstructed;
    if (s == "stylized") return CheckpointRole::Stylized;
    throw ValidationError("unknown checkpoint role '" + s + "'");
}

std::size_t FieldParams::scalar_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors) n += t.size();
    return n;
}

Tensor FieldParams::flatten() const {
    Tensor flat(1, scalar_count());
    std::size_t o = 0;
    for (const Tensor& t : tensors) {
        std::copy_n(t.data(), t.size(), flat.data() + o);
        o += t.size();
    }
    return flat;
}

void FieldParams::assign_flat(const Tensor& flat) {
    if (flat.size() != scalar_count()) throw UsageError("assign_flat: size mismatch");
    std::size_t o = 0;
    for (Tensor& t : tensors) {
        std::copy_n(flat.data() + o, t.size(), t.data());
        o += t.size();
    }
}

void FieldParams::validate() const {
    arch.validate();
    if (tensors.size() != arch.tensor_count())
        throw UsageError("field params: expected " + std::to_string(arch.tensor_count()) +
                         " tensors, got " + std::to_string(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto [r, c] = layer_shape(arch, i);
        if (tensors[i].rows() != r || tensors[i].cols() != c)
            throw UsageError("field params: tensor " + std::to_string(i) + " has wrong shape");
        if (!tensors[i].all_finite())
            throw NumericError("field params: non-finite entries in tensor " + std::to_string(i));
    }
}

std::vector<std::string> FieldParams::tensor_names() const {
    std::vector<std::string> names;
    for (int l = 0; l < arch.depth; ++l) {
        names.push_back("trunk." + std::to_string(l) + ".weight");
        names.push_back("trunk." + std::to_string(l) + ".bias");
    }
    names.insert(names.end(), {"density.weight", "density.bias", "color.weight", "color.bias"});
    return names;
}

Tensor positional_encode(std::span<const double> x, int levels) {
    const std::size_t k = x.size();
    Tensor out(1, k * (1 + 2 * static_cast<std::size_t>(levels)));
    for (std::size_t i = 0; i < k; ++i) out[i] = x[i];
    double freq = std::numbers::pi;
    for (int l = 0; l < levels; ++l, freq *= 2.0) {
        const std::size_t base = k * (1 + 2 * static_cast<std::size_t>(l));
        for (std::size_t i = 0; i < k; ++i) {
            out[base + i] = std::sin(freq * x[i]);
            out[base + k + i] = std::cos(freq * x[i]);
        }
    }
    return out;
}

Tensor positional_encode_rows(const Tensor& x, int levels) {
    const std::size_t width = x.cols() * (1 + 2 * static_cast<std::size_t>(levels));
    Tensor out(x.rows(), width);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const Tensor row = positional_encode(x.row_span(r), levels);
        std::copy_n(row.data(), width, out.data() + r * width);
    }
    return out;
}

FieldParams init_params(const FieldArch& arch, std::uint64_t seed) {
    arch.validate();
    FieldParams p;
    p.arch = arch;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < arch.tensor_count(); ++i) {
        const auto [r, c] = layer_shape(arch, i);
        Tensor t(r, c);
        if (i % 2 == 0) {
            const double a = std::sqrt(6.0 / static_cast<double>(r + c));
            std::uniform_real_distribution<double> u(-a, a);
            for (double& v : t.values()) v = u(rng);
        }
        p.tensors.push_back(std::move(t));
    }
    return p;
}

FieldVars bind_params(ad::Tape& tape, const FieldParams& params, bool requires_grad) {
    FieldVars v;
    for (const Tensor& t : params.tensors)
        v.tensors.push_back(requires_grad ? tape.input(t) : tape.constant(t));
    return v;
}

FieldBatch field_forward(const FieldVars& vars, const FieldArch& arch, const Tensor& positions,
                         const Tensor& directions) {
    if (vars.tensors.size() != arch.tensor_count())
        throw UsageError("field_forward: parameter count does not match arch");
    if (positions.cols() != 3 || directions.cols() != 3 || positions.rows() != directions.rows())
        throw UsageError("field_forward: positions and directions must be N×3");
    ad::Tape& tape = *vars.tensors.front().tape;
    ad::Var h = tape.constant(positional_encode_rows(positions, arch.pe_levels_pos));
    for (int l = 0; l < arch.depth; ++l) {
        const ad::Var w = vars.tensors[2 * l];
        const ad::Var b = vars.tensors[2 * l + 1];
        h = ad::softplus(ad::matmul(h, w) + b);
    }
    const std::size_t dh = 2 * static_cast<std::size_t>(arch.depth);
    ad::Var sigma = ad::softplus(ad::matmul(h, vars.tensors[dh]) + vars.tensors[dh + 1]);
    ad::Var dir_enc = tape.constant(positional_encode_rows(directions, arch.pe_levels_dir));
    const ad::Var parts[] = {h, dir_enc};
    ad::Var feat = ad::concat_cols(parts);
    ad::Var color = ad::sigmoid(ad::matmul(feat, vars.tensors[dh + 2]) + vars.tensors[dh + 3]);
    return {sigma, color};
}

FieldOutput field_eval(const FieldParams& params, const Vec3& x, const Vec3& d) {
    params.validate();
    ad::Tape tape;
    FieldVars vars = bind_params(tape, params, false);
    Tensor pos(1, 3), dir(1, 3);
    for (int i = 0; i < 3; ++i) {
        pos[i] = x[i];
        dir[i] = d[i];
    }
    FieldBatch out = field_forward(vars, params.arch, pos, dir);
    FieldOutput r;
    r.sigma = out.sigma.value()[0];
    for (int i = 0; i < 3; ++i) r.color[i] = out.color.value()[i];
    if (!std::isfinite(r.sigma) || !r.color.allFinite())
        throw NumericError("field_eval produced non-finite output");
    return r;
}

void save_checkpoint(const FieldParams& params, const std::filesystem::path& path) {
    params.validate();
    nlohmann::json h;
    h["format"] = "radiart-checkpoint";
    h["version"] = kCheckpointVersion;
    h["role"] = to_string(params.role);
    h["arch"] = {{"pe_levels_pos", params.arch.pe_levels_pos},
                 {"pe_levels_dir", params.arch.pe_levels_dir},
                 {"hidden_width", params.arch.hidden_width},
                 {"depth", params.arch.depth}};
    const auto names = params.tensor_names();
    h["tensors"] = nlohmann::json::array();
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
        h["tensors"].push_back(
            {{"name", names[i]}, {"shape", {params.tensors[i].rows(), params.tensors[i].cols()}}});
    const std::string header = h.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    const auto len = static_cast<std::uint32_t>(header.size());
    const unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                                 static_cast<unsigned char>(len >> 16),
                                 static_cast<unsigned char>(len >> 24)};
    os.write(reinterpret_cast<const char*>(lb), 4);
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor& t : params.tensors) {
        for (double v : t.values()) {
            const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            const unsigned char b[4] = {
                static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
            os.write(reinterpret_cast<const char*>(b), 4);
        }
    }
    if (!os) throw IoError("write failed for checkpoint " + path.string());
}

FieldParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    unsigned char lb[4];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("not a radiart checkpoint: " + path.string());
    if (!is.read(reinterpret_cast<char*>(lb), 4)) throw ValidationError("truncated checkpoint");
    const std::uint32_t len = lb[0] | (lb[1] << 8) | (lb[2] << 16) | (std::uint32_t(lb[3]) << 24);
    std::string header(len, '\0');
    if (!is.read(header.data(), len)) throw ValidationError("truncated checkpoint header");
    FieldParams p;
    try {
        const auto h = nlohmann::json::parse(header);
        if (h.at("version").get<int>() != kCheckpointVersion)
            throw ValidationError("unsupported checkpoint version");
        const auto& a = h.at("arch");
        p.arch.pe_levels_pos = a.at("pe_levels_pos").get<int>();
        p.arch.pe_levels_dir = a.at("pe_levels_dir").get<int>();
        p.arch.hidden_width = a.at("hidden_width").get<int>();
        p.arch.depth = a.at("depth").get<int>();
        p.arch.validate();
        p.role = checkpoint_role_from_string(h.at("role").get<std::string>());
        for (const auto& tj : h.at("tensors")) {
            const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) throw ValidationError("checkpoint tensor shape must be 2D");
            p.tensors.emplace_back(shape[0], shape[1]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad checkpoint header: " + std::string(e.what()));
    }
    for (Tensor& t : p.tensors) {
        for (double& v : t.values()) {
            unsigned char b[4];
            if (!is.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("truncated checkpoint data");
            const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
            v = std::bit_cast<float>(bits);
        }
    }
    p.validate();
    return p;
}

}  // namespace radiart
