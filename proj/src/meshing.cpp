#include "radiart/meshing.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

#include "mc_tables.hpp"
#include "radiart/error.hpp"

namespace radiart {

namespace {

void check_resolution(const Aabb& bounds, const GridResolution& res) {
    for (std::size_t r : res)
        if (r < 2) throw ValidationError("grid resolution must be >= 2 on every axis");
    for (int a = 0; a < 3; ++a)
        if (!(bounds.lo[a] < bounds.hi[a])) throw ValidationError("grid bounding box is empty");
}

DensityGrid empty_grid(const Aabb& bounds, const GridResolution& res) {
    DensityGrid g;
    g.bounds = bounds;
    g.nx = res[0];
    g.ny = res[1];
    g.nz = res[2];
    g.values.assign(g.nx * g.ny * g.nz, 0.0);
    return g;
}

/// Nearest-neighbour distances by sweeping points sorted along x.
class SweepIndex {
public:
    explicit SweepIndex(const std::vector<Vec3>& pts) : pts_(pts) {
        std::sort(pts_.begin(), pts_.end(), [](const Vec3& a, const Vec3& b) { return a.x() < b.x(); });
    }

    double nearest(const Vec3& q) const {
        const auto it = std::lower_bound(pts_.begin(), pts_.end(), q.x(),
                                         [](const Vec3& p, double x) { return p.x() < x; });
        double best = std::numeric_limits<double>::infinity();
        for (auto r = it; r != pts_.end() && r->x() - q.x() < best; ++r) best = std::min(best, (*r - q).norm());
        for (auto l = it; l != pts_.begin();) {
            --l;
            if (q.x() - l->x() >= best) break;
            best = std::min(best, (*l - q).norm());
        }
        return best;
    }

private:
    std::vector<Vec3> pts_;
};

double mean_nearest(const std::vector<Vec3>& from, const SweepIndex& to) {
    double acc = 0.0;
    for (const Vec3& p : from) acc += to.nearest(p);
    return acc / static_cast<double>(from.size());
}

}  // namespace

Vec3 DensityGrid::spacing() const {
    return Vec3((bounds.hi.x() - bounds.lo.x()) / static_cast<double>(nx - 1),
                (bounds.hi.y() - bounds.lo.y()) / static_cast<double>(ny - 1),
                (bounds.hi.z() - bounds.lo.z()) / static_cast<double>(nz - 1));
}

Vec3 DensityGrid::point(std::size_t i, std::size_t j, std::size_t k) const {
    const Vec3 s = spacing();
    return Vec3(bounds.lo.x() + static_cast<double>(i) * s.x(), bounds.lo.y() + static_cast<double>(j) * s.y(),
                bounds.lo.z() + static_cast<double>(k) * s.z());
}

void DensityGrid::validate() const {
    check_resolution(bounds, {nx, ny, nz});
    if (values.size() != nx * ny * nz) throw ValidationError("grid value count does not match resolution");
    for (double v : values)
        if (!std::isfinite(v) || v < 0.0) throw ValidationError("grid values must be finite and >= 0");
}

DensityGrid bake_density_grid(const std::function<double(const Vec3&)>& density, const Aabb& bounds,
                              const GridResolution& res) {
    check_resolution(bounds, res);
    DensityGrid g = empty_grid(bounds, res);
    for (std::size_t k = 0; k < g.nz; ++k)
        for (std::size_t j = 0; j < g.ny; ++j)
            for (std::size_t i = 0; i < g.nx; ++i) g.values[g.index(i, j, k)] = density(g.point(i, j, k));
    return g;
}

DensityGrid bake_density_grid(const FieldParams& params, const Aabb& bounds, const GridResolution& res) {
    check_resolution(bounds, res);
    params.validate();
    DensityGrid g = empty_grid(bounds, res);
    const std::size_t total = g.values.size();
    constexpr std::size_t kChunk = 4096;
    const Tensor zero_dirs(kChunk, 3);
    for (std::size_t start = 0; start < total; start += kChunk) {
        const std::size_t n = std::min(kChunk, total - start);
        Tensor pos(n, 3);
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t idx = start + r;
            const std::size_t i = idx % g.nx, j = (idx / g.nx) % g.ny, k = idx / (g.nx * g.ny);
            const Vec3 p = g.point(i, j, k);
            for (int c = 0; c < 3; ++c) pos(r, c) = p[c];
        }
        ad::Tape tape;
        const FieldVars vars = bind_params(tape, params, false);
        const FieldBatch f =
            field_forward(vars, params.arch, pos, n == kChunk ? zero_dirs : Tensor(n, 3));
        const Tensor& s = f.sigma.value();
        if (!s.all_finite()) throw NumericError("bake_density_grid: non-finite density");
        std::copy_n(s.data(), n, g.values.data() + start);
    }
    return g;
}

void TriangleMesh::validate() const {
    for (const auto& t : triangles) {
        for (std::uint32_t v : t)
            if (v >= vertices.size()) throw UsageError("mesh triangle index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw UsageError("mesh triangle repeats a vertex index");
    }
}

TriangleMesh marching_cubes(const DensityGrid& grid, double iso) {
    if (!std::isfinite(iso)) throw PreconditionError("marching_cubes: iso level must be finite");
    grid.validate();
    TriangleMesh mesh;
    // welded vertex per lattice edge, keyed by (lower lattice point, axis)
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    auto vertex_on_edge = [&](std::size_t i, std::size_t j, std::size_t k, int edge) -> std::uint32_t {
        const int* ca = mc::kCorner[mc::kEdgeCorners[edge][0]];
        const int* cb = mc::kCorner[mc::kEdgeCorners[edge][1]];
        std::size_t pa[3] = {i + ca[0], j + ca[1], k + ca[2]};
        std::size_t pb[3] = {i + cb[0], j + cb[1], k + cb[2]};
        int axis = 0;
        while (pa[axis] == pb[axis]) ++axis;
        const std::size_t* lo = pa[axis] < pb[axis] ? pa : pb;
        const std::size_t* hi = pa[axis] < pb[axis] ? pb : pa;
        const std::uint64_t key = static_cast<std::uint64_t>(grid.index(lo[0], lo[1], lo[2])) * 3 + axis;
        const auto found = edge_vertex.find(key);
        if (found != edge_vertex.end()) return found->second;
        const double va = grid.at(lo[0], lo[1], lo[2]);
        const double vb = grid.at(hi[0], hi[1], hi[2]);
        const double t = (iso - va) / (vb - va);
        const Vec3 a = grid.point(lo[0], lo[1], lo[2]);
        const Vec3 b = grid.point(hi[0], hi[1], hi[2]);
        const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(a + t * (b - a));
        edge_vertex.emplace(key, id);
        return id;
    };

    for (std::size_t k = 0; k + 1 < grid.nz; ++k)
        for (std::size_t j = 0; j + 1 < grid.ny; ++j)
            for (std::size_t i = 0; i + 1 < grid.nx; ++i) {
                int config = 0;
                for (int c = 0; c < 8; ++c)
                    if (grid.at(i + mc::kCorner[c][0], j + mc::kCorner[c][1], k + mc::kCorner[c][2]) < iso)
                        config |= 1 << c;
                const int* tri = mc::kTriangles[config];
                for (int t = 0; tri[t] != -1; t += 3) {
                    const std::uint32_t a = vertex_on_edge(i, j, k, tri[t]);
                    const std::uint32_t b = vertex_on_edge(i, j, k, tri[t + 1]);
                    const std::uint32_t c = vertex_on_edge(i, j, k, tri[t + 2]);
                    // table order already faces the side below iso
                    mesh.triangles.push_back({a, b, c});
                }
            }
    return mesh;
}

MeshTopology mesh_topology(const TriangleMesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            std::uint32_t a = t[e], b = t[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            ++uses[{a, b}];
        }
    MeshTopology topo;
    topo.vertices = mesh.vertices.size();
    topo.faces = mesh.triangles.size();
    topo.edges = uses.size();
    for (const auto& [edge, n] : uses) {
        if (n == 1) ++topo.boundary_edges;
        if (n > 2) ++topo.nonmanifold_edges;
    }
    return topo;
}

double signed_volume(const TriangleMesh& mesh) {
    double v = 0.0;
    for (const auto& t : mesh.triangles)
        v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]])) / 6.0;
    return v;
}

double mean_vertex_displacement(const TriangleMesh& a, const TriangleMesh& b) {
    if (a.vertices.empty() && b.vertices.empty()) return 0.0;
    if (a.vertices.empty() || b.vertices.empty()) return std::numeric_limits<double>::infinity();
    const SweepIndex ia(a.vertices), ib(b.vertices);
    return 0.5 * (mean_nearest(a.vertices, ib) + mean_nearest(b.vertices, ia));
}

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    mesh.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write mesh " + path.string());
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    out.flush();
    if (!out) throw IoError("failed writing mesh " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read mesh " + path.string());
    TriangleMesh mesh;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw DatasetFormatError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
            mesh.vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<std::uint32_t> idx;
            for (std::string tok; ls >> tok;) {
                const std::string head = tok.substr(0, tok.find('/'));
                long long v = 0;
                const auto [end, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
                if (ec != std::errc() || end != head.data() + head.size() || v < 1) throw DatasetFormatError(path.string() + ":" + std::to_string(line_no) + ": bad face index");
                idx.push_back(static_cast<std::uint32_t>(v - 1));
            }
            if (idx.size() != 3)
                throw DatasetFormatError(path.string() + ":" + std::to_string(line_no) + ": only triangles are supported");
            mesh.triangles.push_back({idx[0], idx[1], idx[2]});
        }
    }
    try {
        mesh.validate();
    } catch (const UsageError& e) {
        throw DatasetFormatError(path.string() + ": " + e.what());
    }
    return mesh;
}

}  // namespace radiart
