#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "radiart/field.hpp"
#include "radiart/geometry.hpp"

namespace radiart {

/// Density sampled on the (nx·ny·nz) lattice spanning `bounds`, both ends
/// included. Value (i,j,k) is stored at (k·ny + j)·nx + i.
struct DensityGrid {
    Aabb bounds;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;
    std::vector<double> values;

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * ny + j) * nx + i; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return values[index(i, j, k)]; }
    Vec3 point(std::size_t i, std::size_t j, std::size_t k) const;
    Vec3 spacing() const;
    /// Throws ValidationError unless every axis has ≥ 2 points, the box is
    /// non-empty and all values are finite and ≥ 0.
    void validate() const;
};

using GridResolution = std::array<std::size_t, 3>;

/// σ of a field at every lattice point (view direction is irrelevant to σ).
DensityGrid bake_density_grid(const FieldParams& params, const Aabb& bounds, const GridResolution& res);
DensityGrid bake_density_grid(const std::function<double(const Vec3&)>& density, const Aabb& bounds,
                              const GridResolution& res);

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    bool empty() const { return triangles.empty(); }
    /// Throws UsageError on out-of-range or repeated indices.
    void validate() const;
};

/// Default iso level: softplus(0) = ln 2 above the zero-density floor.
inline double default_iso_level() { return std::log(2.0); }

/// Marching cubes with linear interpolation along cell edges. Vertices on a
/// shared lattice edge are welded, so closed surfaces come out watertight.
/// Triangles are wound so that normals point away from the region σ > iso.
TriangleMesh marching_cubes(const DensityGrid& grid, double iso);

struct MeshTopology {
    std::size_t vertices = 0;
    std::size_t edges = 0;
    std::size_t faces = 0;
    /// Edges used by exactly one triangle, or by more than two.
    std::size_t boundary_edges = 0;
    std::size_t nonmanifold_edges = 0;

    long long euler_characteristic() const {
        return static_cast<long long>(vertices) - static_cast<long long>(edges) +
               static_cast<long long>(faces);
    }
    bool watertight() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};
MeshTopology mesh_topology(const TriangleMesh& mesh);

/// Σ over triangles of the signed tetrahedron volumes against the origin;
/// positive for closed meshes with outward normals.
double signed_volume(const TriangleMesh& mesh);

/// Symmetric mean nearest-vertex distance between two meshes; 0 for two
/// empty meshes, +inf when exactly one is empty.
double mean_vertex_displacement(const TriangleMesh& a, const TriangleMesh& b);

/// ASCII Wavefront OBJ with `v` and 1-based `f` records only. Coordinates are
/// written with round-trip precision. Throws IoError on write failure.
void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
/// Reads `v` and `f` records (texture/normal indices after '/' are ignored).
/// Throws IoError if unreadable, DatasetFormatError on malformed records.
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace radiart
