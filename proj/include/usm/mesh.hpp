#pragma once

#include "usm/decoder.hpp"

#include <string>
#include <vector>

namespace usm {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;

    bool empty() const { return faces.empty(); }
};

/// Isosurface of the decoder SDF on a resolution^3 cell grid over
/// [-1.1, 1.1]^3 (canonical frame). Cells are split into six tetrahedra with
/// a translation-invariant decomposition, so shared vertices weld exactly and
/// closed surfaces come out watertight. Zero crossings are linearly
/// interpolated and triangles oriented outward (inside = negative SDF).
/// An empty zero-level set yields an empty mesh.
TriMesh extract_mesh(const Decoder& decoder, const VecX& z, int resolution);

/// Area-weighted uniform surface samples, deterministic under the seed.
std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed);

TriMesh transform_mesh(const TriMesh& mesh, const Mat4& m);

double mesh_surface_area(const TriMesh& mesh);

/// Every edge of a closed mesh is shared by exactly two triangles.
bool mesh_watertight(const TriMesh& mesh);

/// ASCII OBJ with v/f records only.
void write_obj(const std::string& path, const TriMesh& mesh);
TriMesh read_obj(const std::string& path);

}  // namespace usm
