#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "advmesh/vec3.hpp"

namespace advmesh {

/// Watertight triangle mesh. Faces are counter-clockwise when seen from
/// outside; construction through validate_mesh enforces closedness.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
};

struct MeshDiagnostics {
    std::vector<int> degenerate_faces;  // zero-area after deformation
};

// Throws std::invalid_argument on out-of-range indices, open edges, edges
// shared by more than two faces, inconsistent winding, or non-positive
// enclosed volume.
void validate_mesh(const TriangleMesh& mesh);

struct SphereSpec {
    int level = 2;                  // subdivision count
    Vec3 scale{1.0, 1.0, 1.0};      // per-axis radius, meters

    void validate() const;          // level in [0,6], scale > 0
};

// Icosahedron subdivided `level` times, vertices pushed to the unit sphere
// and then scaled per-axis. 10*4^level + 2 vertices, 20*4^level faces.
TriangleMesh icosphere(const SphereSpec& spec);

// Surface smoothness: sum_i |v_i - mean(1-ring of i)|^2 and its exact
// gradient per vertex. Throws on isolated vertices.
struct LaplacianResult {
    double value = 0.0;
    std::vector<Vec3> gradient;
};
LaplacianResult laplacian_loss(const TriangleMesh& mesh);

// |sum over faces of (1/6) v_i . (v_j x v_k)|. Requires a watertight mesh.
double signed_volume(const TriangleMesh& mesh);

// Area of the union of all faces projected to the xy-plane. Rasterized on a
// grid refined until two successive resolutions agree within 0.25%, which
// keeps the result within 0.5% of the exact union.
double bev_area(const TriangleMesh& mesh);

// Wavefront OBJ subset: "v x y z" and "f i j k" (1-based). Import validates
// the mesh and reports parse errors with a line number.
std::string export_obj(const TriangleMesh& mesh);
TriangleMesh import_obj(const std::string& text);

}  // namespace advmesh
