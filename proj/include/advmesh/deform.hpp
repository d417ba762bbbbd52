#pragma once

#include <string>
#include <vector>

#include "advmesh/mesh.hpp"

namespace advmesh {

// Learnable deformation of a base mesh: per-vertex displacements clamped to
// the scale box [-b, +b] plus one global offset clamped to [-c, +c]. The
// clamp is applied as a projection after each optimizer step and treated as
// identity in the backward pass.
struct DeformationState {
    std::vector<Vec3> base_vertices;
    std::vector<std::array<int, 3>> faces;   // topology shared with the base mesh
    std::vector<Vec3> displacements;
    Vec3 global_offset{};
    Vec3 offset_limit{};                     // c
    Vec3 scale_box{};                        // b

    static DeformationState from_mesh(const TriangleMesh& mesh, const Vec3& scale_box,
                                      const Vec3& offset_limit);
};

// Projects the state in place (clamps displacements and the global offset)
// and returns the materialized mesh, offset included. Degenerate faces are
// reported, not removed, so vertex indexing stays stable.
TriangleMesh apply_deformation(DeformationState& state, MeshDiagnostics* diag = nullptr);

// Materialize without mutating (state assumed already projected).
TriangleMesh materialize(const DeformationState& state);

// Per-vertex clamped positions in the object frame, before the global
// offset; these are the vertices the box-constraint invariant bounds.
std::vector<Vec3> clamped_vertices(const DeformationState& state);

// ||materialized vertices - base vertices||_2 over all coordinates, global
// offset included.
double l2_norm(const DeformationState& state);

// Plain-text state checkpoint (full double precision, OBJ-style face lines).
std::string save_state(const DeformationState& state);
DeformationState load_state(const std::string& text);

}  // namespace advmesh
