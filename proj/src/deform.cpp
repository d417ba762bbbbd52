#include "advmesh/deform.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace advmesh {

DeformationState DeformationState::from_mesh(const TriangleMesh& mesh, const Vec3& scale_box,
                                             const Vec3& offset_limit) {
    if (scale_box.x <= 0.0 || scale_box.y <= 0.0 || scale_box.z <= 0.0)
        throw std::invalid_argument("deformation: scale box must be positive");
    if (offset_limit.x < 0.0 || offset_limit.y < 0.0 || offset_limit.z < 0.0)
        throw std::invalid_argument("deformation: offset limit must be non-negative");
    DeformationState s;
    s.base_vertices = mesh.vertices;
    s.faces = mesh.faces;
    s.displacements.assign(mesh.vertices.size(), Vec3{});
    s.scale_box = scale_box;
    s.offset_limit = offset_limit;
    return s;
}

TriangleMesh apply_deformation(DeformationState& state, MeshDiagnostics* diag) {
    if (state.displacements.size() != state.base_vertices.size())
        throw std::invalid_argument("deformation: displacement count mismatch");
    const Vec3 b = state.scale_box, c = state.offset_limit;
    for (size_t i = 0; i < state.base_vertices.size(); ++i) {
        Vec3 clamped = clamp_box(state.base_vertices[i] + state.displacements[i], -b, b);
        state.displacements[i] = clamped - state.base_vertices[i];
    }
    state.global_offset = clamp_box(state.global_offset, -c, c);
    TriangleMesh mesh = materialize(state);
    if (diag) {
        diag->degenerate_faces.clear();
        for (size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& face = mesh.faces[f];
            Vec3 n = cross(mesh.vertices[face[1]] - mesh.vertices[face[0]],
                           mesh.vertices[face[2]] - mesh.vertices[face[0]]);
            if (norm(n) <= 1e-14) diag->degenerate_faces.push_back(static_cast<int>(f));
        }
    }
    return mesh;
}

TriangleMesh materialize(const DeformationState& state) {
    TriangleMesh mesh;
    mesh.faces = state.faces;
    mesh.vertices.resize(state.base_vertices.size());
    const Vec3 b = state.scale_box, c = state.offset_limit;
    Vec3 offset = clamp_box(state.global_offset, -c, c);
    for (size_t i = 0; i < state.base_vertices.size(); ++i)
        mesh.vertices[i] =
            clamp_box(state.base_vertices[i] + state.displacements[i], -b, b) + offset;
    return mesh;
}

std::vector<Vec3> clamped_vertices(const DeformationState& state) {
    std::vector<Vec3> out(state.base_vertices.size());
    const Vec3 b = state.scale_box;
    for (size_t i = 0; i < state.base_vertices.size(); ++i)
        out[i] = clamp_box(state.base_vertices[i] + state.displacements[i], -b, b);
    return out;
}

double l2_norm(const DeformationState& state) {
    TriangleMesh mesh = materialize(state);
    double ss = 0.0;
    for (size_t i = 0; i < mesh.vertices.size(); ++i)
        ss += norm2(mesh.vertices[i] - state.base_vertices[i]);
    return std::sqrt(ss);
}

namespace {

void put3(std::string& out, const char* tag, const Vec3& v) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s %.17g %.17g %.17g\n", tag, v.x, v.y, v.z);
    out += buf;
}

}  // namespace

std::string save_state(const DeformationState& state) {
    std::string out = "# advmesh deformation state v1\n";
    for (const auto& v : state.base_vertices) put3(out, "vb", v);
    for (const auto& d : state.displacements) put3(out, "dv", d);
    put3(out, "og", state.global_offset);
    put3(out, "lim", state.offset_limit);
    put3(out, "box", state.scale_box);
    char buf[80];
    for (const auto& f : state.faces) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out += buf;
    }
    return out;
}

DeformationState load_state(const std::string& text) {
    DeformationState s;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_box = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        auto read3 = [&](Vec3& v) {
            if (!(ls >> v.x >> v.y >> v.z))
                throw std::invalid_argument("state parse error at line " + std::to_string(lineno));
        };
        if (tag == "vb") { Vec3 v; read3(v); s.base_vertices.push_back(v); }
        else if (tag == "dv") { Vec3 v; read3(v); s.displacements.push_back(v); }
        else if (tag == "og") read3(s.global_offset);
        else if (tag == "lim") read3(s.offset_limit);
        else if (tag == "box") { read3(s.scale_box); have_box = true; }
        else if (tag == "f") {
            std::array<int, 3> f{};
            if (!(ls >> f[0] >> f[1] >> f[2]))
                throw std::invalid_argument("state parse error at line " + std::to_string(lineno));
            s.faces.push_back({f[0] - 1, f[1] - 1, f[2] - 1});
        } else {
            throw std::invalid_argument("state parse error at line " + std::to_string(lineno) +
                                        ": unknown tag '" + tag + "'");
        }
    }
    if (!have_box || s.base_vertices.empty() ||
        s.displacements.size() != s.base_vertices.size() || s.faces.empty())
        throw std::invalid_argument("state parse error: incomplete state file");
    return s;
}

}  // namespace advmesh
