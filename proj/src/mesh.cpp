#include "advmesh/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace advmesh {

void validate_mesh(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.faces.empty())
        throw std::invalid_argument("mesh: empty vertex or face list");
    const int nv = static_cast<int>(mesh.vertices.size());
    // Undirected edge use count and directed edge uniqueness (winding).
    std::map<std::pair<int, int>, int> undirected;
    std::map<std::pair<int, int>, int> directed;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a < 0 || a >= nv || b < 0 || b >= nv)
                throw std::invalid_argument("mesh: face index out of range");
            if (a == b) throw std::invalid_argument("mesh: face repeats a vertex");
            undirected[{std::min(a, b), std::max(a, b)}]++;
            if (++directed[{a, b}] > 1)
                throw std::invalid_argument("mesh: duplicated directed edge (inconsistent winding)");
        }
    }
    for (const auto& [e, n] : undirected) {
        if (n != 2) {
            std::ostringstream os;
            os << "mesh: edge (" << e.first << "," << e.second << ") used by " << n
               << " faces, expected 2 (not watertight)";
            throw std::invalid_argument(os.str());
        }
    }
    double vol = 0.0;
    for (const auto& f : mesh.faces)
        vol += dot(mesh.vertices[f[0]], cross(mesh.vertices[f[1]], mesh.vertices[f[2]])) / 6.0;
    if (vol <= 0.0)
        throw std::invalid_argument("mesh: non-positive enclosed volume (inward orientation?)");
}

void SphereSpec::validate() const {
    if (level < 0 || level > 6)
        throw std::invalid_argument("sphere spec: level must be in [0, 6]");
    if (scale.x <= 0.0 || scale.y <= 0.0 || scale.z <= 0.0)
        throw std::invalid_argument("sphere spec: scale components must be > 0");
}

namespace {

TriangleMesh base_icosahedron() {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {
        {-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
        {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
        {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1},
    };
    for (auto& v : m.vertices) v = normalized(v);
    m.faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    return m;
}

}  // namespace

TriangleMesh icosphere(const SphereSpec& spec) {
    spec.validate();
    TriangleMesh m = base_icosahedron();
    for (int it = 0; it < spec.level; ++it) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto found = midpoint.find(key);
            if (found != midpoint.end()) return found->second;
            int idx = static_cast<int>(m.vertices.size());
            m.vertices.push_back(normalized(m.vertices[a] + m.vertices[b]));
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.faces = std::move(next);
    }
    for (auto& v : m.vertices)
        v = {v.x * spec.scale.x, v.y * spec.scale.y, v.z * spec.scale.z};
    validate_mesh(m);
    return m;
}

LaplacianResult laplacian_loss(const TriangleMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertices.size());
    std::vector<std::vector<int>> ring(nv);
    auto link = [&](int a, int b) {
        auto& r = ring[a];
        if (std::find(r.begin(), r.end(), b) == r.end()) r.push_back(b);
    };
    for (const auto& f : mesh.faces) {
        link(f[0], f[1]); link(f[1], f[0]);
        link(f[1], f[2]); link(f[2], f[1]);
        link(f[2], f[0]); link(f[0], f[2]);
    }
    LaplacianResult out;
    out.gradient.assign(nv, Vec3{});
    std::vector<Vec3> diff(nv);
    for (int i = 0; i < nv; ++i) {
        if (ring[i].empty())
            throw std::invalid_argument("laplacian_loss: isolated vertex " + std::to_string(i));
        Vec3 centroid{};
        for (int j : ring[i]) centroid += mesh.vertices[j];
        centroid = centroid / static_cast<double>(ring[i].size());
        diff[i] = mesh.vertices[i] - centroid;
        out.value += norm2(diff[i]);
    }
    // d/dv_k = 2 d_k - 2 sum_{i in ring(k)} d_i / |ring(i)|
    for (int k = 0; k < nv; ++k) {
        Vec3 g = 2.0 * diff[k];
        for (int i : ring[k]) g -= diff[i] * (2.0 / static_cast<double>(ring[i].size()));
        out.gradient[k] = g;
    }
    return out;
}

double signed_volume(const TriangleMesh& mesh) {
    validate_mesh(mesh);
    double vol = 0.0;
    for (const auto& f : mesh.faces)
        vol += dot(mesh.vertices[f[0]], cross(mesh.vertices[f[1]], mesh.vertices[f[2]])) / 6.0;
    return std::abs(vol);
}

namespace {

struct Tri2 {
    double ax, ay, bx, by, cx, cy;
    double minx, miny, maxx, maxy;
    bool contains(double px, double py) const {
        double d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        double d2 = (cx - bx) * (py - by) - (cy - by) * (px - bx);
        double d3 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx);
        bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
        bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
        return !(neg && pos);
    }
};

double rasterized_union_area(const std::vector<Tri2>& tris, double minx, double miny,
                             double maxx, double maxy, int res) {
    const double hx = (maxx - minx) / res;
    const double hy = (maxy - miny) / res;
    std::vector<uint8_t> hit(static_cast<size_t>(res) * res, 0);
    for (const auto& t : tris) {
        int i0 = std::max(0, static_cast<int>((t.minx - minx) / hx) - 1);
        int i1 = std::min(res - 1, static_cast<int>((t.maxx - minx) / hx) + 1);
        int j0 = std::max(0, static_cast<int>((t.miny - miny) / hy) - 1);
        int j1 = std::min(res - 1, static_cast<int>((t.maxy - miny) / hy) + 1);
        for (int j = j0; j <= j1; ++j) {
            double py = miny + (j + 0.5) * hy;
            uint8_t* row = hit.data() + static_cast<size_t>(j) * res;
            for (int i = i0; i <= i1; ++i) {
                if (row[i]) continue;
                if (t.contains(minx + (i + 0.5) * hx, py)) row[i] = 1;
            }
        }
    }
    size_t count = 0;
    for (uint8_t h : hit) count += h;
    return static_cast<double>(count) * hx * hy;
}

}  // namespace

double bev_area(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.faces.empty())
        throw std::invalid_argument("bev_area: empty mesh");
    std::vector<Tri2> tris;
    tris.reserve(mesh.faces.size());
    double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        Tri2 t{a.x, a.y, b.x, b.y, c.x, c.y, 0, 0, 0, 0};
        t.minx = std::min({t.ax, t.bx, t.cx});
        t.maxx = std::max({t.ax, t.bx, t.cx});
        t.miny = std::min({t.ay, t.by, t.cy});
        t.maxy = std::max({t.ay, t.by, t.cy});
        double area2 = std::abs((t.bx - t.ax) * (t.cy - t.ay) - (t.cx - t.ax) * (t.by - t.ay));
        if (area2 <= 0.0) continue;  // projects to a segment, zero measure
        tris.push_back(t);
        minx = std::min(minx, t.minx); maxx = std::max(maxx, t.maxx);
        miny = std::min(miny, t.miny); maxy = std::max(maxy, t.maxy);
    }
    if (tris.empty()) return 0.0;
    // Pad so triangle edges never sit exactly on the outer cell boundary.
    double pad = 1e-9 + 1e-6 * std::max(maxx - minx, maxy - miny);
    minx -= pad; miny -= pad; maxx += pad; maxy += pad;
    double prev = -1.0;
    for (int res = 256; res <= 4096; res *= 2) {
        double area = rasterized_union_area(tris, minx, miny, maxx, maxy, res);
        if (prev >= 0.0 && area > 0.0 && std::abs(area - prev) <= 0.0025 * area) return area;
        prev = area;
    }
    return prev;
}

std::string export_obj(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.faces.empty())
        throw std::invalid_argument("export_obj: empty mesh");
    std::string out;
    out.reserve(mesh.vertices.size() * 40 + mesh.faces.size() * 20);
    char buf[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        out += buf;
    }
    for (const auto& f : mesh.faces) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out += buf;
    }
    return out;
}

TriangleMesh import_obj(const std::string& text) {
    TriangleMesh mesh;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z))
                throw std::invalid_argument("obj parse error at line " + std::to_string(lineno) +
                                            ": bad vertex");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            std::string tok;
            for (int k = 0; k < 3; ++k) {
                if (!(ls >> tok))
                    throw std::invalid_argument("obj parse error at line " + std::to_string(lineno) +
                                                ": bad face");
                // accept "i", "i/..", "i//.." forms
                size_t slash = tok.find('/');
                try {
                    f[k] = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash)) - 1;
                } catch (const std::exception&) {
                    throw std::invalid_argument("obj parse error at line " + std::to_string(lineno) +
                                                ": bad face index");
                }
            }
            mesh.faces.push_back(f);
        }
        // other tags ignored
    }
    validate_mesh(mesh);
    return mesh;
}

}  // namespace advmesh
