#include "usm/mesh.hpp"

#include "usm/common.hpp"
#include "usm/io.hpp"
#include "usm/random.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace usm {

namespace {

constexpr double kDomain = 1.1;

// Six tetrahedra around the main diagonal (corner bitmask 0 -> 7); the
// decomposition is translation-invariant, so neighboring cells split shared
// faces along the same diagonal.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                             {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

struct MeshBuilder {
    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::map<std::pair<std::size_t, std::size_t>, int> edge_vertex;

    int crossing(std::size_t ia, std::size_t ib, const Vec3& pa, const Vec3& pb, double sa,
                 double sb) {
        const bool flip = ib < ia;
        const auto key = flip ? std::make_pair(ib, ia) : std::make_pair(ia, ib);
        const auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        // Interpolate in a fixed endpoint order so welding is bit-exact.
        const Vec3& p0 = flip ? pb : pa;
        const Vec3& p1 = flip ? pa : pb;
        const double s0 = flip ? sb : sa;
        const double s1 = flip ? sa : sb;
        const double t = s0 / (s0 - s1);
        const int id = static_cast<int>(vertices.size());
        vertices.push_back(p0 + t * (p1 - p0));
        edge_vertex.emplace(key, id);
        return id;
    }

    void triangle(int a, int b, int c, const Vec3& out_dir) {
        const Vec3 n = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
        if (n.dot(out_dir) < 0.0)
            faces.emplace_back(a, c, b);
        else
            faces.emplace_back(a, b, c);
    }
};

}  // namespace

TriMesh extract_mesh(const Decoder& decoder, const VecX& z, int resolution) {
    if (resolution < 8) throw InvalidInput("extract_mesh: resolution must be >= 8");
    const int n = resolution + 1;
    const double step = 2.0 * kDomain / resolution;
    std::vector<double> sdf(std::size_t(n) * n * n);
    auto grid_index = [n](int x, int y, int zi) {
        return (std::size_t(zi) * n + y) * n + x;
    };
    auto grid_point = [step](int x, int y, int zi) {
        return Vec3(-kDomain + step * x, -kDomain + step * y, -kDomain + step * zi);
    };
    parallel_for(std::size_t(n) * n * n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const int x = static_cast<int>(i % n);
            const int y = static_cast<int>((i / n) % n);
            const int zi = static_cast<int>(i / (std::size_t(n) * n));
            sdf[i] = decoder.decode(z, grid_point(x, y, zi));
        }
    });

    MeshBuilder builder;
    for (int zi = 0; zi < resolution; ++zi) {
        for (int y = 0; y < resolution; ++y) {
            for (int x = 0; x < resolution; ++x) {
                std::size_t corner_idx[8];
                Vec3 corner_pos[8];
                double corner_sdf[8];
                for (int b = 0; b < 8; ++b) {
                    const int cx = x + (b & 1), cy = y + ((b >> 1) & 1), cz = zi + ((b >> 2) & 1);
                    corner_idx[b] = grid_index(cx, cy, cz);
                    corner_pos[b] = grid_point(cx, cy, cz);
                    corner_sdf[b] = sdf[corner_idx[b]];
                }
                for (const auto& tet : kTets) {
                    int inside[4], outside[4];
                    int ni = 0, no = 0;
                    for (int vi = 0; vi < 4; ++vi) {
                        if (corner_sdf[tet[vi]] < 0.0)
                            inside[ni++] = tet[vi];
                        else
                            outside[no++] = tet[vi];
                    }
                    if (ni == 0 || ni == 4) continue;
                    Vec3 c_in = Vec3::Zero(), c_out = Vec3::Zero();
                    for (int vi = 0; vi < ni; ++vi) c_in += corner_pos[inside[vi]];
                    for (int vi = 0; vi < no; ++vi) c_out += corner_pos[outside[vi]];
                    const Vec3 out_dir = c_out / no - c_in / ni;
                    auto cut = [&](int a, int b) {
                        return builder.crossing(corner_idx[a], corner_idx[b], corner_pos[a],
                                                corner_pos[b], corner_sdf[a], corner_sdf[b]);
                    };
                    if (ni == 1) {
                        builder.triangle(cut(inside[0], outside[0]), cut(inside[0], outside[1]),
                                         cut(inside[0], outside[2]), out_dir);
                    } else if (ni == 3) {
                        builder.triangle(cut(inside[0], outside[0]), cut(inside[1], outside[0]),
                                         cut(inside[2], outside[0]), out_dir);
                    } else {
                        const int q0 = cut(inside[0], outside[0]);
                        const int q1 = cut(inside[0], outside[1]);
                        const int q2 = cut(inside[1], outside[1]);
                        const int q3 = cut(inside[1], outside[0]);
                        builder.triangle(q0, q1, q2, out_dir);
                        builder.triangle(q0, q2, q3, out_dir);
                    }
                }
            }
        }
    }
    return TriMesh{std::move(builder.vertices), std::move(builder.faces)};
}

double mesh_surface_area(const TriMesh& mesh) {
    double area = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
        const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
        area += 0.5 * e1.cross(e2).norm();
    }
    return area;
}

std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
    if (mesh.empty()) throw InvalidInput("sample_mesh_surface: empty mesh");
    std::vector<double> cumulative(mesh.faces.size());
    double total = 0.0;
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
        const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
        total += 0.5 * e1.cross(e2).norm();
        cumulative[i] = total;
    }
    if (total <= 0.0) throw InvalidInput("sample_mesh_surface: zero surface area");

    Rng rng(mix_seed({seed, 0x5355ull}));
    std::vector<Vec3> points;
    points.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double r = rng.uniform() * total;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
        const std::size_t fi = std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1);
        const auto& f = mesh.faces[fi];
        const double sq = std::sqrt(rng.uniform());
        const double u = 1.0 - sq;
        const double v = rng.uniform() * sq;
        points.push_back(u * mesh.vertices[f[0]] + v * mesh.vertices[f[1]] +
                         (1.0 - u - v) * mesh.vertices[f[2]]);
    }
    return points;
}

TriMesh transform_mesh(const TriMesh& mesh, const Mat4& m) {
    TriMesh out = mesh;
    const Mat3 r = m.topLeftCorner<3, 3>();
    const Vec3 t = m.topRightCorner<3, 1>();
    for (auto& vtx : out.vertices) vtx = r * vtx + t;
    return out;
}

bool mesh_watertight(const TriMesh& mesh) {
    if (mesh.empty()) return false;
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& f : mesh.faces) {
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            if (b < a) std::swap(a, b);
            ++edge_count[{a, b}];
        }
    }
    for (const auto& [edge, count] : edge_count)
        if (count != 2) return false;
    return true;
}

void write_obj(const std::string& path, const TriMesh& mesh) {
    std::ostringstream os;
    os.precision(10);
    for (const auto& v : mesh.vertices) os << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& f : mesh.faces)
        os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    write_text_file(path, os.str());
}

TriMesh read_obj(const std::string& path) {
    std::istringstream is(read_text_file(path));
    TriMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z())) throw FormatError("obj " + path + ": bad vertex");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                // Accept "i", "i/...": take the vertex index.
                idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
            }
            if (idx.size() < 3) throw FormatError("obj " + path + ": face with fewer than 3 vertices");
            for (std::size_t k = 2; k < idx.size(); ++k)
                mesh.faces.emplace_back(idx[0], idx[k - 1], idx[k]);
        }
    }
    return mesh;
}

}  // namespace usm
