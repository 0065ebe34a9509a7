#include "uvtrack/mesh_template.hpp"

#include <Eigen/Geometry>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace uvtrack {

void TemplateMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= n) {
        fail(ErrorCode::InvalidTemplate, "face index out of range");
      }
    }
    const Vec3 e1 = vertices[f[1]] - vertices[f[0]];
    const Vec3 e2 = vertices[f[2]] - vertices[f[0]];
    if (0.5 * e1.cross(e2).norm() <= 1e-9) {
      fail(ErrorCode::InvalidTemplate, "degenerate face (area <= 1e-9 mm^2)");
    }
  }
}

std::vector<Vec3> vertex_normals(std::span<const Vec3> vertices,
                                 std::span<const std::array<int, 3>> faces) {
  std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
  for (const auto& f : faces) {
    // cross product length = 2 * area, so accumulation is area-weighted
    const Vec3 n = (vertices[f[1]] - vertices[f[0]])
                       .cross(vertices[f[2]] - vertices[f[0]]);
    normals[f[0]] += n;
    normals[f[1]] += n;
    normals[f[2]] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 1e-12 ? Vec3(n / len) : Vec3::UnitZ();
  }
  return normals;
}

GridTemplate build_grid_template(int rows, int cols, double spacing_mm) {
  if (rows < 2 || cols < 2 || spacing_mm <= 0.0) {
    fail(ErrorCode::InvalidTemplate, "grid template needs rows, cols >= 2 and spacing > 0");
  }
  GridTemplate grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.spacing_mm = spacing_mm;
  auto& mesh = grid.mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(rows) * cols);
  const double x0 = -0.5 * (cols - 1) * spacing_mm;
  const double y0 = -0.5 * (rows - 1) * spacing_mm;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      mesh.vertices.emplace_back(x0 + c * spacing_mm, y0 + r * spacing_mm, 0.0);
    }
  }
  auto vid = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      // both triangles wound for a +z normal
      mesh.faces.push_back({vid(r, c), vid(r, c + 1), vid(r + 1, c + 1)});
      mesh.faces.push_back({vid(r, c), vid(r + 1, c + 1), vid(r + 1, c)});
    }
  }
  mesh.validate();

  grid.bindings.reserve(mesh.vertices.size());
  // For every vertex pick one incident face and put the full weight on the
  // vertex's corner of that face.
  std::vector<int> host_face(mesh.vertices.size(), -1);
  std::vector<int> host_corner(mesh.vertices.size(), -1);
  for (int fi = 0; fi < static_cast<int>(mesh.faces.size()); ++fi) {
    for (int k = 0; k < 3; ++k) {
      const int v = mesh.faces[fi][k];
      if (host_face[v] < 0) {
        host_face[v] = fi;
        host_corner[v] = k;
      }
    }
  }
  for (int v = 0; v < static_cast<int>(mesh.vertices.size()); ++v) {
    MarkerBinding b;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "m%03d", v);
    b.marker_id = buf;
    b.face_index = host_face[v];
    b.barycentric = Vec3::Zero();
    b.barycentric[host_corner[v]] = 1.0;
    grid.bindings.push_back(b);
  }
  return grid;
}

void JointChain::validate() const {
  if (joints.size() < 2) {
    fail(ErrorCode::InvalidTemplate, "chain needs at least 2 joints");
  }
  for (std::size_t i = 0; i + 1 < joints.size(); ++i) {
    if ((joints[i + 1] - joints[i]).norm() <= 1e-12) {
      fail(ErrorCode::InvalidTemplate, "consecutive chain joints coincide");
    }
  }
}

JointChain build_chain_template(int n_joints, double spacing_mm) {
  if (n_joints < 2 || spacing_mm <= 0.0) {
    fail(ErrorCode::InvalidTemplate, "chain template needs >= 2 joints and spacing > 0");
  }
  JointChain chain;
  const double x0 = -0.5 * (n_joints - 1) * spacing_mm;
  for (int i = 0; i < n_joints; ++i) {
    chain.joints.emplace_back(x0 + i * spacing_mm, 0.0, 0.0);
    if (i > 0) chain.segment_rest_lengths.push_back(spacing_mm);
  }
  return chain;
}

Vec3 closest_point_on_triangle_barycentric(const Vec3& p, const Vec3& a,
                                           const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {1.0 - v, v, 0.0};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {1.0 - w, 0.0, w};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - w, w};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1.0 - v - w, v, w};
}

MarkerBinding barycentric_embed(const TemplateMesh& mesh, const Vec3& point,
                                double tolerance_mm) {
  if (mesh.faces.empty()) {
    fail(ErrorCode::InvalidTemplate, "barycentric_embed: mesh has no faces");
  }
  MarkerBinding best;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int fi = 0; fi < static_cast<int>(mesh.faces.size()); ++fi) {
    const auto& f = mesh.faces[fi];
    const Vec3 bary = closest_point_on_triangle_barycentric(
        point, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    const Vec3 closest = bary[0] * mesh.vertices[f[0]] +
                         bary[1] * mesh.vertices[f[1]] +
                         bary[2] * mesh.vertices[f[2]];
    const double sq = (closest - point).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best.face_index = fi;
      best.barycentric = bary;
    }
  }
  if (best_sq > tolerance_mm * tolerance_mm) {
    fail(ErrorCode::OffSurface, "barycentric_embed: point farther than tolerance from surface");
  }
  return best;
}

Vec3 marker_position(std::span<const Vec3> vertices,
                     std::span<const std::array<int, 3>> faces,
                     const MarkerBinding& binding) {
  if (binding.face_index < 0 ||
      binding.face_index >= static_cast<int>(faces.size())) {
    fail(ErrorCode::InvalidBinding, "marker '" + binding.marker_id + "': face index out of range");
  }
  const auto& f = faces[binding.face_index];
  for (int idx : f) {
    if (idx < 0 || idx >= static_cast<int>(vertices.size())) {
      fail(ErrorCode::InvalidBinding, "marker '" + binding.marker_id + "': vertex index out of range");
    }
  }
  return binding.barycentric[0] * vertices[f[0]] +
         binding.barycentric[1] * vertices[f[1]] +
         binding.barycentric[2] * vertices[f[2]];
}

TemplateMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open OBJ file " + path.string());
  TemplateMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) {
        fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::array<int, 3> face{};
      std::string tok;
      int k = 0;
      while (ss >> tok) {
        if (k >= 3) {
          fail(ErrorCode::ParseError,
               path.string() + ":" + std::to_string(line_no) + ": only triangles are supported");
        }
        // accept "i", "i/..", "i//.."
        face[k++] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      if (k != 3) {
        fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": bad face");
      }
      mesh.faces.push_back(face);
    }
    // v-normals, texcoords and comments are ignored
  }
  mesh.validate();
  return mesh;
}

void save_obj(const std::filesystem::path& path, const TemplateMesh& mesh) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write OBJ file " + path.string());
  out.precision(17);
  for (const auto& v : mesh.vertices) {
    out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  }
}

std::vector<MarkerBinding> load_bindings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open bindings file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "bindings file " + path.string() + ": " + e.what());
  }
  std::vector<MarkerBinding> bindings;
  for (const auto& bj : j) {
    MarkerBinding b;
    b.marker_id = bj.at("marker_id").get<std::string>();
    b.face_index = bj.at("face").get<int>();
    const auto alpha = bj.at("alpha").get<std::vector<double>>();
    if (alpha.size() != 3) fail(ErrorCode::ParseError, "binding alpha must have 3 entries");
    b.barycentric = Vec3(alpha[0], alpha[1], alpha[2]);
    bindings.push_back(b);
  }
  return bindings;
}

void save_bindings(const std::filesystem::path& path,
                   std::span<const MarkerBinding> bindings) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& b : bindings) {
    j.push_back({{"marker_id", b.marker_id},
                 {"face", b.face_index},
                 {"alpha", {b.barycentric[0], b.barycentric[1], b.barycentric[2]}}});
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write bindings file " + path.string());
  out << j.dump(2) << "\n";
}

JointChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open chain file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "chain file " + path.string() + ": " + e.what());
  }
  JointChain chain;
  for (const auto& pj : j.at("joints")) {
    const auto p = pj.get<std::vector<double>>();
    if (p.size() != 3) fail(ErrorCode::ParseError, "chain joint must have 3 coordinates");
    chain.joints.emplace_back(p[0], p[1], p[2]);
  }
  chain.validate();
  for (std::size_t i = 0; i + 1 < chain.joints.size(); ++i) {
    chain.segment_rest_lengths.push_back((chain.joints[i + 1] - chain.joints[i]).norm());
  }
  return chain;
}

void save_chain(const std::filesystem::path& path, const JointChain& chain) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& p : chain.joints) joints.push_back({p.x(), p.y(), p.z()});
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write chain file " + path.string());
  out << nlohmann::json{{"joints", joints}}.dump(2) << "\n";
}

}  // namespace uvtrack
