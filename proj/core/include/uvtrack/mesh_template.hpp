#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uvtrack/types.hpp"

namespace uvtrack {

struct TemplateMesh {
  std::vector<Vec3> vertices;                // rest pose, mm
  std::vector<std::array<int, 3>> faces;     // triangle vertex indices

  // Throws InvalidTemplate on out-of-range face indices or degenerate faces
  // (area <= 1e-9 mm^2).
  void validate() const;
};

// Per-vertex unit normals computed from the given (possibly deformed) vertex
// positions: area-weighted average of incident face normals.
std::vector<Vec3> vertex_normals(std::span<const Vec3> vertices,
                                 std::span<const std::array<int, 3>> faces);

// A marker bound to a mesh face by convex barycentric coordinates.
struct MarkerBinding {
  std::string marker_id;
  int face_index = -1;
  Vec3 barycentric = Vec3::Zero();  // alpha_k >= 0, sum = 1
};

struct GridTemplate {
  TemplateMesh mesh;
  std::vector<MarkerBinding> bindings;  // one per grid vertex
  int rows = 0;
  int cols = 0;
  double spacing_mm = 0.0;
};

// Planar rows x cols grid centered at the origin in the z = 0 plane, with a
// marker bound at every grid vertex. rows*cols vertices,
// 2*(rows-1)*(cols-1) triangles.
GridTemplate build_grid_template(int rows, int cols, double spacing_mm);

struct JointChain {
  std::vector<Vec3> joints;                // ordered, mm
  std::vector<double> segment_rest_lengths;

  void validate() const;
};

// Straight chain along +x centered at the origin with uniform spacing.
// Joints double as markers.
JointChain build_chain_template(int n_joints, double spacing_mm);

// Nearest surface point as a face + clamped-to-simplex barycentric binding.
// Throws OffSurface when the point is farther than tolerance_mm from the mesh.
MarkerBinding barycentric_embed(const TemplateMesh& mesh, const Vec3& point,
                                double tolerance_mm = 1.0);

// Position of a bound marker on possibly deformed vertices:
// sum_k alpha_k * vertices[face[k]]. Throws InvalidBinding for bad indices.
Vec3 marker_position(std::span<const Vec3> vertices,
                     std::span<const std::array<int, 3>> faces,
                     const MarkerBinding& binding);

// Closest point on triangle abc, returned as barycentric coordinates.
Vec3 closest_point_on_triangle_barycentric(const Vec3& p, const Vec3& a,
                                           const Vec3& b, const Vec3& c);

// ASCII OBJ, triangles only.
TemplateMesh load_obj(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const TemplateMesh& mesh);

// Bindings: JSON array of {marker_id, face, alpha: [3]}.
std::vector<MarkerBinding> load_bindings(const std::filesystem::path& path);
void save_bindings(const std::filesystem::path& path,
                   std::span<const MarkerBinding> bindings);

// Chain: JSON {joints: [[x, y, z], ...]}.
JointChain load_chain(const std::filesystem::path& path);
void save_chain(const std::filesystem::path& path, const JointChain& chain);

}  // namespace uvtrack
