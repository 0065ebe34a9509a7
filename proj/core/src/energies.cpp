#include <Eigen/SparseCore>
#include <algorithm>
#include <map>
#include <numeric>

#include "residual_system.hpp"
#include "uvtrack/fitting.hpp"
#include "uvtrack/kdtree.hpp"
#include "uvtrack/so3.hpp"

namespace uvtrack {

Mat3 DeformationState::rotation_matrix(std::size_t i) const {
  return so3_exp(rotations[i]);
}

Vec3 deform_point(const Mat3& node_rotation, const Vec3& node_translation,
                  const Vec3& node_rest_position, const Vec3& point) {
  return node_rotation * (point - node_rest_position) + node_rest_position +
         node_translation;
}

std::vector<Vec3> apply_state(std::span<const Vec3> rest_vertices,
                              const DeformationState& state) {
  if (rest_vertices.size() != state.size()) {
    fail(ErrorCode::InvalidArgument, "apply_state: state size mismatch");
  }
  std::vector<Vec3> out(rest_vertices.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = rest_vertices[i] + state.translations[i];
  }
  return out;
}

std::size_t GraphNeighborhood::edge_count() const {
  std::size_t n = 0;
  for (const auto& list : neighbors) n += list.size();
  return n;
}

namespace {

// Gaussian falloff weights over the given adjacency, normalized per vertex.
void finish_graph_weights(std::span<const Vec3> vertices, GraphNeighborhood& graph) {
  double edge_sum = 0.0;
  std::size_t edge_count = 0;
  for (std::size_t j = 0; j < graph.neighbors.size(); ++j) {
    for (int k : graph.neighbors[j]) {
      edge_sum += (vertices[k] - vertices[j]).norm();
      ++edge_count;
    }
  }
  graph.sigma_mm = edge_count > 0 ? edge_sum / static_cast<double>(edge_count) : 1.0;
  const double inv_two_sigma_sq = 1.0 / (2.0 * graph.sigma_mm * graph.sigma_mm);
  graph.weights.resize(graph.neighbors.size());
  for (std::size_t j = 0; j < graph.neighbors.size(); ++j) {
    auto& w = graph.weights[j];
    w.resize(graph.neighbors[j].size());
    double sum = 0.0;
    for (std::size_t n = 0; n < w.size(); ++n) {
      const double d2 = (vertices[graph.neighbors[j][n]] - vertices[j]).squaredNorm();
      w[n] = std::exp(-d2 * inv_two_sigma_sq);
      sum += w[n];
    }
    if (sum <= 0.0) {  // all neighbors far beyond sigma: fall back to uniform
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    } else {
      for (auto& x : w) x /= sum;
    }
  }
}

}  // namespace

GraphNeighborhood build_graph_neighborhood(std::span<const Vec3> rest_vertices, int k) {
  const int n = static_cast<int>(rest_vertices.size());
  if (n < 2) fail(ErrorCode::InvalidTemplate, "graph needs at least 2 vertices");
  const int kk = std::min(k, n - 1);
  GraphNeighborhood graph;
  graph.neighbors.resize(n);
  KdTree3 tree(rest_vertices);
  for (int j = 0; j < n; ++j) {
    // query k+1 and drop the vertex itself
    auto near = tree.k_nearest(rest_vertices[j], kk + 1);
    auto& list = graph.neighbors[j];
    for (int idx : near) {
      if (idx != j && static_cast<int>(list.size()) < kk) list.push_back(idx);
    }
  }
  finish_graph_weights(rest_vertices, graph);
  return graph;
}

GraphNeighborhood build_chain_neighborhood(std::span<const Vec3> joints) {
  const int n = static_cast<int>(joints.size());
  if (n < 2) fail(ErrorCode::InvalidTemplate, "chain graph needs at least 2 joints");
  GraphNeighborhood graph;
  graph.neighbors.resize(n);
  for (int j = 0; j < n; ++j) {
    if (j > 0) graph.neighbors[j].push_back(j - 1);
    if (j + 1 < n) graph.neighbors[j].push_back(j + 1);
  }
  finish_graph_weights(joints, graph);
  return graph;
}

Vec3 attachment_position(std::span<const Vec3> vertices,
                         const MarkerAttachment& a) {
  return a.weights[0] * vertices[a.vertices[0]] +
         a.weights[1] * vertices[a.vertices[1]] +
         a.weights[2] * vertices[a.vertices[2]];
}

DeformableTemplate make_deformable(const TemplateMesh& mesh,
                                   std::span<const MarkerBinding> bindings, int knn) {
  mesh.validate();
  if (mesh.vertices.size() < 2) {
    fail(ErrorCode::InvalidTemplate, "template needs at least 2 vertices");
  }
  DeformableTemplate tmpl;
  tmpl.rest_vertices = mesh.vertices;
  tmpl.faces = mesh.faces;
  for (const auto& b : bindings) {
    if (b.face_index < 0 || b.face_index >= static_cast<int>(mesh.faces.size())) {
      fail(ErrorCode::InvalidBinding, "marker '" + b.marker_id + "': face index out of range");
    }
    MarkerAttachment a;
    a.marker_id = b.marker_id;
    const auto& f = mesh.faces[b.face_index];
    a.vertices = {f[0], f[1], f[2]};
    a.weights = b.barycentric;
    tmpl.markers.push_back(std::move(a));
  }
  tmpl.graph = build_graph_neighborhood(tmpl.rest_vertices, knn);
  return tmpl;
}

DeformableTemplate make_deformable(const GridTemplate& grid, int knn) {
  return make_deformable(grid.mesh, grid.bindings, knn);
}

DeformableTemplate make_deformable(const JointChain& chain) {
  chain.validate();
  DeformableTemplate tmpl;
  tmpl.rest_vertices = chain.joints;
  tmpl.is_chain = true;
  for (int j = 0; j < static_cast<int>(chain.joints.size()); ++j) {
    MarkerAttachment a;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "m%03d", j);
    a.marker_id = buf;
    a.vertices = {j, j, j};
    a.weights = Vec3(1.0, 0.0, 0.0);
    tmpl.markers.push_back(std::move(a));
  }
  tmpl.graph = build_chain_neighborhood(chain.joints);
  return tmpl;
}

CorrespondenceSet build_correspondences(std::span<const Vec3> deformed_vertices,
                                        const PointCloud& cloud) {
  CorrespondenceSet corr;
  if (cloud.points.empty()) return corr;
  KdTree3 tree(deformed_vertices);
  corr.closest_vertex.reserve(cloud.points.size());
  corr.distance_mm.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    double sq = 0.0;
    corr.closest_vertex.push_back(tree.nearest(p, &sq));
    corr.distance_mm.push_back(std::sqrt(sq));
  }
  return corr;
}

FrozenStructure freeze_structure(const DeformableTemplate& tmpl,
                                 const DeformationState& state, const PointCloud& cloud) {
  FrozenStructure frozen;
  const auto deformed = apply_state(tmpl.rest_vertices, state);
  frozen.correspondences = build_correspondences(deformed, cloud);
  if (!tmpl.faces.empty()) {
    frozen.normals = vertex_normals(deformed, tmpl.faces);
  }
  return frozen;
}

namespace detail {

std::vector<ActiveObservation> resolve_observations(
    const DeformableTemplate& tmpl, const MarkerObservationSet& observations,
    std::span<const CameraModel> cameras) {
  std::map<std::string, int> camera_index;
  for (int i = 0; i < static_cast<int>(cameras.size()); ++i) {
    camera_index[cameras[i].id] = i;
  }
  std::map<std::string, int> marker_index;
  for (int i = 0; i < static_cast<int>(tmpl.markers.size()); ++i) {
    marker_index[tmpl.markers[i].marker_id] = i;
  }
  std::vector<ActiveObservation> active;
  active.reserve(observations.size());
  for (const auto& obs : observations) {
    if (obs.weight <= 0.0) continue;
    const auto cam_it = camera_index.find(obs.camera_id);
    if (cam_it == camera_index.end()) {
      fail(ErrorCode::InvalidArgument, "observation references unknown camera '" + obs.camera_id + "'");
    }
    const auto marker_it = marker_index.find(obs.marker_id);
    if (marker_it == marker_index.end()) {
      fail(ErrorCode::InvalidArgument, "observation references unknown marker '" + obs.marker_id + "'");
    }
    active.push_back({cam_it->second, marker_it->second, &obs});
  }
  return active;
}

// Builds the stacked residual system with frozen correspondences/normals.
// Returns the number of rows emitted.
int build_system(const DeformableTemplate& tmpl, const DeformationState& state,
                 const PointCloud& cloud, std::span<const ActiveObservation> active,
                 std::span<const CameraModel> cameras, const FrozenStructure& frozen,
                 const ResidualWeights& weights, const SystemRequest& req) {
  if (tmpl.rest_vertices.size() != state.size()) {
    fail(ErrorCode::InvalidArgument, "state does not match template vertex count");
  }
  const int n = static_cast<int>(tmpl.rest_vertices.size());
  const int m = static_cast<int>(cloud.points.size());
  const bool with_faces = !tmpl.faces.empty();

  int rows = 0;
  if (req.sections & kSectionFit) rows += with_faces ? 4 * m : 3 * m;
  if (req.sections & kSectionMarker) rows += 2 * static_cast<int>(active.size());
  if (req.sections & kSectionSmooth) rows += 3 * static_cast<int>(tmpl.graph.edge_count());

  if (req.residuals) req.residuals->setZero(rows);
  auto put = [&](int row, double value) {
    if (req.residuals) (*req.residuals)(row) = value;
  };
  auto put_j = [&](int row, int col, double value) {
    if (req.jacobian) req.jacobian->emplace_back(row, col, value);
  };

  std::vector<Vec3> deformed(n);
  for (int i = 0; i < n; ++i) deformed[i] = tmpl.rest_vertices[i] + state.translations[i];

  int row = 0;
  if (req.sections & kSectionFit) {
    if (m > 0 && static_cast<int>(frozen.correspondences.closest_vertex.size()) != m) {
      fail(ErrorCode::InvalidArgument, "correspondences are stale for this cloud");
    }
    if (m > 0 && with_faces && static_cast<int>(frozen.normals.size()) != n) {
      fail(ErrorCode::InvalidArgument, "frozen normals do not match the template");
    }
    for (int j = 0; j < m; ++j) {
      const int c = frozen.correspondences.closest_vertex[j];
      const Vec3 d = deformed[c] - cloud.points[j];
      for (int a = 0; a < 3; ++a) {
        put(row + a, d[a]);
        put_j(row + a, 6 * c + 3 + a, 1.0);
      }
      row += 3;
    }
    if (with_faces) {
      const double sb = std::sqrt(weights.beta);
      for (int j = 0; j < m; ++j) {
        const int c = frozen.correspondences.closest_vertex[j];
        const Vec3& normal = frozen.normals[c];
        const Vec3 d = deformed[c] - cloud.points[j];
        put(row, sb * normal.dot(d));
        for (int a = 0; a < 3; ++a) put_j(row, 6 * c + 3 + a, sb * normal[a]);
        row += 1;
      }
    }
  }

  if (req.sections & kSectionMarker) {
    for (const auto& act : active) {
      const MarkerAttachment& attachment = tmpl.markers[act.attachment_index];
      const Vec3 x = attachment_position(deformed, attachment);
      const double s = std::sqrt(weights.lambda_marker * act.obs->weight);
      const auto proj = project_with_jacobian(cameras[act.camera_index], x);
      const Pixel2 r = s * (act.obs->pixel - proj.pixel);
      put(row, r.x());
      put(row + 1, r.y());
      if (req.jacobian) {
        for (int k = 0; k < 3; ++k) {
          const double wk = attachment.weights[k];
          if (wk == 0.0) continue;
          const Eigen::Matrix<double, 2, 3> block = -s * wk * proj.d_pixel_d_point;
          const int col0 = 6 * attachment.vertices[k] + 3;
          for (int rr = 0; rr < 2; ++rr)
            for (int cc = 0; cc < 3; ++cc) put_j(row + rr, col0 + cc, block(rr, cc));
        }
      }
      row += 2;
    }
  }

  if (req.sections & kSectionSmooth) {
    std::vector<Mat3> rot(n), drot(n);
    for (int i = 0; i < n; ++i) {
      rot[i] = so3_exp(state.rotations[i]);
      if (req.jacobian) drot[i] = so3_right_jacobian(state.rotations[i]);
    }
    for (int j = 0; j < n; ++j) {
      const auto& neigh = tmpl.graph.neighbors[j];
      for (std::size_t nn = 0; nn < neigh.size(); ++nn) {
        const int k = neigh[nn];
        const double s = std::sqrt(weights.lambda_smooth * tmpl.graph.weights[j][nn]);
        const Vec3 u = tmpl.rest_vertices[k] - tmpl.rest_vertices[j];
        const Vec3 r = s * (rot[j] * u - u + state.translations[j] - state.translations[k]);
        for (int a = 0; a < 3; ++a) put(row + a, r[a]);
        if (req.jacobian) {
          const Mat3 dw = -s * rot[j] * so3_hat(u) * drot[j];
          for (int rr = 0; rr < 3; ++rr) {
            for (int cc = 0; cc < 3; ++cc) {
              put_j(row + rr, 6 * j + cc, dw(rr, cc));
            }
            put_j(row + rr, 6 * j + 3 + rr, s);
            put_j(row + rr, 6 * k + 3 + rr, -s);
          }
        }
        row += 3;
      }
    }
  }
  return rows;
}

}  // namespace detail

EnergyTerm energy_fit(const DeformableTemplate& tmpl, const DeformationState& state,
                      const PointCloud& cloud, const CorrespondenceSet& correspondences,
                      double beta) {
  EnergyTerm term;
  if (cloud.points.empty()) {
    term.empty_input = true;
    term.residuals.resize(0);
    return term;
  }
  FrozenStructure frozen;
  frozen.correspondences = correspondences;
  if (!tmpl.faces.empty()) {
    frozen.normals = vertex_normals(apply_state(tmpl.rest_vertices, state), tmpl.faces);
  }
  ResidualWeights weights;
  weights.beta = beta;
  detail::SystemRequest req;
  req.sections = detail::kSectionFit;
  req.residuals = &term.residuals;
  detail::build_system(tmpl, state, cloud, {}, {}, frozen, weights, req);
  term.value = term.residuals.squaredNorm();
  return term;
}

EnergyTerm energy_marker(const DeformableTemplate& tmpl, const DeformationState& state,
                         const MarkerObservationSet& observations,
                         std::span<const CameraModel> cameras) {
  EnergyTerm term;
  const auto active = detail::resolve_observations(tmpl, observations, cameras);
  if (active.empty()) {
    term.empty_input = observations.empty();
    term.residuals.resize(0);
    return term;
  }
  ResidualWeights weights;  // lambda_marker = 1: the raw E_marker
  detail::SystemRequest req;
  req.sections = detail::kSectionMarker;
  req.residuals = &term.residuals;
  detail::build_system(tmpl, state, PointCloud{}, active, cameras, {}, weights, req);
  term.value = term.residuals.squaredNorm();
  return term;
}

EnergyTerm energy_smooth(const DeformableTemplate& tmpl, const DeformationState& state) {
  EnergyTerm term;
  ResidualWeights weights;  // lambda_smooth = 1: the raw E_smooth
  detail::SystemRequest req;
  req.sections = detail::kSectionSmooth;
  req.residuals = &term.residuals;
  detail::build_system(tmpl, state, PointCloud{}, {}, {}, {}, weights, req);
  term.value = term.residuals.squaredNorm();
  return term;
}

double total_energy(const DeformableTemplate& tmpl, const DeformationState& state,
                    const PointCloud& cloud, const MarkerObservationSet& observations,
                    std::span<const CameraModel> cameras,
                    const CorrespondenceSet& correspondences,
                    double beta, double lambda_marker, double lambda_smooth) {
  return energy_fit(tmpl, state, cloud, correspondences, beta).value +
         lambda_marker * energy_marker(tmpl, state, observations, cameras).value +
         lambda_smooth * energy_smooth(tmpl, state).value;
}

Eigen::VectorXd residual_vector(const DeformableTemplate& tmpl,
                                const DeformationState& state, const PointCloud& cloud,
                                const MarkerObservationSet& observations,
                                std::span<const CameraModel> cameras,
                                const FrozenStructure& frozen, const ResidualWeights& weights) {
  Eigen::VectorXd residuals;
  const auto active = detail::resolve_observations(tmpl, observations, cameras);
  detail::SystemRequest req;
  req.residuals = &residuals;
  detail::build_system(tmpl, state, cloud, active, cameras, frozen, weights, req);
  return residuals;
}

Eigen::SparseMatrix<double> residual_jacobian(
    const DeformableTemplate& tmpl, const DeformationState& state, const PointCloud& cloud,
    const MarkerObservationSet& observations, std::span<const CameraModel> cameras,
    const FrozenStructure& frozen, const ResidualWeights& weights) {
  std::vector<Eigen::Triplet<double>> triplets;
  const auto active = detail::resolve_observations(tmpl, observations, cameras);
  detail::SystemRequest req;
  req.jacobian = &triplets;
  const int rows = detail::build_system(tmpl, state, cloud, active, cameras, frozen, weights, req);
  Eigen::SparseMatrix<double> jac(rows, 6 * static_cast<int>(tmpl.rest_vertices.size()));
  jac.setFromTriplets(triplets.begin(), triplets.end());
  return jac;
}

}  // namespace uvtrack
