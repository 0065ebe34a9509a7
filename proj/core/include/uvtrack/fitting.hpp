#pragma once

#include <Eigen/SparseCore>
#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uvtrack/geometry.hpp"
#include "uvtrack/mesh_template.hpp"
#include "uvtrack/types.hpp"

namespace uvtrack {

struct PointCloud {
  std::vector<Vec3> points;  // mm
};

// One detected 2D marker position in one camera view, with its confidence
// weight (0 when the marker is occluded from that camera).
struct MarkerObservation {
  std::string camera_id;
  std::string marker_id;
  Pixel2 pixel = Pixel2::Zero();
  double weight = 1.0;
};
using MarkerObservationSet = std::vector<MarkerObservation>;

// Per-vertex deformation unknowns. Rotations are kept in axis-angle form,
// which is also the parametrization used during optimization; the rotation
// matrix is recovered through the exponential map.
struct DeformationState {
  std::vector<Vec3> rotations;     // axis-angle
  std::vector<Vec3> translations;  // mm

  static DeformationState identity(std::size_t n) {
    DeformationState s;
    s.rotations.assign(n, Vec3::Zero());
    s.translations.assign(n, Vec3::Zero());
    return s;
  }
  std::size_t size() const { return translations.size(); }
  Mat3 rotation_matrix(std::size_t i) const;
};

// Local deformation of a point in node i's region of influence:
// R_i * (p - v_i) + v_i + t_i.
Vec3 deform_point(const Mat3& node_rotation, const Vec3& node_translation,
                  const Vec3& node_rest_position, const Vec3& point);

// Deformed vertex positions v_i + t_i.
std::vector<Vec3> apply_state(std::span<const Vec3> rest_vertices,
                              const DeformationState& state);

// k-nearest-neighbor graph over the rest pose with per-edge Gaussian weights
// gamma_jk = exp(-|v_k - v_j|^2 / (2 sigma^2)), normalized to sum to 1 per
// vertex. sigma is the mean rest edge length over the graph.
struct GraphNeighborhood {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> weights;
  double sigma_mm = 0.0;

  std::size_t edge_count() const;
};

GraphNeighborhood build_graph_neighborhood(std::span<const Vec3> rest_vertices,
                                           int k = 10);

// Degenerate graph for joint chains: neighbors are the chain-adjacent joints.
GraphNeighborhood build_chain_neighborhood(std::span<const Vec3> joints);

// A marker expressed as convex weights over up to three vertices. Mesh
// bindings map to the face's corners; chain joints map to a single vertex.
struct MarkerAttachment {
  std::string marker_id;
  std::array<int, 3> vertices{0, 0, 0};
  Vec3 weights = Vec3(1.0, 0.0, 0.0);
};

Vec3 attachment_position(std::span<const Vec3> vertices,
                         const MarkerAttachment& attachment);

// Everything the solver needs, covering both 2D mesh templates and 1D joint
// chains (chains have no faces, which disables the point-to-face term).
struct DeformableTemplate {
  std::vector<Vec3> rest_vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<MarkerAttachment> markers;
  GraphNeighborhood graph;
  bool is_chain = false;
};

DeformableTemplate make_deformable(const TemplateMesh& mesh,
                                   std::span<const MarkerBinding> bindings,
                                   int knn = 10);
DeformableTemplate make_deformable(const GridTemplate& grid, int knn = 10);
DeformableTemplate make_deformable(const JointChain& chain);

// Closest deformed template vertex per cloud point.
struct CorrespondenceSet {
  std::vector<int> closest_vertex;
  std::vector<double> distance_mm;
};

CorrespondenceSet build_correspondences(std::span<const Vec3> deformed_vertices,
                                        const PointCloud& cloud);

// Solver configuration. The continuation schedule starts at the *_init
// weights and multiplies by decay after every outer iteration until the
// *_min floors are reached.
struct FitConfig {
  double lambda_smooth_init = 100.0;
  double lambda_smooth_min = 0.1;
  double lambda_marker_init = 10.0;
  // The floor keeps the reprojection term strong enough to counter the
  // boundary-sampling pull of the point-to-vertex data term.
  double lambda_marker_min = 2.0;
  double decay = 0.5;
  double beta = 1.0;  // point-to-face weight
  int max_outer = 20;
  int max_inner_lm = 50;
  double energy_rel_tol = 1e-6;

  void validate() const;
};

FitConfig load_fit_config(const std::filesystem::path& path);
void save_fit_config(const std::filesystem::path& path, const FitConfig& config);

// --- energies ------------------------------------------------------------

struct EnergyTerm {
  double value = 0.0;
  Eigen::VectorXd residuals;      // stacked, value == residuals.squaredNorm()
  bool empty_input = false;       // set when the data term had nothing to fit
};

// E_fit: sum_j |v_c(j) + t_c(j) - p_j|^2 + beta * sum_j |n_c(j)^T (v_c(j) +
// t_c(j) - p_j)|^2 with normals recomputed on the deformed mesh.
// Correspondences must be current for the given state.
EnergyTerm energy_fit(const DeformableTemplate& tmpl, const DeformationState& state,
                      const PointCloud& cloud, const CorrespondenceSet& correspondences,
                      double beta);

// E_marker: sum_i sum_j w_ij |p_ij - pi_i(x~_j)|^2 over observations, where
// x~_j is the attachment position on the deformed vertices. Observations with
// weight 0 contribute nothing. Throws BehindCamera when a positively weighted
// marker has non-positive depth.
EnergyTerm energy_marker(const DeformableTemplate& tmpl, const DeformationState& state,
                         const MarkerObservationSet& observations,
                         std::span<const CameraModel> cameras);

// E_smooth: sum_j sum_{k in N(j)} gamma_jk |R_j (v_k - v_j) - (v_k - v_j) +
// t_j - t_k|^2.
EnergyTerm energy_smooth(const DeformableTemplate& tmpl, const DeformationState& state);

double total_energy(const DeformableTemplate& tmpl, const DeformationState& state,
                    const PointCloud& cloud, const MarkerObservationSet& observations,
                    std::span<const CameraModel> cameras,
                    const CorrespondenceSet& correspondences,
                    double beta, double lambda_marker, double lambda_smooth);

// --- solver --------------------------------------------------------------

enum class LmStatus {
  GradientSmall,
  StepSmall,
  CostSmall,
  IterationLimit,
  Stalled,  // no decrease up to the damping limit
};

struct FitIteration {
  int outer = 0;
  double lambda_smooth = 0.0;
  double lambda_marker = 0.0;
  double e_fit = 0.0;
  double e_marker = 0.0;
  double e_smooth = 0.0;
  double e_total = 0.0;
  int lm_iterations = 0;
  int lm_accepted = 0;
  LmStatus lm_status = LmStatus::IterationLimit;
  std::vector<double> lm_cost_trace;  // cost after each accepted step
};

struct MarkerReprojection {
  std::string marker_id;
  double rms_px = 0.0;
  int views = 0;
};

struct FitReport {
  bool converged = false;
  bool non_convergence = false;  // LM stalled with a significant gradient
  std::string status;            // "converged" | "max_outer" | "non_convergence"
  std::vector<FitIteration> iterations;
  double final_rms_reprojection_px = 0.0;
  std::vector<MarkerReprojection> per_marker_reprojection;
  double wall_time_ms = 0.0;
};

void save_fit_report(const std::filesystem::path& path, const FitReport& report,
                     bool include_timing = false);

struct FitResult {
  DeformationState state;
  FitReport report;
};

// Embedded-deformation-graph fit of the template to a point cloud and/or 2D
// marker observations via Levenberg-Marquardt with a continuation schedule on
// (lambda_smooth, lambda_marker). Throws NothingToFit when both data inputs
// are empty.
FitResult fit_template(const DeformableTemplate& tmpl, const PointCloud& cloud,
                       const MarkerObservationSet& observations,
                       std::span<const CameraModel> cameras, const FitConfig& config,
                       const DeformationState& init);

FitResult fit_template(const TemplateMesh& mesh, std::span<const MarkerBinding> bindings,
                       const PointCloud& cloud, const MarkerObservationSet& observations,
                       std::span<const CameraModel> cameras, const FitConfig& config,
                       const DeformationState& init);

FitResult fit_template(const JointChain& chain, const PointCloud& cloud,
                       const MarkerObservationSet& observations,
                       std::span<const CameraModel> cameras, const FitConfig& config,
                       const DeformationState& init);

// --- diagnostics ----------------------------------------------------------
// Residuals and the analytic Jacobian of the complete stacked system with a
// frozen correspondence set and frozen deformed-mesh normals, exactly as the
// LM inner loop sees them. Row order: point-to-vertex (3 rows per cloud
// point), point-to-face (1 row per cloud point, meshes only), marker.
// reprojection (2 rows per positively weighted observation), smoothness
// (3 rows per directed graph edge).

struct FrozenStructure {
  CorrespondenceSet correspondences;
  std::vector<Vec3> normals;  // deformed-mesh vertex normals (empty for chains)
};

FrozenStructure freeze_structure(const DeformableTemplate& tmpl,
                                 const DeformationState& state, const PointCloud& cloud);

struct ResidualWeights {
  double beta = 1.0;
  double lambda_marker = 1.0;
  double lambda_smooth = 1.0;
};

Eigen::VectorXd residual_vector(const DeformableTemplate& tmpl,
                                const DeformationState& state, const PointCloud& cloud,
                                const MarkerObservationSet& observations,
                                std::span<const CameraModel> cameras,
                                const FrozenStructure& frozen, const ResidualWeights& weights);

Eigen::SparseMatrix<double> residual_jacobian(
    const DeformableTemplate& tmpl, const DeformationState& state, const PointCloud& cloud,
    const MarkerObservationSet& observations, std::span<const CameraModel> cameras,
    const FrozenStructure& frozen, const ResidualWeights& weights);

// State <-> JSON ({rotations: [[3]...], translations: [[3]...]}).
DeformationState load_state(const std::filesystem::path& path);
void save_state(const std::filesystem::path& path, const DeformationState& state);

}  // namespace uvtrack
