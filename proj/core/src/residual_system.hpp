#pragma once

// Internal residual-system builder shared by the energy operations, the
// diagnostic surface and the LM solver. Not installed.

#include <Eigen/SparseCore>
#include <span>
#include <vector>

#include "uvtrack/fitting.hpp"

namespace uvtrack::detail {

enum Section : unsigned {
  kSectionFit = 1u,
  kSectionMarker = 2u,
  kSectionSmooth = 4u,
  kSectionAll = 7u,
};

struct ActiveObservation {
  int camera_index = -1;
  int attachment_index = -1;
  const MarkerObservation* obs = nullptr;
};

// Filters observations with positive weight and resolves camera/marker ids.
// Throws InvalidArgument for unknown ids on positively weighted observations.
std::vector<ActiveObservation> resolve_observations(
    const DeformableTemplate& tmpl, const MarkerObservationSet& observations,
    std::span<const CameraModel> cameras);

struct SystemRequest {
  unsigned sections = kSectionAll;
  Eigen::VectorXd* residuals = nullptr;
  std::vector<Eigen::Triplet<double>>* jacobian = nullptr;  // rows x 6N
};

// Emits the stacked residual system with frozen correspondences and normals.
// Row order: point-to-vertex, point-to-face (meshes only), marker
// reprojection, smoothness. Returns the number of rows.
int build_system(const DeformableTemplate& tmpl, const DeformationState& state,
                 const PointCloud& cloud, std::span<const ActiveObservation> active,
                 std::span<const CameraModel> cameras, const FrozenStructure& frozen,
                 const ResidualWeights& weights, const SystemRequest& req);

}  // namespace uvtrack::detail
