#include "uvtrack/fitting.hpp"

#include <Eigen/SparseCholesky>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "json_helpers.hpp"
#include "residual_system.hpp"

namespace uvtrack {

void FitConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(lambda_smooth_init) || !positive(lambda_smooth_min) ||
      !positive(lambda_marker_init) || !positive(lambda_marker_min)) {
    fail(ErrorCode::InvalidArgument, "fit config: lambda weights must be positive");
  }
  if (lambda_smooth_init < lambda_smooth_min || lambda_marker_init < lambda_marker_min) {
    fail(ErrorCode::InvalidArgument, "fit config: lambda init must be >= min");
  }
  if (!(decay > 0.0 && decay < 1.0)) {
    fail(ErrorCode::InvalidArgument, "fit config: decay must be in (0, 1)");
  }
  if (!(beta >= 0.0) || max_outer < 1 || max_inner_lm < 1 || !positive(energy_rel_tol)) {
    fail(ErrorCode::InvalidArgument, "fit config: bad beta/iteration/tolerance settings");
  }
}

namespace {

using detail::ActiveObservation;
using detail::SystemRequest;

constexpr double kDampingInit = 1e-3;
constexpr double kDampingMax = 1e12;

void apply_step(DeformationState& state, const Eigen::VectorXd& delta) {
  for (std::size_t i = 0; i < state.size(); ++i) {
    state.rotations[i] += delta.segment<3>(6 * i);
    state.translations[i] += delta.segment<3>(6 * i + 3);
  }
}

double state_norm(const DeformationState& state) {
  double sq = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    sq += state.rotations[i].squaredNorm() + state.translations[i].squaredNorm();
  }
  return std::sqrt(sq);
}

struct LmOutcome {
  double cost = 0.0;
  double e_fit = 0.0, e_marker = 0.0, e_smooth = 0.0;
  int iterations = 0;
  int accepted = 0;
  LmStatus status = LmStatus::IterationLimit;
  std::vector<double> trace;
  double gradient_inf = 0.0;
};

// One inner Levenberg-Marquardt pass at fixed lambdas with frozen
// correspondences and normals. Multiplicative damping: x10 on reject,
// x0.1 on accept.
LmOutcome run_lm(const DeformableTemplate& tmpl, DeformationState& state,
                 const PointCloud& cloud, std::span<const ActiveObservation> active,
                 std::span<const CameraModel> cameras, const FrozenStructure& frozen,
                 const ResidualWeights& weights, int max_iterations, double rel_tol) {
  const int dim = 6 * static_cast<int>(tmpl.rest_vertices.size());

  Eigen::VectorXd residuals;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::SparseMatrix<double> jac;
  int rows = 0;

  auto assemble = [&](const DeformationState& s) {
    triplets.clear();
    SystemRequest req;
    req.residuals = &residuals;
    req.jacobian = &triplets;
    rows = detail::build_system(tmpl, s, cloud, active, cameras, frozen, weights, req);
    jac.resize(rows, dim);
    jac.setFromTriplets(triplets.begin(), triplets.end());
  };

  // Trial-cost evaluation; a step that pushes a marker behind a camera is
  // treated as infinitely bad rather than aborting the fit.
  Eigen::VectorXd trial;
  auto trial_cost = [&](const DeformationState& s) -> double {
    SystemRequest req;
    req.residuals = &trial;
    try {
      detail::build_system(tmpl, s, cloud, active, cameras, frozen, weights, req);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BehindCamera) return std::numeric_limits<double>::infinity();
      throw;
    }
    return trial.squaredNorm();
  };

  assemble(state);
  double cost = residuals.squaredNorm();
  Eigen::SparseMatrix<double> hessian = jac.transpose() * jac;
  Eigen::VectorXd gradient = jac.transpose() * residuals;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;

  LmOutcome out;
  out.trace.push_back(cost);
  double damping = kDampingInit;

  while (out.iterations < max_iterations) {
    ++out.iterations;
    out.gradient_inf = gradient.lpNorm<Eigen::Infinity>();
    if (out.gradient_inf <= 1e-12 * (1.0 + cost)) {
      out.status = LmStatus::GradientSmall;
      break;
    }

    const Eigen::VectorXd diag = hessian.diagonal().cwiseMax(1e-12);
    const Eigen::SparseMatrix<double> damped =
        hessian + Eigen::SparseMatrix<double>((damping * diag).asDiagonal());

    if (!analyzed) {
      solver.analyzePattern(damped);
      analyzed = true;
    }
    solver.factorize(damped);
    bool reject = solver.info() != Eigen::Success;
    Eigen::VectorXd delta;
    if (!reject) {
      delta = solver.solve(-gradient);
      reject = !delta.allFinite();
    }
    if (!reject && delta.norm() <= 1e-14 * (1.0 + state_norm(state))) {
      out.status = LmStatus::StepSmall;
      break;
    }
    double candidate_cost = std::numeric_limits<double>::infinity();
    DeformationState candidate;
    if (!reject) {
      candidate = state;
      apply_step(candidate, delta);
      candidate_cost = trial_cost(candidate);
      reject = !(candidate_cost < cost);
    }
    if (reject) {
      damping *= 10.0;
      if (damping > kDampingMax) {
        out.status = LmStatus::Stalled;
        break;
      }
      continue;
    }
    const double drop = cost - candidate_cost;
    state = std::move(candidate);
    cost = candidate_cost;
    ++out.accepted;
    out.trace.push_back(cost);
    assemble(state);
    hessian = jac.transpose() * jac;
    gradient = jac.transpose() * residuals;
    damping = std::max(damping * 0.1, 1e-14);
    if (drop <= 0.1 * rel_tol * (cost + 1e-16)) {
      out.status = LmStatus::CostSmall;
      break;
    }
  }
  out.gradient_inf = gradient.lpNorm<Eigen::Infinity>();

  // Split the final cost into its components from the residual layout.
  const int m = static_cast<int>(cloud.points.size());
  const int fit_rows = tmpl.faces.empty() ? 3 * m : 4 * m;
  const int marker_rows = 2 * static_cast<int>(active.size());
  const int smooth_rows = rows - fit_rows - marker_rows;
  out.cost = cost;
  out.e_fit = residuals.segment(0, fit_rows).squaredNorm();
  out.e_marker = residuals.segment(fit_rows, marker_rows).squaredNorm() / weights.lambda_marker;
  out.e_smooth = residuals.segment(fit_rows + marker_rows, smooth_rows).squaredNorm() /
                 weights.lambda_smooth;
  return out;
}

const char* lm_status_name(LmStatus status) {
  switch (status) {
    case LmStatus::GradientSmall: return "gradient_small";
    case LmStatus::StepSmall: return "step_small";
    case LmStatus::CostSmall: return "cost_small";
    case LmStatus::IterationLimit: return "iteration_limit";
    case LmStatus::Stalled: return "stalled";
  }
  return "unknown";
}

}  // namespace

FitResult fit_template(const DeformableTemplate& tmpl, const PointCloud& cloud,
                       const MarkerObservationSet& observations,
                       std::span<const CameraModel> cameras, const FitConfig& config,
                       const DeformationState& init) {
  config.validate();
  if (cloud.points.empty() && observations.empty()) {
    fail(ErrorCode::NothingToFit, "fit_template: both cloud and observations are empty");
  }
  if (init.size() != tmpl.rest_vertices.size()) {
    fail(ErrorCode::InvalidArgument, "fit_template: init state size mismatch");
  }
  const auto start = std::chrono::steady_clock::now();

  const auto active = detail::resolve_observations(tmpl, observations, cameras);

  FitResult result;
  result.state = init;
  double lambda_smooth = config.lambda_smooth_init;
  double lambda_marker = config.lambda_marker_init;
  double prev_total = std::numeric_limits<double>::quiet_NaN();
  bool last_stalled_hard = false;

  for (int outer = 0; outer < config.max_outer; ++outer) {
    const FrozenStructure frozen = freeze_structure(tmpl, result.state, cloud);
    ResidualWeights weights{config.beta, lambda_marker, lambda_smooth};
    LmOutcome lm = run_lm(tmpl, result.state, cloud, active, cameras, frozen, weights,
                          config.max_inner_lm, config.energy_rel_tol);

    FitIteration it;
    it.outer = outer;
    it.lambda_smooth = lambda_smooth;
    it.lambda_marker = lambda_marker;
    it.e_fit = lm.e_fit;
    it.e_marker = lm.e_marker;
    it.e_smooth = lm.e_smooth;
    it.e_total = lm.cost;
    it.lm_iterations = lm.iterations;
    it.lm_accepted = lm.accepted;
    it.lm_status = lm.status;
    it.lm_cost_trace = lm.trace;
    result.report.iterations.push_back(std::move(it));

    last_stalled_hard = lm.status == LmStatus::Stalled &&
                        lm.gradient_inf > 1e-8 * (1.0 + lm.cost) && lm.cost > 1e-12;

    const bool at_min =
        lambda_smooth <= config.lambda_smooth_min * (1.0 + 1e-12) &&
        lambda_marker <= config.lambda_marker_min * (1.0 + 1e-12);
    if (std::isfinite(prev_total)) {
      const double rel = std::abs(prev_total - lm.cost) / std::max(prev_total, 1e-12);
      if (rel < config.energy_rel_tol && (at_min || lm.cost < 1e-12)) {
        result.report.converged = true;
        break;
      }
    }
    prev_total = lm.cost;
    lambda_smooth = std::max(lambda_smooth * config.decay, config.lambda_smooth_min);
    lambda_marker = std::max(lambda_marker * config.decay, config.lambda_marker_min);
  }

  result.report.non_convergence = !result.report.converged && last_stalled_hard;
  result.report.status = result.report.converged ? "converged"
                         : result.report.non_convergence ? "non_convergence"
                                                         : "max_outer";

  // Final per-marker reprojection statistics over the observed views.
  const auto deformed = apply_state(tmpl.rest_vertices, result.state);
  std::vector<double> sq_sum(tmpl.markers.size(), 0.0);
  std::vector<int> views(tmpl.markers.size(), 0);
  double total_sq = 0.0;
  int total_views = 0;
  for (const auto& act : active) {
    const Vec3 x = attachment_position(deformed, tmpl.markers[act.attachment_index]);
    try {
      const Pixel2 px = project(cameras[act.camera_index], x);
      const double sq = (px - act.obs->pixel).squaredNorm();
      sq_sum[act.attachment_index] += sq;
      views[act.attachment_index] += 1;
      total_sq += sq;
      total_views += 1;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BehindCamera) throw;
    }
  }
  for (std::size_t i = 0; i < tmpl.markers.size(); ++i) {
    if (views[i] == 0) continue;
    result.report.per_marker_reprojection.push_back(
        {tmpl.markers[i].marker_id, std::sqrt(sq_sum[i] / views[i]), views[i]});
  }
  result.report.final_rms_reprojection_px =
      total_views > 0 ? std::sqrt(total_sq / total_views) : 0.0;

  result.report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

FitResult fit_template(const TemplateMesh& mesh, std::span<const MarkerBinding> bindings,
                       const PointCloud& cloud, const MarkerObservationSet& observations,
                       std::span<const CameraModel> cameras, const FitConfig& config,
                       const DeformationState& init) {
  return fit_template(make_deformable(mesh, bindings), cloud, observations, cameras,
                      config, init);
}

FitResult fit_template(const JointChain& chain, const PointCloud& cloud,
                       const MarkerObservationSet& observations,
                       std::span<const CameraModel> cameras, const FitConfig& config,
                       const DeformationState& init) {
  return fit_template(make_deformable(chain), cloud, observations, cameras, config, init);
}

// --- JSON I/O --------------------------------------------------------------

namespace detail {

using nlohmann::json;

json vec3_json(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    fail(ErrorCode::ParseError, "expected a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json state_json(const DeformationState& state) {
  json rotations = json::array(), translations = json::array();
  for (const auto& r : state.rotations) rotations.push_back(vec3_json(r));
  for (const auto& t : state.translations) translations.push_back(vec3_json(t));
  return json{{"rotations", rotations}, {"translations", translations}};
}

DeformationState state_from_json(const json& j) {
  DeformationState state;
  for (const auto& r : j.at("rotations")) state.rotations.push_back(vec3_from_json(r));
  for (const auto& t : j.at("translations")) state.translations.push_back(vec3_from_json(t));
  if (state.rotations.size() != state.translations.size()) {
    fail(ErrorCode::ParseError, "state: rotation/translation count mismatch");
  }
  return state;
}

namespace {

LmStatus lm_status_from_name(const std::string& name) {
  if (name == "gradient_small") return LmStatus::GradientSmall;
  if (name == "step_small") return LmStatus::StepSmall;
  if (name == "cost_small") return LmStatus::CostSmall;
  if (name == "stalled") return LmStatus::Stalled;
  return LmStatus::IterationLimit;
}

}  // namespace

json fit_report_json(const FitReport& report, bool include_timing) {
  json iterations = json::array();
  for (const auto& it : report.iterations) {
    iterations.push_back({{"outer", it.outer},
                          {"lambda_smooth", it.lambda_smooth},
                          {"lambda_marker", it.lambda_marker},
                          {"e_fit", it.e_fit},
                          {"e_marker", it.e_marker},
                          {"e_smooth", it.e_smooth},
                          {"e_total", it.e_total},
                          {"lm_iterations", it.lm_iterations},
                          {"lm_accepted", it.lm_accepted},
                          {"lm_status", lm_status_name(it.lm_status)},
                          {"lm_cost_trace", it.lm_cost_trace}});
  }
  json per_marker = json::array();
  for (const auto& m : report.per_marker_reprojection) {
    per_marker.push_back(
        {{"marker_id", m.marker_id}, {"rms_px", m.rms_px}, {"views", m.views}});
  }
  json j{{"converged", report.converged},
         {"non_convergence", report.non_convergence},
         {"status", report.status},
         {"iterations", iterations},
         {"final_rms_reprojection_px", report.final_rms_reprojection_px},
         {"per_marker_reprojection", per_marker}};
  if (include_timing) j["wall_time_ms"] = report.wall_time_ms;
  return j;
}

FitReport fit_report_from_json(const json& j) {
  FitReport report;
  report.converged = j.value("converged", false);
  report.non_convergence = j.value("non_convergence", false);
  report.status = j.value("status", std::string{});
  report.final_rms_reprojection_px = j.value("final_rms_reprojection_px", 0.0);
  report.wall_time_ms = j.value("wall_time_ms", 0.0);
  for (const auto& ij : j.value("iterations", json::array())) {
    FitIteration it;
    it.outer = ij.value("outer", 0);
    it.lambda_smooth = ij.value("lambda_smooth", 0.0);
    it.lambda_marker = ij.value("lambda_marker", 0.0);
    it.e_fit = ij.value("e_fit", 0.0);
    it.e_marker = ij.value("e_marker", 0.0);
    it.e_smooth = ij.value("e_smooth", 0.0);
    it.e_total = ij.value("e_total", 0.0);
    it.lm_iterations = ij.value("lm_iterations", 0);
    it.lm_accepted = ij.value("lm_accepted", 0);
    it.lm_status = lm_status_from_name(ij.value("lm_status", std::string{}));
    it.lm_cost_trace = ij.value("lm_cost_trace", std::vector<double>{});
    report.iterations.push_back(std::move(it));
  }
  for (const auto& mj : j.value("per_marker_reprojection", json::array())) {
    report.per_marker_reprojection.push_back({mj.at("marker_id").get<std::string>(),
                                              mj.value("rms_px", 0.0),
                                              mj.value("views", 0)});
  }
  return report;
}

}  // namespace detail

namespace {
using detail::load_json_file;
using detail::write_json_file;
using nlohmann::json;
}  // namespace

FitConfig load_fit_config(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  FitConfig c;
  c.lambda_smooth_init = j.value("lambda_smooth_init", c.lambda_smooth_init);
  c.lambda_smooth_min = j.value("lambda_smooth_min", c.lambda_smooth_min);
  c.lambda_marker_init = j.value("lambda_marker_init", c.lambda_marker_init);
  c.lambda_marker_min = j.value("lambda_marker_min", c.lambda_marker_min);
  c.decay = j.value("decay", c.decay);
  c.beta = j.value("beta", c.beta);
  c.max_outer = j.value("max_outer", c.max_outer);
  c.max_inner_lm = j.value("max_inner_lm", c.max_inner_lm);
  c.energy_rel_tol = j.value("energy_rel_tol", c.energy_rel_tol);
  c.validate();
  return c;
}

void save_fit_config(const std::filesystem::path& path, const FitConfig& c) {
  write_json_file(path, json{{"lambda_smooth_init", c.lambda_smooth_init},
                             {"lambda_smooth_min", c.lambda_smooth_min},
                             {"lambda_marker_init", c.lambda_marker_init},
                             {"lambda_marker_min", c.lambda_marker_min},
                             {"decay", c.decay},
                             {"beta", c.beta},
                             {"max_outer", c.max_outer},
                             {"max_inner_lm", c.max_inner_lm},
                             {"energy_rel_tol", c.energy_rel_tol}});
}

void save_fit_report(const std::filesystem::path& path, const FitReport& report,
                     bool include_timing) {
  // Wall time is only written on request so that identical runs produce
  // byte-identical reports.
  write_json_file(path, detail::fit_report_json(report, include_timing));
}

DeformationState load_state(const std::filesystem::path& path) {
  return detail::state_from_json(load_json_file(path));
}

void save_state(const std::filesystem::path& path, const DeformationState& state) {
  write_json_file(path, detail::state_json(state));
}

}  // namespace uvtrack
