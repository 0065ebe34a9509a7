// End-to-end checks of the command-line surface: dataset layout, fit report
// contents, curve CSV shape, raster + detect round trip, and error/exit-code
// conventions. argv[1] is the path to the uvtrack binary.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "uvtrack/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
int g_failures = 0;

void expect(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "ok  " : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

int run(const std::string& args, const fs::path& stderr_file = {}) {
  std::string cmd = "\"" + g_cli + "\" " + args + " > /dev/null";
  cmd += stderr_file.empty() ? " 2> /dev/null" : " 2> \"" + stderr_file.string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json parse_file(const fs::path& p) {
  std::ifstream in(p);
  json j;
  in >> j;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_examples <path-to-uvtrack>\n";
    return 2;
  }
  g_cli = argv[1];
  const fs::path work = fs::temp_directory_path() / "uvtrack_cli_examples";
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path data = work / "d";

  // synth: dataset directory with cameras.json, frames/*.json, gt/*.jsonl
  expect(run("synth --scene grid13x15 --frames 3 --delay-ms 2 --seed 7 --noise-px 0 "
             "--raster-cams 1 --out \"" + data.string() + "\"") == 0,
         "synth exits 0");
  expect(fs::exists(data / "cameras.json"), "cameras.json written");
  expect(fs::exists(data / "scene.json"), "scene.json written");
  expect(fs::exists(data / "template.obj") && fs::exists(data / "bindings.json"),
         "template files written");
  expect(fs::exists(data / "frames/frame_00000.json") &&
             fs::exists(data / "frames/frame_00002.json"),
         "per-frame files written");
  expect(fs::exists(data / "gt/sequence.jsonl"), "ground-truth JSONL written");
  expect(fs::exists(data / "images/uv00_00000.png"), "raster images written");

  // fit on frame 0 of the zero-noise dataset. The point-to-vertex data term
  // has a sampling floor and a small boundary pull, so the total energy does
  // not vanish; the recovered markers must still match the ground truth to
  // sub-millimeter accuracy and reproject within a pixel.
  expect(run("fit --dataset \"" + data.string() + "\" --frame 0 --out \"" +
             (work / "fit0").string() + "\"") == 0,
         "fit exits 0");
  const json report = parse_file(work / "fit0/report.json");
  expect(report.at("converged").get<bool>(), "fit report converged");
  expect(report.at("final_rms_reprojection_px").get<double>() < 1.0,
         "zero-noise reprojection RMS below 1 px");
  expect(!report.contains("wall_time_ms"), "report omits wall time by default");
  expect(fs::exists(work / "fit0/state.json"), "state.json written");
  {
    const uvtrack::Dataset ds = uvtrack::load_dataset(data);
    const uvtrack::DeformationState state = uvtrack::load_state(work / "fit0/state.json");
    const auto deformed = uvtrack::apply_state(ds.scene.deformable.rest_vertices, state);
    const auto gt = uvtrack::load_fitted_sequence(data / "gt/sequence.jsonl");
    double sq = 0.0;
    for (std::size_t i = 0; i < ds.scene.deformable.markers.size(); ++i) {
      sq += (uvtrack::attachment_position(deformed, ds.scene.deformable.markers[i]) -
             gt.frames[0].marker_points_3d[i])
                .squaredNorm();
    }
    const double rms = std::sqrt(sq / ds.scene.deformable.markers.size());
    expect(rms < 0.5, "zero-noise fitted markers within 0.5 mm RMS of ground truth");
  }

  // curve: one row per (delay, sigma)
  expect(run("curve --dataset \"" + data.string() + "\" --delays 1,4 --sigmas 0..15 "
             "--out \"" + (work / "curve.csv").string() + "\"") == 0,
         "curve exits 0");
  {
    std::ifstream in(work / "curve.csv");
    std::string line;
    std::getline(in, line);
    expect(line == "delay_ms,sigma_ms,mean_point_to_ray_mm", "curve CSV header");
    int rows = 0;
    while (std::getline(in, line)) {
      if (!line.empty()) ++rows;
    }
    expect(rows == 2 * 16, "curve CSV has one row per (delay, sigma)");
  }

  // detect on the rasterized images: every grid marker of every frame
  expect(run("detect --images \"" + (data / "images").string() +
             "\" --profile uv_blue --out \"" + (work / "det.json").string() + "\"") == 0,
         "detect exits 0");
  const auto detections = uvtrack::load_detections(work / "det.json");
  expect(detections.size() >= 3 * 150,
         "detect finds the bulk of the rasterized markers (got " +
             std::to_string(detections.size()) + ")");
  bool ids_ok = !detections.empty();
  for (const auto& d : detections) {
    ids_ok = ids_ok && d.camera_id == "uv00" && d.dye == "uv_blue" && d.pixel_count >= 4;
  }
  expect(ids_ok, "detections carry camera id, dye and blob size");

  // error conventions: usage error -> 2, domain error -> 1 + error JSON
  expect(run("frobnicate") == 2, "unknown subcommand exits 2");
  expect(run("fit --frame 0 --out x") == 2, "missing required options exits 2");
  const fs::path err_file = work / "err.json";
  expect(run("fit --dataset \"" + (work / "missing").string() + "\" --frame 0 --out \"" +
             (work / "fitx").string() + "\"", err_file) == 1,
         "bad dataset exits 1");
  {
    std::ifstream in(err_file);
    json err;
    bool parsed = true;
    try {
      in >> err;
    } catch (...) {
      parsed = false;
    }
    expect(parsed && err.contains("error") && err.contains("message"),
           "failure emits machine-readable error JSON");
  }

  std::printf("%s\n", g_failures == 0 ? "ALL OK" : "FAILURES PRESENT");
  return g_failures == 0 ? 0 : 1;
}
