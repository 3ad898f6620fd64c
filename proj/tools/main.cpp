#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include "fusionkit/config.hpp"
#include "fusionkit/dataio.hpp"
#include "fusionkit/depthopt.hpp"
#include "fusionkit/eval.hpp"
#include "fusionkit/gdc.hpp"
#include "fusionkit/geometry.hpp"
#include "fusionkit/losses.hpp"
#include "fusionkit/pdr.hpp"
#include "fusionkit/scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fusionkit;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

void emit(const json& record) { std::cout << record.dump() << "\n"; }

std::string frame_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d%s", stem, index, ext);
  return buf;
}

std::pair<int, int> parse_size(const std::string& text) {
  const size_t x = text.find('x');
  if (x == std::string::npos) {
    throw std::invalid_argument("--size expects WxH, e.g. 640x192, got '" + text + "'");
  }
  const int w = std::stoi(text.substr(0, x));
  const int h = std::stoi(text.substr(x + 1));
  if (w <= 0 || h <= 0) throw std::invalid_argument("--size must be positive");
  return {w, h};
}

struct CommonArgs {
  std::string config_path;
  bool dump_config = false;
  int jobs = 1;
};

RunConfig load_run_config(const CommonArgs& common) {
  RunConfig config;
  std::string path = common.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("FUSIONKIT_CONFIG")) path = env;
  }
  if (!path.empty()) config.parse_file(path);
  config.validate();
  return config;
}

// ---------------------------------------------------------------- pdr ----

struct PdrArgs {
  std::string points_path;
  std::string calib_path;
  std::string size_text = "640x192";
  std::optional<double> radius;
  std::optional<int> beams;
  std::string out_prefix;
};

int run_pdr(const PdrArgs& args, const RunConfig& config) {
  const auto [width, height] = parse_size(args.size_text);
  const double radius =
      args.radius ? *args.radius : config.effective_pdr_radius(width);
  if (!(radius >= 1.0)) {
    throw std::invalid_argument("--radius must be >= 1 pixel");
  }

  const Calibration calib = load_calib(args.calib_path);
  PointCloud cloud = load_velodyne_bin(args.points_path);
  cloud = transform_cloud(cloud, calib.lidar_to_camera);
  if (args.beams) cloud = subsample_beams(cloud, *args.beams);

  const PDR pdr = generate_pdr(cloud, calib.intrinsics, width, height, radius);
  const double coverage = coverage_fraction(cloud, calib.intrinsics, width, height);

  const std::string depth_path = args.out_prefix + "_depth.png";
  const std::string confidence_path = args.out_prefix + "_confidence.png";
  save_depth_png(pdr.depth, depth_path);
  save_confidence_png(pdr.confidence, confidence_path);

  emit({{"cmd", "pdr"},
        {"points", cloud.size()},
        {"radius", radius},
        {"coverage_fraction", coverage},
        {"out_depth", depth_path},
        {"out_confidence", confidence_path}});
  std::cerr << "pdr: " << cloud.size() << " points, coverage "
            << coverage * 100.0 << "% of " << width << "x" << height << "\n";
  return 0;
}

// ------------------------------------------------------------- refine ----

struct RefineArgs {
  std::string depth_path;
  std::string points_path;
  std::string calib_path;
  std::optional<int> gdc_k;
  std::optional<int> gdc_stride;
  std::optional<double> gdc_anchor_strength;
  std::string out_path;
  bool time = false;
};

int run_refine(const RefineArgs& args, const RunConfig& config) {
  GdcOptions options = config.gdc;
  if (args.gdc_k) options.k = *args.gdc_k;
  if (args.gdc_stride) options.stride = *args.gdc_stride;
  if (args.gdc_anchor_strength) options.anchor_strength = *args.gdc_anchor_strength;

  const Calibration calib = load_calib(args.calib_path);
  const DepthMap depth = load_depth_png(args.depth_path);
  PointCloud cloud = load_velodyne_bin(args.points_path);
  cloud = transform_cloud(cloud, calib.lidar_to_camera);

  const auto start = std::chrono::steady_clock::now();
  const DepthGraph graph =
      build_graph(depth, calib.intrinsics, cloud, options.k, options.stride,
                  options.ridge_scale);
  const GdcResult result = solve_correction(graph, depth, options);
  const auto stop = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(stop - start).count();

  save_depth_png(result.corrected, args.out_path);

  json record{{"cmd", "refine"},
              {"nodes", graph.nodes.size()},
              {"anchors", graph.anchor_nodes.size()},
              {"solver_iterations", result.solver_iterations},
              {"solver_residual", result.solver_residual},
              {"out", args.out_path}};
  if (args.time) {
    record["ms"] = ms;
    record["fps"] = ms > 0.0 ? 1000.0 / ms : 0.0;
    std::cerr << "refine: " << ms << " ms (" << (ms > 0.0 ? 1000.0 / ms : 0.0)
              << " FPS) over " << graph.nodes.size() << " nodes\n";
  }
  emit(record);
  return 0;
}

// ----------------------------------------------------------- optimize ----

struct OptimizeArgs {
  std::string scene_dir;
  int target = 1;
  std::optional<int> iterations;
  std::optional<double> step;
  std::optional<std::string> init_depth_path;
  std::optional<double> init_const;
  std::optional<std::string> pdr_prefix;
  std::optional<std::string> enhanced_path;
  std::optional<std::string> gt_path;
  bool optimize_poses = false;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::string out_path;
};

int run_optimize(const OptimizeArgs& args, const RunConfig& config) {
  OptimizeOptions options;
  options.loss = config.loss;
  options.iterations = args.iterations.value_or(config.opt_iterations);
  options.step = args.step.value_or(config.opt_step);
  options.pose_step = config.opt_pose_step;
  options.d_min = config.opt_d_min;
  options.d_max = config.opt_d_max;
  options.optimize_poses = args.optimize_poses;
  if (args.alpha) options.loss.alpha = *args.alpha;
  if (args.beta) options.loss.beta = *args.beta;

  const fs::path dir(args.scene_dir);
  const Calibration calib = load_calib(dir / "calib.txt");
  const std::vector<Pose> world_from = load_poses_txt(dir / "poses.txt");
  const int t = args.target;
  if (t - 1 < 0 || t + 1 >= static_cast<int>(world_from.size())) {
    throw std::invalid_argument("--target needs frames target-1 and target+1");
  }
  const Image prev = load_image_png(dir / frame_name("image", t - 1, ".png"));
  const Image target = load_image_png(dir / frame_name("image", t, ".png"));
  const Image next = load_image_png(dir / frame_name("image", t + 1, ".png"));

  const Pose to_prev = relative_pose(world_from[t], world_from[t - 1]);
  const Pose to_next = relative_pose(world_from[t], world_from[t + 1]);

  std::optional<PDR> pdr;
  if (args.pdr_prefix) {
    pdr.emplace();
    pdr->depth = load_depth_png(*args.pdr_prefix + "_depth.png");
    pdr->confidence = load_confidence_png(*args.pdr_prefix + "_confidence.png");
  }
  std::optional<DepthMap> enhanced;
  if (args.enhanced_path) enhanced = load_depth_png(*args.enhanced_path);
  std::optional<DepthMap> initial;
  if (args.init_depth_path) {
    initial = load_depth_png(*args.init_depth_path);
  } else if (args.init_const) {
    initial = DepthMap(target.width(), target.height(), *args.init_const);
  }

  std::optional<DepthMap> gt;
  if (args.gt_path) gt = load_depth_png(*args.gt_path);

  json record{{"cmd", "optimize"}, {"iterations", options.iterations}};
  if (gt && initial) {
    record["initial_abs_rel"] = depth_metrics(*initial, *gt, config.eval_cap).abs_rel;
  }

  const OptimizeResult result = optimize_depth(
      prev, target, next, to_prev, to_next, calib.intrinsics, options,
      pdr ? &*pdr : nullptr, enhanced ? &*enhanced : nullptr,
      initial ? &*initial : nullptr);

  save_depth_png(result.depth, args.out_path);
  record["out"] = args.out_path;
  record["final_loss"] = result.state.history.back().total;
  record["masked_fraction"] = result.state.history.back().masked_fraction;
  if (gt) {
    record["final_abs_rel"] = depth_metrics(result.depth, *gt, config.eval_cap).abs_rel;
  }
  emit(record);
  std::cerr << "optimize: " << options.iterations << " iterations, final loss "
            << result.state.history.back().total << "\n";
  return 0;
}

// --------------------------------------------------------------- eval ----

struct EvalArgs {
  std::vector<std::string> pred_paths;
  std::vector<std::string> gt_paths;
  std::optional<double> cap;
  std::optional<std::string> crop;
  bool csv_header = false;
};

std::string csv_line(const std::string& name, const MetricReport& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld",
                name.c_str(), m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1,
                m.delta2, m.delta3, m.rmse_mm, m.irmse, m.imae,
                static_cast<long long>(m.n_valid));
  return buf;
}

int run_eval(const EvalArgs& args, const RunConfig& config, int jobs) {
  if (args.pred_paths.size() != args.gt_paths.size() || args.pred_paths.empty()) {
    throw std::invalid_argument("--pred and --gt need the same nonzero count");
  }
  const double cap = args.cap.value_or(config.eval_cap);
  const std::string crop_kind = args.crop.value_or(config.eval_crop);
  if (crop_kind != "garg" && crop_kind != "none") {
    throw std::invalid_argument("--crop must be 'garg' or 'none'");
  }

  const size_t n = args.pred_paths.size();
  std::vector<MetricReport> reports(n);
  std::vector<std::exception_ptr> failures(n);

  auto worker = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < n; i += stride) {
      try {
        const DepthMap pred = load_depth_png(args.pred_paths[i]);
        const DepthMap gt = load_depth_png(args.gt_paths[i]);
        std::optional<CropRect> crop;
        if (crop_kind == "garg") crop = eigen_eval_crop(gt.width(), gt.height());
        reports[i] = depth_metrics(pred, gt, cap, crop);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };

  const size_t workers = std::max<size_t>(1, std::min<size_t>(jobs, n));
  if (workers == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker, w, workers);
    for (auto& thread : pool) thread.join();
  }
  for (size_t i = 0; i < n; ++i) {
    if (failures[i]) std::rethrow_exception(failures[i]);
  }

  if (args.csv_header) {
    std::cout << "file,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,"
                 "rmse_mm,irmse,imae,n_valid\n";
  }
  std::cerr << "          file   abs_rel    sq_rel      rmse  rmse_log    "
               "delta1    delta2    delta3\n";
  for (size_t i = 0; i < n; ++i) {
    const MetricReport& m = reports[i];
    std::cout << csv_line(args.pred_paths[i], m) << "\n";
    char row[256];
    std::snprintf(row, sizeof(row),
                  "%14s %9.4f %9.4f %9.3f %9.4f %9.4f %9.4f %9.4f\n",
                  fs::path(args.pred_paths[i]).filename().c_str(), m.abs_rel,
                  m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3);
    std::cerr << row;
  }
  return 0;
}

// ------------------------------------------------------------- export ----

struct ExportArgs {
  std::string depth_path;
  std::string calib_path;
  std::optional<std::string> image_path;
  std::string format = "ply";
  std::string out_path;
};

int run_export(const ExportArgs& args) {
  if (args.format != "ply" && args.format != "bin") {
    throw std::invalid_argument("--format must be 'ply' or 'bin'");
  }
  const Calibration calib = load_calib(args.calib_path);
  const DepthMap depth = load_depth_png(args.depth_path);
  std::optional<Image> image;
  if (args.image_path) image = load_image_png(*args.image_path);

  export_pseudolidar(depth, image ? &*image : nullptr, calib.intrinsics, args.out_path,
                     args.format == "ply" ? PseudoLidarFormat::kPlyAscii
                                          : PseudoLidarFormat::kVelodyneBin);
  size_t count = 0;
  for (size_t i = 0; i < depth.size(); ++i) count += depth[i] > 0.0;
  emit({{"cmd", "export"}, {"points", count}, {"out", args.out_path}});
  return 0;
}

// -------------------------------------------------------------- synth ----

struct SynthArgs {
  std::string layout = "boxes";
  std::string texture = "noise";
  int frames = 3;
  std::optional<uint64_t> seed;
  std::string size_text = "64x64";
  double baseline = 0.15;
  std::string out_dir;
};

int run_synth(const SynthArgs& args, const RunConfig& config) {
  SceneLayout layout;
  if (args.layout == "fronto") {
    layout = SceneLayout::kFrontoPlane;
  } else if (args.layout == "slanted") {
    layout = SceneLayout::kSlantedPlane;
  } else if (args.layout == "boxes") {
    layout = SceneLayout::kTwoBoxes;
  } else {
    throw std::invalid_argument("--layout must be fronto|slanted|boxes");
  }
  if (args.frames < 3) throw std::invalid_argument("--frames must be >= 3");

  const auto [width, height] = parse_size(args.size_text);
  SceneSpec spec =
      make_default_scene(layout, width, height, args.frames, args.seed.value_or(config.seed));
  if (args.texture == "affine") {
    spec.texture = TextureKind::kAffineRamp;
  } else if (args.texture != "noise") {
    throw std::invalid_argument("--texture must be noise|affine");
  }
  for (int i = 0; i < args.frames; ++i) {
    spec.camera_to_world[i].translation.x() =
        (i - 0.5 * (args.frames - 1)) * args.baseline;
  }

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);

  Calibration calib;
  calib.intrinsics = spec.intrinsics;
  calib.lidar_to_camera = lidar_axes_to_camera();
  save_calib(calib, dir / "calib.txt");
  save_poses_txt(spec.camera_to_world, dir / "poses.txt");

  const Pose camera_to_lidar = calib.lidar_to_camera.inverse();
  for (int i = 0; i < args.frames; ++i) {
    const RenderedFrame frame = render_scene(spec, i);
    save_image_png(frame.image, dir / frame_name("image", i, ".png"));
    save_depth_png(frame.depth, dir / frame_name("depth_gt", i, ".png"));
    save_velodyne_bin(transform_cloud(frame.lidar, camera_to_lidar),
                      dir / frame_name("lidar", i, ".bin"));
  }

  json meta{{"layout", args.layout},  {"texture", args.texture},
            {"seed", spec.seed},      {"width", width},
            {"height", height},       {"frames", args.frames},
            {"baseline", args.baseline}};
  std::ofstream meta_file(dir / "scene.json");
  meta_file << meta.dump(2) << "\n";

  emit({{"cmd", "synth"}, {"out_dir", args.out_dir}, {"frames", args.frames},
        {"seed", spec.seed}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusionkit: sparse-LiDAR-guided depth toolkit"};
  app.require_subcommand(0, 1);

  CommonArgs common;
  app.add_option("--config", common.config_path,
                 "run configuration file (fallback: $FUSIONKIT_CONFIG)");
  app.add_flag("--dump-config", common.dump_config, "print the effective configuration");
  app.add_option("--jobs", common.jobs, "parallel workers over input files")
      ->check(CLI::PositiveNumber);

  PdrArgs pdr_args;
  CLI::App* pdr_cmd = app.add_subcommand("pdr", "project sparse points into a PDR");
  pdr_cmd->add_option("--points", pdr_args.points_path, "velodyne .bin")->required();
  pdr_cmd->add_option("--calib", pdr_args.calib_path, "calib .txt")->required();
  pdr_cmd->add_option("--size", pdr_args.size_text, "raster WxH (default 640x192)");
  pdr_cmd->add_option("--radius", pdr_args.radius, "dilation radius, pixels");
  pdr_cmd->add_option("--beams", pdr_args.beams, "subsample to this many beams");
  pdr_cmd->add_option("--out", pdr_args.out_prefix, "output prefix")->required();

  RefineArgs refine_args;
  CLI::App* refine_cmd =
      app.add_subcommand("refine", "graph-based depth correction against sparse points");
  refine_cmd->add_option("--depth", refine_args.depth_path, "initial depth .png")->required();
  refine_cmd->add_option("--points", refine_args.points_path, "velodyne .bin")->required();
  refine_cmd->add_option("--calib", refine_args.calib_path, "calib .txt")->required();
  refine_cmd->add_option("--gdc-k", refine_args.gdc_k, "neighbors per node");
  refine_cmd->add_option("--gdc-stride", refine_args.gdc_stride, "node grid stride");
  refine_cmd->add_option("--gdc-anchor-strength", refine_args.gdc_anchor_strength,
                         "anchor weight (inf = hard)");
  refine_cmd->add_option("--out", refine_args.out_path, "corrected depth .png")->required();
  refine_cmd->add_flag("--time", refine_args.time, "report wall clock and FPS");

  OptimizeArgs optimize_args;
  CLI::App* optimize_cmd =
      app.add_subcommand("optimize", "direct depth optimization on a frame triplet");
  optimize_cmd->add_option("--scene", optimize_args.scene_dir, "synth scene directory")
      ->required();
  optimize_cmd->add_option("--target", optimize_args.target, "target frame index");
  optimize_cmd->add_option("--iterations", optimize_args.iterations, "iteration budget");
  optimize_cmd->add_option("--step", optimize_args.step, "step size");
  optimize_cmd->add_option("--init-depth", optimize_args.init_depth_path,
                           "initial depth .png");
  optimize_cmd->add_option("--init-const", optimize_args.init_const,
                           "constant initial depth, meters");
  optimize_cmd->add_option("--pdr", optimize_args.pdr_prefix,
                           "PDR prefix for seeding (expects _depth/_confidence.png)");
  optimize_cmd->add_option("--enhanced", optimize_args.enhanced_path,
                           "reference depth .png for the scale-invariant term");
  optimize_cmd->add_option("--gt", optimize_args.gt_path, "ground-truth depth .png");
  optimize_cmd->add_option("--alpha", optimize_args.alpha, "reprojection weight");
  optimize_cmd->add_option("--beta", optimize_args.beta, "scale-invariant weight");
  optimize_cmd->add_flag("--optimize-poses", optimize_args.optimize_poses,
                         "jointly optimize the neighbor poses");
  optimize_cmd->add_option("--out", optimize_args.out_path, "final depth .png")->required();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "depth quality metrics");
  eval_cmd->add_option("--pred", eval_args.pred_paths, "prediction .png (repeatable)")
      ->required();
  eval_cmd->add_option("--gt", eval_args.gt_paths, "ground truth .png (repeatable)")
      ->required();
  eval_cmd->add_option("--cap", eval_args.cap, "max evaluated depth, meters");
  eval_cmd->add_option("--crop", eval_args.crop, "evaluation crop: garg|none");
  eval_cmd->add_flag("--csv-header", eval_args.csv_header, "print the CSV header line");

  ExportArgs export_args;
  CLI::App* export_cmd = app.add_subcommand("export", "lift a depth map to a point cloud");
  export_cmd->add_option("--depth", export_args.depth_path, "depth .png")->required();
  export_cmd->add_option("--calib", export_args.calib_path, "calib .txt")->required();
  export_cmd->add_option("--image", export_args.image_path, "color source .png");
  export_cmd->add_option("--format", export_args.format, "ply|bin");
  export_cmd->add_option("--out", export_args.out_path, "output file")->required();

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene");
  synth_cmd->add_option("--layout", synth_args.layout, "fronto|slanted|boxes");
  synth_cmd->add_option("--texture", synth_args.texture, "noise|affine");
  synth_cmd->add_option("--frames", synth_args.frames, "frame count (>= 3)");
  synth_cmd->add_option("--seed", synth_args.seed, "texture seed");
  synth_cmd->add_option("--size", synth_args.size_text, "raster WxH");
  synth_cmd->add_option("--baseline", synth_args.baseline, "per-frame x translation, m");
  synth_cmd->add_option("--out", synth_args.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const RunConfig config = load_run_config(common);
    if (common.dump_config) {
      std::cout << config.dump();
      return 0;
    }
    if (app.got_subcommand(pdr_cmd)) return run_pdr(pdr_args, config);
    if (app.got_subcommand(refine_cmd)) return run_refine(refine_args, config);
    if (app.got_subcommand(optimize_cmd)) return run_optimize(optimize_args, config);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval_args, config, common.jobs);
    if (app.got_subcommand(export_cmd)) return run_export(export_args);
    if (app.got_subcommand(synth_cmd)) return run_synth(synth_args, config);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
