#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "bevloop/pipeline.hpp"
#include "bevloop/synthetic.hpp"

namespace {

using namespace bevloop;

struct ConfigCli {
  std::string config_file;
  std::vector<std::string> overrides;

  void Attach(CLI::App *app) {
    app->add_option("--config", config_file,
                    "Pipeline config file (key = value lines)");
    app->add_option("--set", overrides,
                    "Override a config key, e.g. --set gamma=7")
        ->type_name("KEY=VALUE");
  }

  PipelineConfig Resolve() const {
    PipelineConfig config;
    if (!config_file.empty()) {
      config = ParseConfigFile(config_file);
    }
    if (!overrides.empty()) {
      // Flags override file values: rewrite through the text form.
      std::ostringstream merged;
      merged << SerializeConfig(config);
      for (const auto &entry : overrides) {
        const auto equals = entry.find('=');
        if (equals == std::string::npos) {
          throw CLI::ValidationError("--set expects KEY=VALUE, got " + entry);
        }
        merged << entry.substr(0, equals) << " = " << entry.substr(equals + 1)
               << "\n";
      }
      std::istringstream in(merged.str());
      config = ParseConfig(in);
    }
    config.Validate();
    return config;
  }
};

SessionManifest MakeManifest(const std::string &scans, const std::string &poses,
                             const std::string &gt, const std::string &id) {
  SessionManifest manifest;
  manifest.scan_directory = scans;
  manifest.pose_file = poses;
  if (!gt.empty()) manifest.ground_truth_pose_file = gt;
  manifest.session_id = id;
  return manifest;
}

void PrintLevel(const char *name, const LevelMetrics &level) {
  std::cout << name << ": ap=" << level.average_precision
            << " r@1=" << level.recall_at_full_precision
            << " f1_max=" << level.max_f1 << " detections=" << level.detections
            << " references=" << level.references << "\n";
}

int RunVerb(const std::string &scans, const std::string &poses,
            const std::string &gt, const std::string &db,
            const std::string &out, const std::string &save_db,
            const std::string &dump_bev, const ConfigCli &config_cli,
            bool verbose) {
  const auto config = config_cli.Resolve();
  RunOptions options;
  options.verbose = verbose;
  if (!out.empty()) options.output_directory = out;
  if (!save_db.empty()) options.save_database_path = save_db;
  if (!dump_bev.empty()) options.bev_dump_directory = dump_bev;

  SessionIndex reference;
  if (!db.empty()) {
    reference = LoadSessionIndex(db);
    options.reference = &reference;
    std::cout << "loaded database: " << reference.maps.size() << " maps, "
              << reference.database.size() << " descriptors\n";
  }

  const auto manifest = MakeManifest(scans, poses, gt, "query");
  const auto result = RunSession(manifest, config, options);
  std::cout << "scans: " << result.scan_count << "\n"
            << "local maps: " << result.maps.size() << "\n"
            << "closures: " << result.closures.size() << "\n"
            << "scan closures: " << result.scan_closures.size() << "\n";
  if (result.dropped_points > 0) {
    std::cout << "dropped non-finite points: " << result.dropped_points
              << "\n";
  }
  if (!out.empty()) {
    std::cout << "outputs written to " << out << "\n";
  }
  return 0;
}

int EvalVerb(const std::string &closures_csv, const std::string &scan_csv,
             const std::string &scans, const std::string &poses,
             const std::string &gt, const std::string &ref_scans,
             const std::string &ref_poses, const std::string &ref_gt,
             const std::string &out, const ConfigCli &config_cli) {
  const auto config = config_cli.Resolve();

  SessionResult result;
  result.closures = ReadClosuresCsv(closures_csv);
  if (!scan_csv.empty()) {
    result.scan_closures = ReadScanClosuresCsv(scan_csv);
  }

  const auto files = ListScanFiles(scans);
  std::vector<PointCloud> clouds;
  clouds.reserve(files.size());
  for (const auto &file : files) {
    clouds.push_back(ReadScanFile(file).cloud);
  }
  const auto odometry = ReadPoseFile(poses);
  const auto ground_truth = ReadPoseFile(gt);

  // The partition is re-derived from odometry; the builder is deterministic
  // so it matches the partition of the run that produced the csv.
  LocalMapperOptions mapper;
  mapper.displacement_threshold = config.displacement_threshold;
  mapper.max_range = config.max_range;
  mapper.voxel_size = config.map_voxel_size;
  std::vector<ScanRecord> records;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    records.push_back(ScanRecord{static_cast<int>(i), clouds[i], odometry[i]});
  }
  for (const auto &map : BuildLocalMaps(records, mapper)) {
    MapRecord record;
    record.map_index = map.map_index;
    record.partial = map.partial;
    record.scan_indices = map.scan_indices;
    result.maps.push_back(std::move(record));
  }

  SessionMetrics metrics;
  if (!ref_scans.empty()) {
    const auto ref_files = ListScanFiles(ref_scans);
    std::vector<PointCloud> ref_clouds;
    ref_clouds.reserve(ref_files.size());
    for (const auto &file : ref_files) {
      ref_clouds.push_back(ReadScanFile(file).cloud);
    }
    metrics = EvaluateCrossSession(result, clouds, odometry, ground_truth,
                                   ref_clouds, ReadPoseFile(ref_poses),
                                   ReadPoseFile(ref_gt), config);
  } else {
    metrics = EvaluateSession(result, clouds, odometry, ground_truth, config);
  }

  PrintLevel("map level", metrics.map_level);
  PrintLevel("scan level", metrics.scan_level);
  std::cout << "mean relative fitness: " << metrics.mean_relative_fitness
            << "\n";
  if (!out.empty()) {
    WriteMetrics(out, metrics);
    std::cout << "metrics written to " << out << "\n";
  }
  return 0;
}

int StressVerb(int synthetic_maps, const std::string &scans,
               const std::string &poses, const std::string &magnitudes_arg,
               int trials, std::uint64_t seed, const ConfigCli &config_cli) {
  const auto config = config_cli.Resolve();
  GroundSolverOptions solver;
  solver.max_iterations = config.ground.max_iterations;
  solver.inlier_distance = config.ground.inlier_distance;
  solver.convergence_epsilon = config.ground.convergence_epsilon;

  std::vector<double> magnitudes;
  std::stringstream stream(magnitudes_arg);
  std::string token;
  while (std::getline(stream, token, ',')) {
    magnitudes.push_back(std::stod(token));
  }

  std::vector<std::vector<Point3>> maps;
  if (!scans.empty()) {
    const auto files = ListScanFiles(scans);
    const auto odometry = ReadPoseFile(poses);
    if (files.size() != odometry.size()) {
      throw std::runtime_error("scan and pose counts differ");
    }
    LocalMapperOptions mapper;
    mapper.displacement_threshold = config.displacement_threshold;
    mapper.max_range = config.max_range;
    mapper.voxel_size = config.map_voxel_size;
    LocalMapBuilder builder(mapper);
    std::vector<LocalMap> local_maps;
    for (std::size_t i = 0; i < files.size(); ++i) {
      ScanRecord record;
      record.index = static_cast<int>(i);
      record.cloud = ReadScanFile(files[i]).cloud;
      record.pose = odometry[i];
      if (auto map = builder.AddScan(record)) {
        local_maps.push_back(std::move(*map));
      }
    }
    for (auto &map : local_maps) {
      const auto report = SolveGround(SampleGround(map, config.ground.cell_size),
                                      solver);
      maps.push_back(ApplyGroundAlignment(map, report).points);
    }
  } else {
    // Synthetic planar maps with light sensor noise.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coordinate(-50.0, 50.0);
    std::uniform_real_distribution<double> noise(-0.02, 0.02);
    for (int m = 0; m < synthetic_maps; ++m) {
      std::vector<Point3> plane;
      plane.reserve(4000);
      for (int i = 0; i < 4000; ++i) {
        plane.emplace_back(coordinate(rng), coordinate(rng), noise(rng));
      }
      maps.push_back(std::move(plane));
    }
  }

  const auto results = GroundAlignmentStress(maps, magnitudes, trials, seed,
                                             solver, config.ground.cell_size);
  std::cout << "magnitude_deg,mean_error_deg\n";
  for (const auto &row : results) {
    std::cout << row.magnitude_deg << "," << row.mean_error_deg << "\n";
  }
  return 0;
}

int SynthVerb(const std::string &layout, const std::string &out, double length,
              double width, double spacing, double fov, double oscillation,
              int boxes, bool single_pass, std::uint64_t seed) {
  SyntheticWorldSpec spec;
  if (layout == "corridor") {
    spec.layout = SyntheticWorldSpec::Layout::kCorridor;
  } else if (layout == "grid") {
    spec.layout = SyntheticWorldSpec::Layout::kGridStreets;
  } else if (layout == "aliasing") {
    spec.layout = SyntheticWorldSpec::Layout::kAliasingPair;
  } else {
    throw CLI::ValidationError("unknown layout " + layout);
  }
  spec.corridor_length = length;
  spec.corridor_width = width;
  spec.scan_spacing = spacing;
  spec.fov_deg = fov;
  spec.oscillation_amplitude_deg = oscillation;
  spec.box_count = boxes;
  spec.out_and_back = !single_pass;
  spec.seed = seed;

  const auto world = GenerateSyntheticWorld(spec);
  WriteSyntheticSession(world, out);
  std::cout << "wrote " << world.scans.size() << " scans to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"BEV density-image loop closure detection and alignment"};
  app.require_subcommand(1);

  // run
  auto *run = app.add_subcommand("run", "Detect loop closures in a session");
  std::string run_scans, run_poses, run_gt, run_db, run_out, run_save_db,
      run_dump;
  bool run_verbose = false;
  ConfigCli run_config;
  run->add_option("--scans", run_scans, "Scan directory")->required();
  run->add_option("--poses", run_poses, "Odometry pose file")->required();
  run->add_option("--gt", run_gt, "Ground-truth pose file (enables metrics)");
  run->add_option("--db", run_db,
                  "Query a saved reference database (multi-session)");
  run->add_option("--out", run_out, "Output directory for csv/metrics");
  run->add_option("--save-db", run_save_db,
                  "Save the in-session database to this path");
  run->add_option("--dump-bev", run_dump, "Write per-map PGM density images");
  run->add_flag("--verbose", run_verbose, "Log closures as they appear");
  run_config.Attach(run);

  // build-db
  auto *build = app.add_subcommand(
      "build-db", "Process a reference session and save its database");
  std::string build_scans, build_poses, build_out;
  ConfigCli build_config;
  build->add_option("--scans", build_scans, "Scan directory")->required();
  build->add_option("--poses", build_poses, "Odometry pose file")->required();
  build->add_option("--out", build_out, "Database output path")->required();
  build_config.Attach(build);

  // eval
  auto *eval = app.add_subcommand(
      "eval", "Score closures against ground-truth references");
  std::string eval_closures, eval_scan_closures, eval_scans, eval_poses,
      eval_gt, eval_ref_scans, eval_ref_poses, eval_ref_gt, eval_out;
  ConfigCli eval_config;
  eval->add_option("--closures", eval_closures, "closures.csv from a run")
      ->required();
  eval->add_option("--scan-closures", eval_scan_closures,
                   "scan_closures.csv from a run");
  eval->add_option("--scans", eval_scans, "Query scan directory")->required();
  eval->add_option("--poses", eval_poses, "Query odometry poses")->required();
  eval->add_option("--gt", eval_gt, "Query ground-truth poses")->required();
  eval->add_option("--ref-scans", eval_ref_scans,
                   "Reference session scans (multi-session eval)");
  eval->add_option("--ref-poses", eval_ref_poses,
                   "Reference session odometry");
  eval->add_option("--ref-gt", eval_ref_gt, "Reference session ground truth");
  eval->add_option("--out", eval_out, "Directory for metric files");
  eval_config.Attach(eval);

  // stress-ground
  auto *stress = app.add_subcommand(
      "stress-ground", "Induced-rotation recovery study of ground alignment");
  int stress_maps = 3;
  int stress_trials = 10;
  std::uint64_t stress_seed = 42;
  std::string stress_scans, stress_poses;
  std::string stress_magnitudes = "10,20,30,40,50,60";
  ConfigCli stress_config;
  stress->add_option("--synthetic", stress_maps,
                     "Number of synthetic planar maps");
  stress->add_option("--scans", stress_scans,
                     "Stress real maps from this scan directory instead");
  stress->add_option("--poses", stress_poses, "Poses for --scans");
  stress->add_option("--magnitudes", stress_magnitudes,
                     "Comma-separated rotation magnitudes in degrees");
  stress->add_option("--trials", stress_trials, "Random axes per magnitude");
  stress->add_option("--seed", stress_seed, "PRNG seed");
  stress_config.Attach(stress);

  // synth
  auto *synth = app.add_subcommand(
      "synth", "Generate a synthetic world session on disk");
  std::string synth_layout = "corridor";
  std::string synth_out;
  double synth_length = 400.0;
  double synth_width = 40.0;
  double synth_spacing = 1.6;
  double synth_fov = 360.0;
  double synth_oscillation = 0.0;
  int synth_boxes = 40;
  bool synth_single_pass = false;
  std::uint64_t synth_seed = 1;
  synth->add_option("--layout", synth_layout, "corridor | grid | aliasing");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--length", synth_length, "Corridor length in meters");
  synth->add_option("--width", synth_width, "Corridor width in meters");
  synth->add_option("--spacing", synth_spacing, "Scan spacing in meters");
  synth->add_option("--fov", synth_fov, "Horizontal field of view in degrees");
  synth->add_option("--oscillation", synth_oscillation,
                    "Roll/pitch oscillation amplitude in degrees");
  synth->add_option("--boxes", synth_boxes, "Number of random boxes");
  synth->add_flag("--single-pass", synth_single_pass,
                  "Traverse once instead of out-and-back");
  synth->add_option("--seed", synth_seed, "World seed");

  // dump-bev
  auto *dump = app.add_subcommand(
      "dump-bev", "Write per-map density images of a session as PGM");
  std::string dump_scans, dump_poses, dump_out;
  ConfigCli dump_config;
  dump->add_option("--scans", dump_scans, "Scan directory")->required();
  dump->add_option("--poses", dump_poses, "Odometry pose file")->required();
  dump->add_option("--out", dump_out, "Output directory")->required();
  dump_config.Attach(dump);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return RunVerb(run_scans, run_poses, run_gt, run_db, run_out,
                     run_save_db, run_dump, run_config, run_verbose);
    }
    if (build->parsed()) {
      const auto config = build_config.Resolve();
      RunOptions options;
      options.save_database_path = build_out;
      const auto manifest =
          MakeManifest(build_scans, build_poses, "", "reference");
      const auto result = RunSession(manifest, config, options);
      std::cout << "local maps: " << result.maps.size() << "\n"
                << "database saved to " << build_out << "\n";
      return 0;
    }
    if (eval->parsed()) {
      return EvalVerb(eval_closures, eval_scan_closures, eval_scans,
                      eval_poses, eval_gt, eval_ref_scans, eval_ref_poses,
                      eval_ref_gt, eval_out, eval_config);
    }
    if (stress->parsed()) {
      return StressVerb(stress_maps, stress_scans, stress_poses,
                        stress_magnitudes, stress_trials, stress_seed,
                        stress_config);
    }
    if (synth->parsed()) {
      return SynthVerb(synth_layout, synth_out, synth_length, synth_width,
                       synth_spacing, synth_fov, synth_oscillation,
                       synth_boxes, synth_single_pass, synth_seed);
    }
    if (dump->parsed()) {
      const auto config = dump_config.Resolve();
      RunOptions options;
      options.bev_dump_directory = dump_out;
      const auto manifest = MakeManifest(dump_scans, dump_poses, "", "dump");
      const auto result = RunSession(manifest, config, options);
      std::cout << "wrote " << result.maps.size() << " density images to "
                << dump_out << "\n";
      return 0;
    }
  } catch (const std::exception &error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
