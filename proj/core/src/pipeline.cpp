#include "bevloop/pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "bevloop/bev_projection.hpp"
#include "bevloop/features.hpp"
#include "bevloop/ground_alignment.hpp"

namespace bevloop {

namespace {

using nlohmann::json;

json PoseToJson(const SE3 &pose) {
  json values = json::array();
  const Eigen::Matrix4d m = pose.Matrix();
  for (int row = 0; row < 4; ++row) {
    for (int col = 0; col < 4; ++col) values.push_back(m(row, col));
  }
  return values;
}

SE3 PoseFromJson(const json &values) {
  if (!values.is_array() || values.size() != 16) {
    throw std::runtime_error("session meta: pose must have 16 entries");
  }
  Eigen::Matrix4d m;
  for (int row = 0; row < 4; ++row) {
    for (int col = 0; col < 4; ++col) {
      m(row, col) = values[4 * row + col].get<double>();
    }
  }
  return SE3::FromMatrix(m);
}

const MapRecord &FindRecord(const std::vector<MapRecord> &records,
                            int map_index) {
  for (const auto &record : records) {
    if (record.map_index == map_index) return record;
  }
  throw std::runtime_error("no record for map " + std::to_string(map_index));
}

IndexPair Canonical(int a, int b) {
  return a < b ? IndexPair{a, b} : IndexPair{b, a};
}

LevelMetrics ComputeLevel(const std::vector<Detection> &detections,
                          const std::set<IndexPair> &references) {
  LevelMetrics level;
  level.detections = static_cast<int>(detections.size());
  level.references = static_cast<int>(references.size());
  if (references.empty()) return level;
  level.curve = PrCurve(detections, references);
  level.average_precision = AveragePrecision(level.curve);
  level.recall_at_full_precision = RecallAtFullPrecision(level.curve);
  level.max_f1 = MaxF1(level.curve);
  return level;
}

std::vector<LocalMap> PartitionFromRecords(
    const std::vector<MapRecord> &records) {
  std::vector<LocalMap> partition;
  partition.reserve(records.size());
  for (const auto &record : records) {
    LocalMap map;
    map.map_index = record.map_index;
    map.partial = record.partial;
    map.scan_indices = record.scan_indices;
    partition.push_back(std::move(map));
  }
  return partition;
}

LocalMapperOptions MapperOptions(const PipelineConfig &config) {
  LocalMapperOptions options;
  options.displacement_threshold = config.displacement_threshold;
  options.max_range = config.max_range;
  options.voxel_size = config.map_voxel_size;
  options.max_points_per_voxel = 20;
  return options;
}

}  // namespace

void SaveSessionIndex(const SessionIndex &index,
                      const std::filesystem::path &database_path) {
  index.database.Save(database_path);
  json meta;
  meta["format_version"] = 1;
  meta["session_id"] = index.session_id;
  json maps = json::array();
  for (const auto &record : index.maps) {
    json entry;
    entry["map_index"] = record.map_index;
    entry["partial"] = record.partial;
    entry["ground_valid"] = record.ground_valid;
    entry["anchor_pose"] = PoseToJson(record.anchor_pose);
    entry["ground_transform"] = PoseToJson(record.ground_transform);
    entry["origin_cell"] = {record.origin_cell.x(), record.origin_cell.y()};
    entry["bev_resolution"] = record.bev_resolution;
    entry["descriptor_count"] = record.descriptor_count;
    entry["scan_indices"] = record.scan_indices;
    json poses = json::array();
    for (const auto &pose : record.scan_poses_local) {
      poses.push_back(PoseToJson(pose));
    }
    entry["scan_poses_local"] = poses;
    maps.push_back(std::move(entry));
  }
  meta["maps"] = std::move(maps);

  std::ofstream file(database_path.string() + ".meta.json");
  if (!file) {
    throw std::runtime_error("cannot write session meta for " +
                             database_path.string());
  }
  file << meta.dump(2) << "\n";
}

SessionIndex LoadSessionIndex(const std::filesystem::path &database_path) {
  SessionIndex index;
  index.database = DescriptorDatabase::Load(database_path);

  const std::filesystem::path meta_path(database_path.string() + ".meta.json");
  std::ifstream file(meta_path);
  if (!file) {
    throw std::runtime_error("cannot open session meta " + meta_path.string());
  }
  json meta = json::parse(file);
  if (meta.value("format_version", 0) != 1) {
    throw std::runtime_error("session meta: unsupported format version");
  }
  index.session_id = meta.value("session_id", std::string("session"));
  for (const auto &entry : meta.at("maps")) {
    MapRecord record;
    record.map_index = entry.at("map_index").get<int>();
    record.partial = entry.at("partial").get<bool>();
    record.ground_valid = entry.at("ground_valid").get<bool>();
    record.anchor_pose = PoseFromJson(entry.at("anchor_pose"));
    record.ground_transform = PoseFromJson(entry.at("ground_transform"));
    record.origin_cell =
        Eigen::Vector2i(entry.at("origin_cell")[0].get<int>(),
                        entry.at("origin_cell")[1].get<int>());
    record.bev_resolution = entry.at("bev_resolution").get<double>();
    record.descriptor_count = entry.at("descriptor_count").get<int>();
    record.scan_indices = entry.at("scan_indices").get<std::vector<int>>();
    for (const auto &pose : entry.at("scan_poses_local")) {
      record.scan_poses_local.push_back(PoseFromJson(pose));
    }
    index.maps.push_back(std::move(record));
  }
  return index;
}

SessionResult RunSessionInMemory(const std::vector<PointCloud> &scans,
                                 const std::vector<SE3> &poses,
                                 const PipelineConfig &config,
                                 const RunOptions &options) {
  config.Validate();
  if (scans.size() != poses.size()) {
    throw std::runtime_error("scan count (" + std::to_string(scans.size()) +
                             ") does not match pose count (" +
                             std::to_string(poses.size()) + ")");
  }
  if (scans.empty()) {
    throw std::runtime_error("session has no scans");
  }

  SessionResult result;
  result.scan_count = static_cast<int>(scans.size());
  DescriptorDatabase database(100);
  const bool multi_session = options.reference != nullptr;

  if (!options.bev_dump_directory.empty()) {
    std::filesystem::create_directories(options.bev_dump_directory);
  }

  const auto process_map = [&](LocalMap &&map) {
    const int map_index = map.map_index;
    std::string stage = "ground_alignment";
    try {
      MapRecord record;
      record.map_index = map.map_index;
      record.partial = map.partial;
      record.scan_indices = map.scan_indices;
      record.anchor_pose = map.anchor_pose;
      record.bev_resolution = config.bev_resolution;
      const SE3 anchor_inverse = map.anchor_pose.Inverse();
      record.scan_poses_local.reserve(map.scan_poses.size());
      for (const auto &pose : map.scan_poses) {
        record.scan_poses_local.push_back(anchor_inverse * pose);
      }

      GroundSolveReport ground;
      LocalMap aligned = std::move(map);
      if (config.ground_alignment && !aligned.empty()) {
        const auto samples = SampleGround(aligned, config.ground.cell_size);
        GroundSolverOptions solver;
        solver.max_iterations = config.ground.max_iterations;
        solver.inlier_distance = config.ground.inlier_distance;
        solver.convergence_epsilon = config.ground.convergence_epsilon;
        ground = SolveGround(samples, solver);
        aligned = ApplyGroundAlignment(aligned, ground);
      }
      record.ground_transform = ground.transform;
      record.ground_valid = ground.valid;

      std::vector<BinaryDescriptor> descriptors;
      if (!aligned.empty()) {
        stage = "bev_projection";
        const DensityImage image =
            ProjectDensity(aligned, config.bev_resolution);
        record.origin_cell = image.origin_cell;
        if (!options.bev_dump_directory.empty()) {
          char name[32];
          std::snprintf(name, sizeof(name), "map_%04d.pgm", record.map_index);
          WritePgm(image, options.bev_dump_directory / name);
        }

        stage = "feature_extraction";
        FeatureExtractorOptions feature_options;
        feature_options.fast_threshold = config.features.fast_threshold;
        feature_options.max_features = config.features.max_features;
        auto extraction =
            DetectAndDescribe(image, feature_options, record.map_index);
        descriptors = config.feature_pruning
                          ? PruneSelfSimilar(extraction.descriptors,
                                             config.prune_threshold)
                          : std::move(extraction.descriptors);
      }
      record.descriptor_count = static_cast<int>(descriptors.size());

      stage = "database_query";
      const auto votes =
          multi_session
              ? options.reference->database.Query(descriptors,
                                                  config.match_threshold, -1)
              : database.Query(descriptors, config.match_threshold,
                               config.exclude_recent);

      stage = "closure_verification";
      for (const auto &vote : votes) {
        const MapRecord &reference_record =
            multi_session ? FindRecord(options.reference->maps,
                                       vote.reference_map)
                          : FindRecord(result.maps, vote.reference_map);
        ClosureCandidate candidate;
        candidate.vote = vote;
        candidate.resolution = config.bev_resolution;
        candidate.query_origin_cell = record.origin_cell;
        candidate.reference_origin_cell = reference_record.origin_cell;
        RansacOptions ransac;
        ransac.iterations = config.ransac_iterations;
        ransac.inlier_tolerance = config.inlier_tolerance;
        ransac.min_inliers = config.min_inliers;
        ransac.seed = config.seed;
        auto closure = RansacVerify(candidate, ransac);
        if (!closure) continue;
        closure->relative_transform = ComposeRelativeTransform(
            closure->bev_transform, record.ground_transform,
            reference_record.ground_transform);

        stage = "scan_expansion";
        const auto scan_pairs = ExpandToScanClosures(
            *closure, record.scan_poses_local,
            reference_record.scan_poses_local, record.scan_indices,
            reference_record.scan_indices, config.scan_closure_distance);
        for (const auto &pair : scan_pairs) {
          result.scan_closures.push_back(
              ScanClosureRow{pair.query_scan, pair.reference_scan,
                             pair.distance, closure->inliers});
        }
        if (options.verbose) {
          std::cerr << "closure: map " << closure->query_map << " -> map "
                    << closure->reference_map << " (" << closure->inliers
                    << " inliers)\n";
        }
        result.closures.push_back(std::move(*closure));
        stage = "closure_verification";
      }

      stage = "database_insert";
      if (!multi_session) {
        database.Insert(descriptors);
      }
      result.maps.push_back(std::move(record));
    } catch (const std::exception &error) {
      throw std::runtime_error("map " + std::to_string(map_index) +
                               ", stage " + stage + ": " + error.what());
    }
  };

  LocalMapBuilder builder(MapperOptions(config));
  for (std::size_t i = 0; i < scans.size(); ++i) {
    ScanRecord record;
    record.index = static_cast<int>(i);
    record.cloud = scans[i];
    record.pose = poses[i];
    if (auto map = builder.AddScan(record)) {
      process_map(std::move(*map));
    }
  }
  if (auto map = builder.Finish()) {
    process_map(std::move(*map));
  }

  if (!options.save_database_path.empty()) {
    SessionIndex index;
    index.database = std::move(database);
    index.maps = result.maps;
    index.session_id = "session";
    SaveSessionIndex(index, options.save_database_path);
  }
  return result;
}

SessionResult RunSession(const SessionManifest &manifest,
                         const PipelineConfig &config,
                         const RunOptions &options) {
  const auto files = ListScanFiles(manifest.scan_directory);
  if (files.empty()) {
    throw std::runtime_error("no scan files in " +
                             manifest.scan_directory.string());
  }
  const auto poses = ReadPoseFile(manifest.pose_file);
  if (files.size() != poses.size()) {
    throw std::runtime_error(
        "scan count (" + std::to_string(files.size()) +
        ") does not match pose count (" + std::to_string(poses.size()) + ")");
  }

  std::vector<PointCloud> scans;
  scans.reserve(files.size());
  int dropped = 0;
  for (const auto &file : files) {
    auto scan = ReadScanFile(file);
    dropped += scan.dropped_points;
    scans.push_back(std::move(scan.cloud));
  }

  auto result = RunSessionInMemory(scans, poses, config, options);
  result.dropped_points = dropped;

  if (!options.output_directory.empty()) {
    std::filesystem::create_directories(options.output_directory);
    WriteClosuresCsv(options.output_directory / "closures.csv",
                     result.closures);
    WriteScanClosuresCsv(options.output_directory / "scan_closures.csv",
                         result.scan_closures);
    if (manifest.ground_truth_pose_file &&
        options.reference == nullptr) {
      const auto gt = ReadPoseFile(*manifest.ground_truth_pose_file);
      const auto metrics = EvaluateSession(result, scans, poses, gt, config);
      WriteMetrics(options.output_directory, metrics);
    }
  }
  return result;
}

SessionMetrics EvaluateSession(const SessionResult &result,
                               const std::vector<PointCloud> &scans,
                               const std::vector<SE3> &odometry_poses,
                               const std::vector<SE3> &gt_poses,
                               const PipelineConfig &config) {
  const auto partition = PartitionFromRecords(result.maps);
  const auto mapper_options = MapperOptions(config);
  const auto gt_maps =
      RebuildMapsWithPoses(scans, gt_poses, partition, mapper_options);
  const auto map_references = ReferenceMapClosures(gt_maps, 1.0);
  const auto scan_references =
      ReferenceScanClosures(scans, gt_poses, config.max_range);

  std::vector<Detection> map_detections;
  for (const auto &closure : result.closures) {
    map_detections.push_back(Detection{
        Canonical(closure.query_map, closure.reference_map), closure.inliers});
  }
  std::vector<Detection> scan_detections;
  for (const auto &row : result.scan_closures) {
    scan_detections.push_back(Detection{
        Canonical(row.query_scan, row.reference_scan), row.inliers});
  }

  SessionMetrics metrics;
  metrics.closures = static_cast<int>(result.closures.size());
  metrics.map_level = ComputeLevel(map_detections, map_references);
  metrics.scan_level = ComputeLevel(scan_detections, scan_references);

  if (!result.closures.empty()) {
    const auto odometry_maps =
        RebuildMapsWithPoses(scans, odometry_poses, partition, mapper_options);
    double fitness_sum = 0.0;
    for (const auto &closure : result.closures) {
      const auto &query_map = odometry_maps.at(closure.query_map);
      const auto &reference_map = odometry_maps.at(closure.reference_map);
      fitness_sum += RelativeFitness(reference_map.points, query_map.points,
                                     closure.relative_transform, 1.0);
    }
    metrics.mean_relative_fitness = fitness_sum / result.closures.size();
  }
  return metrics;
}

SessionMetrics EvaluateCrossSession(const SessionResult &result,
                                    const std::vector<PointCloud> &query_scans,
                                    const std::vector<SE3> &query_odometry,
                                    const std::vector<SE3> &query_gt,
                                    const std::vector<PointCloud> &ref_scans,
                                    const std::vector<SE3> &ref_odometry,
                                    const std::vector<SE3> &ref_gt,
                                    const PipelineConfig &config) {
  const auto mapper_options = MapperOptions(config);
  const auto query_partition = PartitionFromRecords(result.maps);
  const auto query_gt_maps =
      RebuildMapsWithPoses(query_scans, query_gt, query_partition,
                           mapper_options);

  // The reference partition is re-derived from its odometry; the builder is
  // deterministic so this matches the partition used when the database was
  // built.
  std::vector<ScanRecord> ref_records;
  ref_records.reserve(ref_scans.size());
  for (std::size_t i = 0; i < ref_scans.size(); ++i) {
    ref_records.push_back(
        ScanRecord{static_cast<int>(i), ref_scans[i], ref_odometry[i]});
  }
  const auto ref_partition = BuildLocalMaps(ref_records, mapper_options);
  const auto ref_gt_maps =
      RebuildMapsWithPoses(ref_scans, ref_gt, ref_partition, mapper_options);

  const auto references =
      CrossSessionMapReferences(query_gt_maps, ref_gt_maps, 1.0);

  std::vector<Detection> detections;
  for (const auto &closure : result.closures) {
    detections.push_back(Detection{
        IndexPair{closure.query_map, closure.reference_map}, closure.inliers});
  }

  SessionMetrics metrics;
  metrics.closures = static_cast<int>(result.closures.size());
  metrics.map_level = ComputeLevel(detections, references);

  if (!result.closures.empty()) {
    const auto query_odometry_maps = RebuildMapsWithPoses(
        query_scans, query_odometry, query_partition, mapper_options);
    const auto ref_odometry_maps = RebuildMapsWithPoses(
        ref_scans, ref_odometry, ref_partition, mapper_options);
    double fitness_sum = 0.0;
    for (const auto &closure : result.closures) {
      const auto &query_map = query_odometry_maps.at(closure.query_map);
      const auto &reference_map = ref_odometry_maps.at(closure.reference_map);
      fitness_sum += RelativeFitness(reference_map.points, query_map.points,
                                     closure.relative_transform, 1.0);
    }
    metrics.mean_relative_fitness = fitness_sum / result.closures.size();
  }
  return metrics;
}

void WriteClosuresCsv(const std::filesystem::path &path,
                      const std::vector<LoopClosure> &closures) {
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("cannot write " + path.string());
  }
  file << std::setprecision(17);
  file << "query_map,reference_map,inliers";
  for (int i = 0; i < 16; ++i) file << ",t" << i / 4 << i % 4;
  file << "\n";
  for (const auto &closure : closures) {
    file << closure.query_map << "," << closure.reference_map << ","
         << closure.inliers;
    const Eigen::Matrix4d m = closure.relative_transform.Matrix();
    for (int row = 0; row < 4; ++row) {
      for (int col = 0; col < 4; ++col) file << "," << m(row, col);
    }
    file << "\n";
  }
}

void WriteScanClosuresCsv(const std::filesystem::path &path,
                          const std::vector<ScanClosureRow> &rows) {
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("cannot write " + path.string());
  }
  file << std::setprecision(17);
  file << "query_scan,reference_scan,distance,inliers\n";
  for (const auto &row : rows) {
    file << row.query_scan << "," << row.reference_scan << "," << row.distance
         << "," << row.inliers << "\n";
  }
}

std::vector<LoopClosure> ReadClosuresCsv(const std::filesystem::path &path) {
  std::ifstream file(path);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<LoopClosure> closures;
  std::string line;
  bool first = true;
  int line_number = 0;
  while (std::getline(file, line)) {
    ++line_number;
    if (first) {
      first = false;  // header
      continue;
    }
    if (line.empty()) continue;
    std::istringstream stream(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (fields.size() != 19) {
      throw std::runtime_error("closures csv line " +
                               std::to_string(line_number) +
                               ": expected 19 fields");
    }
    LoopClosure closure;
    closure.query_map = std::stoi(fields[0]);
    closure.reference_map = std::stoi(fields[1]);
    closure.inliers = std::stoi(fields[2]);
    Eigen::Matrix4d m;
    for (int i = 0; i < 16; ++i) {
      m(i / 4, i % 4) = std::stod(fields[3 + i]);
    }
    closure.relative_transform = SE3::FromMatrix(m);
    closures.push_back(std::move(closure));
  }
  return closures;
}

std::vector<ScanClosureRow> ReadScanClosuresCsv(
    const std::filesystem::path &path) {
  std::ifstream file(path);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::vector<ScanClosureRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(file, line)) {
    if (first) {
      first = false;  // header
      continue;
    }
    if (line.empty()) continue;
    std::istringstream stream(line);
    std::string field;
    ScanClosureRow row;
    if (!std::getline(stream, field, ',')) continue;
    row.query_scan = std::stoi(field);
    if (!std::getline(stream, field, ',')) continue;
    row.reference_scan = std::stoi(field);
    if (!std::getline(stream, field, ',')) continue;
    row.distance = std::stod(field);
    if (!std::getline(stream, field, ',')) continue;
    row.inliers = std::stoi(field);
    rows.push_back(row);
  }
  return rows;
}

namespace {

void WriteCurveCsv(const std::filesystem::path &path,
                   const std::vector<PrPoint> &curve) {
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("cannot write " + path.string());
  }
  file << std::setprecision(17);
  file << "gamma,precision,recall,f1\n";
  for (const auto &point : curve) {
    file << point.gamma << "," << point.precision << "," << point.recall << ","
         << point.f1 << "\n";
  }
}

json LevelToJson(const LevelMetrics &level) {
  json out;
  out["ap"] = level.average_precision;
  out["r_at_1"] = level.recall_at_full_precision;
  out["f1_max"] = level.max_f1;
  out["detections"] = level.detections;
  out["references"] = level.references;
  return out;
}

}  // namespace

void WriteMetrics(const std::filesystem::path &directory,
                  const SessionMetrics &metrics) {
  std::filesystem::create_directories(directory);
  WriteCurveCsv(directory / "pr_curve.csv", metrics.scan_level.curve);
  WriteCurveCsv(directory / "pr_curve_maps.csv", metrics.map_level.curve);

  json summary;
  summary["scan_level"] = LevelToJson(metrics.scan_level);
  summary["map_level"] = LevelToJson(metrics.map_level);
  summary["mean_relative_fitness"] = metrics.mean_relative_fitness;
  summary["closures"] = metrics.closures;
  std::ofstream file(directory / "summary.json");
  if (!file) {
    throw std::runtime_error("cannot write summary.json");
  }
  file << summary.dump(2) << "\n";
}

}  // namespace bevloop
