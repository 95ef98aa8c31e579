#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bevloop/closure.hpp"
#include "bevloop/config.hpp"
#include "bevloop/evaluation.hpp"
#include "bevloop/hbst.hpp"
#include "bevloop/io.hpp"
#include "bevloop/local_map.hpp"

namespace bevloop {

/// Everything the closure stages need to know about a processed map besides
/// its descriptors (those live in the database).
struct MapRecord {
  int map_index = 0;
  SE3 anchor_pose;
  SE3 ground_transform;
  bool ground_valid = true;
  bool partial = false;
  std::vector<int> scan_indices;
  std::vector<SE3> scan_poses_local;  // anchor-relative
  Eigen::Vector2i origin_cell = Eigen::Vector2i::Zero();
  double bev_resolution = 0.5;
  int descriptor_count = 0;
};

/// Persistent reference-session state: the descriptor tree plus per-map
/// metadata. Saved as <path> (HBST binary) and <path>.meta.json.
struct SessionIndex {
  DescriptorDatabase database;
  std::vector<MapRecord> maps;
  std::string session_id;
};

void SaveSessionIndex(const SessionIndex &index,
                      const std::filesystem::path &database_path);
SessionIndex LoadSessionIndex(const std::filesystem::path &database_path);

struct ScanClosureRow {
  int query_scan = 0;
  int reference_scan = 0;
  double distance = 0.0;
  int inliers = 0;  // inherited from the parent map closure
};

struct SessionResult {
  std::vector<LoopClosure> closures;
  std::vector<ScanClosureRow> scan_closures;
  std::vector<MapRecord> maps;
  int scan_count = 0;
  int dropped_points = 0;
};

struct RunOptions {
  /// When set, closures.csv / scan_closures.csv (and metrics, if ground
  /// truth is available) land here.
  std::filesystem::path output_directory;
  /// When set, the in-session index is saved to this path (build-db).
  std::filesystem::path save_database_path;
  /// When set, per-map density images are written as PGM files.
  std::filesystem::path bev_dump_directory;
  /// Multi-session mode: query this index instead of the in-session tree and
  /// do not insert anything.
  const SessionIndex *reference = nullptr;
  bool verbose = false;
};

/// Runs the full pipeline over a session on disk.
SessionResult RunSession(const SessionManifest &manifest,
                         const PipelineConfig &config,
                         const RunOptions &options = {});

/// In-memory variant used by tests and the synthetic harness.
SessionResult RunSessionInMemory(const std::vector<PointCloud> &scans,
                                 const std::vector<SE3> &poses,
                                 const PipelineConfig &config,
                                 const RunOptions &options = {});

struct LevelMetrics {
  std::vector<PrPoint> curve;
  double average_precision = 0.0;
  double recall_at_full_precision = 0.0;
  double max_f1 = 0.0;
  int detections = 0;
  int references = 0;
};

struct SessionMetrics {
  LevelMetrics map_level;
  LevelMetrics scan_level;
  double mean_relative_fitness = 0.0;  // over emitted closures, under t_qr
  int closures = 0;
};

/// Single-session metrics against ground-truth references. Rebuilds maps with
/// ground-truth poses over the pipeline's partition, derives scan- and
/// map-level reference sets, and scores the detections.
SessionMetrics EvaluateSession(const SessionResult &result,
                               const std::vector<PointCloud> &scans,
                               const std::vector<SE3> &odometry_poses,
                               const std::vector<SE3> &gt_poses,
                               const PipelineConfig &config);

/// Cross-session metrics: query-session detections against the non-zero
/// overlap references between the two sessions' ground-truth maps.
SessionMetrics EvaluateCrossSession(const SessionResult &result,
                                    const std::vector<PointCloud> &query_scans,
                                    const std::vector<SE3> &query_odometry,
                                    const std::vector<SE3> &query_gt,
                                    const std::vector<PointCloud> &ref_scans,
                                    const std::vector<SE3> &ref_odometry,
                                    const std::vector<SE3> &ref_gt,
                                    const PipelineConfig &config);

void WriteClosuresCsv(const std::filesystem::path &path,
                      const std::vector<LoopClosure> &closures);
void WriteScanClosuresCsv(const std::filesystem::path &path,
                          const std::vector<ScanClosureRow> &rows);
std::vector<LoopClosure> ReadClosuresCsv(const std::filesystem::path &path);
std::vector<ScanClosureRow> ReadScanClosuresCsv(
    const std::filesystem::path &path);
void WriteMetrics(const std::filesystem::path &directory,
                  const SessionMetrics &metrics);

}  // namespace bevloop
