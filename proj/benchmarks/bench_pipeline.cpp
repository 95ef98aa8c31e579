#include <benchmark/benchmark.h>

#include <random>

#include "bevloop/bev_projection.hpp"
#include "bevloop/closure.hpp"
#include "bevloop/features.hpp"
#include "bevloop/ground_alignment.hpp"
#include "bevloop/hbst.hpp"

namespace {

using namespace bevloop;

// A city-block-like map: ground plane plus box structures, about the point
// count of a full-scale local map.
std::vector<Point3> MakeMapPoints(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x(-150.0, 150.0);
  std::uniform_real_distribution<double> y(-60.0, 60.0);
  std::uniform_real_distribution<double> z(0.0, 8.0);
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  std::vector<Point3> points;
  points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (pick(rng) < 0.4) {
      points.emplace_back(x(rng), y(rng), 0.02 * z(rng));  // ground
    } else {
      const double wall_x = std::round(x(rng) / 25.0) * 25.0;
      points.emplace_back(wall_x + 0.05 * z(rng), y(rng), z(rng));
    }
  }
  return points;
}

std::vector<BinaryDescriptor> RandomDescriptors(int count, int map_index,
                                                std::mt19937_64 &rng) {
  std::vector<BinaryDescriptor> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    BinaryDescriptor d;
    for (auto &word : d.bits.words) word = rng();
    d.map_index = map_index;
    out.push_back(d);
  }
  return out;
}

void BM_VoxelDownsample(benchmark::State &state) {
  const auto points = MakeMapPoints(static_cast<std::size_t>(state.range(0)),
                                    3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(VoxelDownsample(points, 1.0, 20));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VoxelDownsample)->Arg(1 << 20);

void BM_GroundAlign(benchmark::State &state) {
  const auto points = MakeMapPoints(static_cast<std::size_t>(state.range(0)),
                                    5);
  for (auto _ : state) {
    const auto samples = SampleGround(points, 5.0);
    benchmark::DoNotOptimize(SolveGround(samples));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GroundAlign)->Arg(1 << 21);

void BM_ProjectDensity(benchmark::State &state) {
  const auto points = MakeMapPoints(static_cast<std::size_t>(state.range(0)),
                                    7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ProjectDensity(points, 0.5));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProjectDensity)->Arg(1 << 21);

void BM_DetectAndDescribe(benchmark::State &state) {
  const auto points = MakeMapPoints(1 << 21, 9);
  const auto image = ProjectDensity(points, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(DetectAndDescribe(image));
  }
}
BENCHMARK(BM_DetectAndDescribe);

void BM_HbstQuery(benchmark::State &state) {
  std::mt19937_64 rng(11);
  DescriptorDatabase db;
  for (int m = 0; m < 20; ++m) {
    db.Insert(RandomDescriptors(500, m, rng));
  }
  const auto queries = RandomDescriptors(500, 100, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(db.Query(queries, 50, -1));
  }
  state.SetItemsProcessed(state.iterations() * queries.size());
}
BENCHMARK(BM_HbstQuery);

void BM_RansacVerify(benchmark::State &state) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> coordinate(-100.0, 100.0);
  SE2 truth;
  truth.angle = 0.8;
  truth.translation = Eigen::Vector2d(40.0, -25.0);
  ClosureCandidate candidate;
  candidate.resolution = 0.5;
  candidate.vote.query_map = 10;
  candidate.vote.reference_map = 2;
  for (int i = 0; i < 200; ++i) {
    DescriptorMatch match;
    const Eigen::Vector2d src(coordinate(rng), coordinate(rng));
    const Eigen::Vector2d dst =
        i % 3 == 0 ? Eigen::Vector2d(coordinate(rng) + 500.0, coordinate(rng))
                   : truth * src;
    match.reference.u = src.x() / 0.5 - 0.5;
    match.reference.v = src.y() / 0.5 - 0.5;
    match.query.u = dst.x() / 0.5 - 0.5;
    match.query.v = dst.y() / 0.5 - 0.5;
    candidate.vote.pairs.push_back(match);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(RansacVerify(candidate));
  }
}
BENCHMARK(BM_RansacVerify);

}  // namespace

BENCHMARK_MAIN();
