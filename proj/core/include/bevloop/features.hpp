#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bevloop/bev_projection.hpp"

namespace bevloop {

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  double orientation = 0.0;  // radians in (-pi, pi]
  double response = 0.0;
};

struct Descriptor256 {
  std::array<std::uint64_t, 4> words{};

  bool Bit(int i) const {
    return (words[i >> 6] >> (i & 63)) & 1ULL;
  }
  void SetBit(int i) { words[i >> 6] |= 1ULL << (i & 63); }
  bool operator==(const Descriptor256 &other) const = default;
};

int HammingDistance(const Descriptor256 &a, const Descriptor256 &b);

struct BinaryDescriptor {
  Descriptor256 bits;
  Keypoint keypoint;
  int map_index = 0;
};

struct FeatureExtractorOptions {
  int fast_threshold = 20;  // 8-bit intensity units
  int max_features = 500;
};

struct FeatureExtraction {
  std::vector<BinaryDescriptor> descriptors;
  bool image_too_small = false;
};

/// Single-scale corner detection and oriented 256-bit binary description on
/// the 8-bit view of a density image. Keypoints closer than 16 px to the
/// border are discarded so the descriptor patch always fits.
FeatureExtraction DetectAndDescribe(const DensityImage &image,
                                    const FeatureExtractorOptions &options = {},
                                    int map_index = 0);

/// Removes every descriptor that has another descriptor of the same image
/// within `prune_threshold` bits. Both members of a close pair go, so whole
/// ambiguity classes from repetitive structure disappear.
std::vector<BinaryDescriptor> PruneSelfSimilar(
    const std::vector<BinaryDescriptor> &descriptors, int prune_threshold = 35);

}  // namespace bevloop
