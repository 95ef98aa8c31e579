#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "bevloop/features.hpp"

using namespace bevloop;

namespace {

DensityImage MakeImage(int width, int height) {
  DensityImage image;
  image.width = width;
  image.height = height;
  image.resolution = 0.5;
  image.counts.assign(static_cast<std::size_t>(width) * height, 0);
  image.intensity.assign(static_cast<std::size_t>(width) * height, 0.0);
  return image;
}

void SetPixel(DensityImage *image, int u, int v, double value) {
  image->intensity[v * image->width + u] = value;
  image->counts[v * image->width + u] = static_cast<int>(value * 100);
}

// Independent segment-test oracle: 9 contiguous ring pixels brighter or
// darker than the center by more than the threshold.
bool OracleFastCorner(const std::vector<std::uint8_t> &gray, int width,
                      int height, int u, int v, int threshold) {
  static constexpr std::array<std::array<int, 2>, 16> kRing = {{{0, 3},
                                                                {1, 3},
                                                                {2, 2},
                                                                {3, 1},
                                                                {3, 0},
                                                                {3, -1},
                                                                {2, -2},
                                                                {1, -3},
                                                                {0, -3},
                                                                {-1, -3},
                                                                {-2, -2},
                                                                {-3, -1},
                                                                {-3, 0},
                                                                {-3, 1},
                                                                {-2, 2},
                                                                {-1, 3}}};
  if (u < 3 || v < 3 || u >= width - 3 || v >= height - 3) return false;
  const int center = gray[v * width + u];
  for (int start = 0; start < 16; ++start) {
    bool all_brighter = true;
    bool all_darker = true;
    for (int k = 0; k < 9; ++k) {
      const auto &offset = kRing[(start + k) % 16];
      const int value = gray[(v + offset[1]) * width + u + offset[0]];
      all_brighter = all_brighter && value > center + threshold;
      all_darker = all_darker && value < center - threshold;
    }
    if (all_brighter || all_darker) return true;
  }
  return false;
}

DensityImage LShapeImage() {
  auto image = MakeImage(64, 64);
  // Two-pixel-thick bars meeting at (30, 30).
  for (int u = 30; u <= 45; ++u) {
    SetPixel(&image, u, 30, 1.0);
    SetPixel(&image, u, 31, 1.0);
  }
  for (int v = 30; v <= 45; ++v) {
    SetPixel(&image, 30, v, 1.0);
    SetPixel(&image, 31, v, 1.0);
  }
  return image;
}

}  // namespace

TEST_CASE("uniform image has no descriptors") {
  const auto image = MakeImage(64, 64);
  const auto result = DetectAndDescribe(image);
  CHECK_FALSE(result.image_too_small);
  CHECK(result.descriptors.empty());
}

TEST_CASE("image smaller than the patch is flagged") {
  const auto image = MakeImage(20, 20);
  const auto result = DetectAndDescribe(image);
  CHECK(result.image_too_small);
  CHECK(result.descriptors.empty());
}

TEST_CASE("an L corner is detected near its apex and matches the oracle") {
  const auto image = LShapeImage();
  const auto result = DetectAndDescribe(image);
  REQUIRE(!result.descriptors.empty());

  const auto gray = image.Quantized();
  bool near_apex = false;
  for (const auto &d : result.descriptors) {
    // Every reported keypoint passes the exhaustive segment test.
    CHECK(OracleFastCorner(gray, image.width, image.height,
                           static_cast<int>(d.keypoint.u),
                           static_cast<int>(d.keypoint.v), 20));
    if (std::abs(d.keypoint.u - 30.0) <= 2.0 &&
        std::abs(d.keypoint.v - 30.0) <= 2.0) {
      near_apex = true;
    }
    CHECK(d.keypoint.orientation > -M_PI);
    CHECK(d.keypoint.orientation <= M_PI);
  }
  CHECK(near_apex);
}

TEST_CASE("identical images yield bit-identical descriptors") {
  const auto image = LShapeImage();
  const auto a = DetectAndDescribe(image);
  const auto b = DetectAndDescribe(image);
  REQUIRE(a.descriptors.size() == b.descriptors.size());
  for (std::size_t i = 0; i < a.descriptors.size(); ++i) {
    CHECK(a.descriptors[i].bits == b.descriptors[i].bits);
    CHECK(a.descriptors[i].keypoint.u == b.descriptors[i].keypoint.u);
    CHECK(a.descriptors[i].keypoint.v == b.descriptors[i].keypoint.v);
  }
}

TEST_CASE("descriptors match across a quarter-turn rotation") {
  // A structured blob pattern with enough asymmetry to orient.
  auto image = MakeImage(96, 96);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coordinate(25, 70);
  std::vector<std::pair<int, int>> blobs;
  for (int i = 0; i < 12; ++i) {
    blobs.emplace_back(coordinate(rng), coordinate(rng));
  }
  for (const auto &[bu, bv] : blobs) {
    for (int du = 0; du < 2; ++du) {
      for (int dv = 0; dv < 2; ++dv) {
        SetPixel(&image, bu + du, bv + dv, 1.0);
      }
    }
  }

  // Rotate the image 90 degrees: (u, v) -> (height - 1 - v, u).
  auto rotated = MakeImage(image.height, image.width);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      rotated.intensity[u * rotated.width + (image.height - 1 - v)] =
          image.intensity[v * image.width + u];
      rotated.counts[u * rotated.width + (image.height - 1 - v)] =
          image.counts[v * image.width + u];
    }
  }

  const auto base = DetectAndDescribe(image);
  const auto turned = DetectAndDescribe(rotated);
  REQUIRE(!base.descriptors.empty());
  REQUIRE(!turned.descriptors.empty());

  int matched = 0;
  for (const auto &d : base.descriptors) {
    const double ru = image.height - 1 - d.keypoint.v;
    const double rv = d.keypoint.u;
    for (const auto &t : turned.descriptors) {
      if (std::abs(t.keypoint.u - ru) <= 1.0 &&
          std::abs(t.keypoint.v - rv) <= 1.0) {
        if (HammingDistance(d.bits, t.bits) <= 50) ++matched;
        break;
      }
    }
  }
  // Orientation compensation keeps corresponding descriptors within the
  // matching radius for most keypoints.
  CHECK(matched >= static_cast<int>(base.descriptors.size()) / 2);
  CHECK(matched >= 1);
}

TEST_CASE("max_features keeps the strongest responses") {
  const auto image = LShapeImage();
  FeatureExtractorOptions options;
  options.max_features = 2;
  const auto result = DetectAndDescribe(image, options);
  CHECK(result.descriptors.size() <= 2);
  const auto full = DetectAndDescribe(image);
  if (full.descriptors.size() >= 2) {
    CHECK(result.descriptors[0].keypoint.response >=
          result.descriptors[1].keypoint.response);
  }
}

TEST_CASE("pruning removes identical descriptor pairs entirely") {
  BinaryDescriptor a;
  BinaryDescriptor b;
  CHECK(HammingDistance(a.bits, b.bits) == 0);
  CHECK(PruneSelfSimilar({a, b}, 35).empty());
}

TEST_CASE("descriptors at 36 bits or more all survive") {
  BinaryDescriptor a;
  BinaryDescriptor b;
  for (int i = 0; i < 36; ++i) b.bits.SetBit(i);
  BinaryDescriptor c;
  for (int i = 100; i < 172; ++i) c.bits.SetBit(i);
  CHECK(HammingDistance(a.bits, b.bits) == 36);
  CHECK(HammingDistance(a.bits, c.bits) == 72);
  CHECK(HammingDistance(b.bits, c.bits) == 108);
  CHECK(PruneSelfSimilar({a, b, c}, 35).size() == 3);
}

TEST_CASE("grating images prune to a pairwise-distant set") {
  auto image = MakeImage(128, 64);
  // Vertical bars every 8 px: strongly repetitive structure.
  for (int u = 20; u < 108; u += 8) {
    for (int v = 20; v < 44; ++v) {
      SetPixel(&image, u, v, 1.0);
      SetPixel(&image, u + 1, v, 1.0);
    }
  }
  const auto detected = DetectAndDescribe(image);
  REQUIRE(detected.descriptors.size() >= 2);
  const auto pruned = PruneSelfSimilar(detected.descriptors, 35);
  CHECK(pruned.size() < detected.descriptors.size());

  // Brute-force all-pairs oracle on the retained set.
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    for (std::size_t j = i + 1; j < pruned.size(); ++j) {
      CHECK(HammingDistance(pruned[i].bits, pruned[j].bits) > 35);
    }
  }

  // Idempotence.
  const auto again = PruneSelfSimilar(pruned, 35);
  CHECK(again.size() == pruned.size());
}

TEST_CASE("hamming distance on synthetic words") {
  Descriptor256 a;
  Descriptor256 b;
  CHECK(HammingDistance(a, b) == 0);
  b.SetBit(0);
  b.SetBit(77);
  b.SetBit(255);
  CHECK(HammingDistance(a, b) == 3);
  CHECK(a.Bit(0) == false);
  CHECK(b.Bit(77) == true);
}
