#include "bevloop/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

namespace bevloop {

int HammingDistance(const Descriptor256 &a, const Descriptor256 &b) {
  int distance = 0;
  for (int w = 0; w < 4; ++w) {
    distance += std::popcount(a.words[w] ^ b.words[w]);
  }
  return distance;
}

namespace {

constexpr int kBorder = 16;        // keypoints need a 16 px margin
constexpr int kPatchRadius = 15;   // orientation centroid disc
constexpr int kPatternRadius = 13; // comparison points stay inside the patch
                                   // under any rotation

// Bresenham circle of radius 3 used by the segment test.
constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, 3},
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

struct PatternPair {
  int ax, ay, bx, by;
};

// The 256 comparison pairs are drawn once from a fixed-seed mt19937 (the
// standard mandates its output sequence, so every build sees the same table).
constexpr std::uint32_t kDescriptorPatternSeed = 7919u;

const std::array<PatternPair, 256> &DescriptorPattern() {
  static const std::array<PatternPair, 256> pattern = [] {
    std::mt19937 rng(kDescriptorPatternSeed);
    const auto draw_point = [&rng](int *x, int *y) {
      while (true) {
        const int px = static_cast<int>(rng() % (2 * kPatternRadius + 1)) -
                       kPatternRadius;
        const int py = static_cast<int>(rng() % (2 * kPatternRadius + 1)) -
                       kPatternRadius;
        if (px * px + py * py <= kPatternRadius * kPatternRadius) {
          *x = px;
          *y = py;
          return;
        }
      }
    };
    std::array<PatternPair, 256> out{};
    for (auto &pair : out) {
      do {
        draw_point(&pair.ax, &pair.ay);
        draw_point(&pair.bx, &pair.by);
      } while (pair.ax == pair.bx && pair.ay == pair.by);
    }
    return out;
  }();
  return pattern;
}

class Image8 {
 public:
  Image8(std::vector<std::uint8_t> pixels, int width, int height)
      : pixels_(std::move(pixels)), width_(width), height_(height) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int At(int u, int v) const { return pixels_[v * width_ + u]; }

  Image8 BoxBlurred5() const {
    std::vector<std::uint8_t> out(pixels_.size());
    for (int v = 0; v < height_; ++v) {
      for (int u = 0; u < width_; ++u) {
        int sum = 0;
        for (int dv = -2; dv <= 2; ++dv) {
          const int vv = std::clamp(v + dv, 0, height_ - 1);
          for (int du = -2; du <= 2; ++du) {
            const int uu = std::clamp(u + du, 0, width_ - 1);
            sum += pixels_[vv * width_ + uu];
          }
        }
        out[v * width_ + u] = static_cast<std::uint8_t>(sum / 25);
      }
    }
    return Image8(std::move(out), width_, height_);
  }

 private:
  std::vector<std::uint8_t> pixels_;
  int width_;
  int height_;
};

// Segment test: 9 contiguous circle pixels all brighter or all darker than
// the center by more than the threshold.
bool IsFastCorner(const Image8 &image, int u, int v, int threshold) {
  const int center = image.At(u, v);
  int ring[16];
  for (int i = 0; i < 16; ++i) {
    ring[i] = image.At(u + kCircle[i][0], v + kCircle[i][1]);
  }
  int brighter_run = 0;
  int darker_run = 0;
  for (int i = 0; i < 16 + 9; ++i) {
    const int value = ring[i % 16];
    brighter_run = value > center + threshold ? brighter_run + 1 : 0;
    darker_run = value < center - threshold ? darker_run + 1 : 0;
    if (brighter_run >= 9 || darker_run >= 9) return true;
  }
  return false;
}

double FastScore(const Image8 &image, int u, int v, int threshold) {
  const int center = image.At(u, v);
  double score = 0.0;
  for (const auto &offset : kCircle) {
    const int diff = std::abs(image.At(u + offset[0], v + offset[1]) - center);
    if (diff > threshold) score += diff - threshold;
  }
  return score;
}

double IntensityCentroidAngle(const Image8 &image, int u, int v) {
  double m10 = 0.0;
  double m01 = 0.0;
  for (int dv = -kPatchRadius; dv <= kPatchRadius; ++dv) {
    const int du_max = static_cast<int>(
        std::sqrt(static_cast<double>(kPatchRadius * kPatchRadius - dv * dv)));
    for (int du = -du_max; du <= du_max; ++du) {
      const int value = image.At(u + du, v + dv);
      m10 += du * value;
      m01 += dv * value;
    }
  }
  if (m10 == 0.0 && m01 == 0.0) return 0.0;
  return WrapAngle(std::atan2(m01, m10));
}

Descriptor256 SteeredBrief(const Image8 &blurred, int u, int v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Descriptor256 bits;
  const auto &pattern = DescriptorPattern();
  for (int i = 0; i < 256; ++i) {
    const auto &p = pattern[i];
    const int ax = static_cast<int>(std::lround(p.ax * c - p.ay * s));
    const int ay = static_cast<int>(std::lround(p.ax * s + p.ay * c));
    const int bx = static_cast<int>(std::lround(p.bx * c - p.by * s));
    const int by = static_cast<int>(std::lround(p.bx * s + p.by * c));
    if (blurred.At(u + ax, v + ay) < blurred.At(u + bx, v + by)) {
      bits.SetBit(i);
    }
  }
  return bits;
}

}  // namespace

FeatureExtraction DetectAndDescribe(const DensityImage &image,
                                    const FeatureExtractorOptions &options,
                                    int map_index) {
  FeatureExtraction result;
  if (image.width < 2 * kBorder || image.height < 2 * kBorder) {
    result.image_too_small = true;
    return result;
  }
  const Image8 gray(image.Quantized(), image.width, image.height);

  struct Candidate {
    int u, v;
    double score;
  };
  std::vector<Candidate> candidates;
  std::vector<double> scores(static_cast<std::size_t>(image.width) *
                                 image.height,
                             0.0);
  for (int v = kBorder; v < image.height - kBorder; ++v) {
    for (int u = kBorder; u < image.width - kBorder; ++u) {
      if (!IsFastCorner(gray, u, v, options.fast_threshold)) continue;
      const double score = FastScore(gray, u, v, options.fast_threshold);
      scores[v * image.width + u] = score;
      candidates.push_back(Candidate{u, v, score});
    }
  }

  // 3x3 non-maximum suppression; ties resolved toward smaller (v, u) so the
  // survivor set is unique.
  std::vector<Candidate> peaks;
  for (const auto &cand : candidates) {
    bool is_peak = true;
    for (int dv = -1; dv <= 1 && is_peak; ++dv) {
      for (int du = -1; du <= 1; ++du) {
        if (du == 0 && dv == 0) continue;
        const double other = scores[(cand.v + dv) * image.width + cand.u + du];
        if (other > cand.score ||
            (other == cand.score && (dv < 0 || (dv == 0 && du < 0)))) {
          is_peak = false;
          break;
        }
      }
    }
    if (is_peak) peaks.push_back(cand);
  }

  std::sort(peaks.begin(), peaks.end(), [](const auto &a, const auto &b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.v != b.v) return a.v < b.v;
    return a.u < b.u;
  });
  if (static_cast<int>(peaks.size()) > options.max_features) {
    peaks.resize(options.max_features);
  }

  const Image8 blurred = gray.BoxBlurred5();
  result.descriptors.reserve(peaks.size());
  for (const auto &peak : peaks) {
    BinaryDescriptor descriptor;
    descriptor.keypoint.u = peak.u;
    descriptor.keypoint.v = peak.v;
    descriptor.keypoint.response = peak.score;
    descriptor.keypoint.orientation =
        IntensityCentroidAngle(gray, peak.u, peak.v);
    descriptor.bits =
        SteeredBrief(blurred, peak.u, peak.v, descriptor.keypoint.orientation);
    descriptor.map_index = map_index;
    result.descriptors.push_back(descriptor);
  }
  return result;
}

std::vector<BinaryDescriptor> PruneSelfSimilar(
    const std::vector<BinaryDescriptor> &descriptors, int prune_threshold) {
  const std::size_t n = descriptors.size();
  std::vector<char> drop(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (HammingDistance(descriptors[i].bits, descriptors[j].bits) <=
          prune_threshold) {
        drop[i] = 1;
        drop[j] = 1;
      }
    }
  }
  std::vector<BinaryDescriptor> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!drop[i]) kept.push_back(descriptors[i]);
  }
  return kept;
}

}  // namespace bevloop
