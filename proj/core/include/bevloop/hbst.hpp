#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <set>
#include <vector>

#include "bevloop/features.hpp"

namespace bevloop {

struct DescriptorMatch {
  Keypoint query;
  Keypoint reference;
  int hamming = 0;
};

/// All accepted matches between one query map and one reference map.
struct MatchVote {
  int query_map = 0;
  int reference_map = 0;
  std::vector<DescriptorMatch> pairs;
};

/// Hamming-embedding binary search tree. Descriptors route by single bit
/// tests (each bit used at most once per path, so depth <= 256); leaves hold
/// up to `leaf_capacity` descriptors and split on the bit that partitions
/// them most evenly. Single writer; concurrent reads are safe between writes.
class DescriptorDatabase {
 public:
  explicit DescriptorDatabase(int leaf_capacity = 100);
  DescriptorDatabase(DescriptorDatabase &&) noexcept;
  DescriptorDatabase &operator=(DescriptorDatabase &&) noexcept;
  ~DescriptorDatabase();

  /// Inserts one map's descriptors. All entries must share a map index that
  /// has not been inserted before; an empty list is a no-op.
  void Insert(const std::vector<BinaryDescriptor> &descriptors);

  /// Routes each query descriptor to its leaf, takes the minimum-Hamming
  /// stored descriptor there, and keeps it when within `match_threshold`
  /// bits. Results are grouped per reference map, ordered by map index.
  /// Reference maps within `exclude_recent` indices of the query map are
  /// suppressed; pass a negative value to disable (cross-session queries).
  std::vector<MatchVote> Query(const std::vector<BinaryDescriptor> &descriptors,
                               int match_threshold = 50,
                               int exclude_recent = 1) const;

  void Save(std::ostream &out) const;
  void Save(const std::filesystem::path &path) const;
  static DescriptorDatabase Load(std::istream &in);
  static DescriptorDatabase Load(const std::filesystem::path &path);

  std::size_t size() const { return descriptor_count_; }
  bool empty() const { return descriptor_count_ == 0; }
  const std::set<int> &inserted_maps() const { return inserted_maps_; }

  struct Stats {
    int max_depth = 0;
    std::size_t leaf_count = 0;
    std::size_t overflow_leaf_count = 0;
    std::size_t max_leaf_size = 0;
    int root_split_bit = -1;
  };
  Stats ComputeStats() const;

  int leaf_capacity() const { return leaf_capacity_; }

  struct Node;  // defined in hbst.cpp

 private:
  void InsertOne(const BinaryDescriptor &descriptor);

  std::unique_ptr<Node> root_;
  int leaf_capacity_;
  std::size_t descriptor_count_ = 0;
  std::set<int> inserted_maps_;
};

}  // namespace bevloop
