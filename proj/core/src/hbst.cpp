#include "bevloop/hbst.hpp"

#include <array>
#include <bit>
#include <bitset>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bevloop {

struct DescriptorDatabase::Node {
  // Internal when split_bit >= 0, leaf otherwise.
  int split_bit = -1;
  std::unique_ptr<Node> child[2];
  std::vector<BinaryDescriptor> bucket;
  bool overflow = false;  // no bit separates the bucket; capacity waived
};

namespace {

constexpr char kMagic[4] = {'H', 'B', 'S', 'T'};
constexpr std::uint16_t kFormatVersion = 1;

std::uint32_t Crc32(const std::uint8_t *data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

// Little-endian serialization helpers.
class ByteWriter {
 public:
  void U8(std::uint8_t v) { bytes_.push_back(v); }
  void U16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back((v >> (8 * i)) & 0xFFu);
  }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back((v >> (8 * i)) & 0xFFu);
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back((v >> (8 * i)) & 0xFFu);
  }
  void F64(double v) {
    std::uint64_t raw;
    std::memcpy(&raw, &v, sizeof(raw));
    U64(raw);
  }
  const std::vector<std::uint8_t> &bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes)
      : bytes_(std::move(bytes)) {}

  std::uint8_t U8() { return Next(); }
  std::uint16_t U16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= std::uint16_t(Next()) << (8 * i);
    return v;
  }
  std::uint32_t U32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(Next()) << (8 * i);
    return v;
  }
  std::uint64_t U64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(Next()) << (8 * i);
    return v;
  }
  double F64() {
    const std::uint64_t raw = U64();
    double v;
    std::memcpy(&v, &raw, sizeof(v));
    return v;
  }
  std::size_t position() const { return position_; }
  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::uint8_t> &bytes() const { return bytes_; }

 private:
  std::uint8_t Next() {
    if (position_ >= bytes_.size()) {
      throw std::runtime_error("hbst load error: truncated file");
    }
    return bytes_[position_++];
  }

  std::vector<std::uint8_t> bytes_;
  std::size_t position_ = 0;
};

enum NodeTag : std::uint8_t {
  kInternal = 0,
  kLeaf = 1,
  kOverflowLeaf = 2,
};

}  // namespace

DescriptorDatabase::DescriptorDatabase(int leaf_capacity)
    : root_(std::make_unique<Node>()), leaf_capacity_(leaf_capacity) {
  if (leaf_capacity < 1) {
    throw std::invalid_argument("leaf capacity must be at least 1");
  }
}

DescriptorDatabase::DescriptorDatabase(DescriptorDatabase &&) noexcept =
    default;
DescriptorDatabase &DescriptorDatabase::operator=(
    DescriptorDatabase &&) noexcept = default;
DescriptorDatabase::~DescriptorDatabase() = default;

void DescriptorDatabase::Insert(
    const std::vector<BinaryDescriptor> &descriptors) {
  if (descriptors.empty()) return;
  const int map_index = descriptors.front().map_index;
  for (const auto &d : descriptors) {
    if (d.map_index != map_index) {
      throw std::invalid_argument(
          "insert expects descriptors from a single map");
    }
  }
  if (inserted_maps_.contains(map_index)) {
    throw std::invalid_argument("map " + std::to_string(map_index) +
                                " already inserted");
  }
  inserted_maps_.insert(map_index);
  for (const auto &d : descriptors) {
    InsertOne(d);
  }
}

void DescriptorDatabase::InsertOne(const BinaryDescriptor &descriptor) {
  std::bitset<256> used_bits;
  Node *node = root_.get();
  while (node->split_bit >= 0) {
    used_bits.set(node->split_bit);
    node = node->child[descriptor.bits.Bit(node->split_bit)].get();
  }
  node->bucket.push_back(descriptor);
  ++descriptor_count_;

  while (!node->overflow &&
         static_cast<int>(node->bucket.size()) > leaf_capacity_) {
    // Max-entropy split: pick the unused bit whose 0/1 partition of the
    // bucket is most balanced, ties toward the lowest bit index.
    const std::size_t total = node->bucket.size();
    int best_bit = -1;
    std::size_t best_balance = 0;
    for (int bit = 0; bit < 256; ++bit) {
      if (used_bits.test(bit)) continue;
      std::size_t ones = 0;
      for (const auto &d : node->bucket) ones += d.bits.Bit(bit);
      const std::size_t balance = std::min(ones, total - ones);
      if (balance > best_balance) {
        best_balance = balance;
        best_bit = bit;
      }
    }
    if (best_bit < 0 || best_balance == 0) {
      // No remaining bit separates the bucket; the leaf grows past capacity.
      node->overflow = true;
      return;
    }
    node->split_bit = best_bit;
    node->child[0] = std::make_unique<Node>();
    node->child[1] = std::make_unique<Node>();
    for (const auto &d : node->bucket) {
      node->child[d.bits.Bit(best_bit)]->bucket.push_back(d);
    }
    node->bucket.clear();
    node->bucket.shrink_to_fit();
    used_bits.set(best_bit);
    // Descend into the fuller child in case it still exceeds capacity.
    node = node->child[0]->bucket.size() > node->child[1]->bucket.size()
               ? node->child[0].get()
               : node->child[1].get();
  }
}

std::vector<MatchVote> DescriptorDatabase::Query(
    const std::vector<BinaryDescriptor> &descriptors, int match_threshold,
    int exclude_recent) const {
  std::vector<MatchVote> votes;
  if (descriptors.empty() || empty()) return votes;
  const int query_map = descriptors.front().map_index;

  std::map<int, MatchVote> by_reference;
  for (const auto &query : descriptors) {
    const Node *node = root_.get();
    while (node->split_bit >= 0) {
      node = node->child[query.bits.Bit(node->split_bit)].get();
    }
    const BinaryDescriptor *best = nullptr;
    int best_distance = 257;
    for (const auto &stored : node->bucket) {
      const int distance = HammingDistance(query.bits, stored.bits);
      if (distance < best_distance) {
        best_distance = distance;
        best = &stored;
      }
    }
    if (best == nullptr || best_distance > match_threshold) continue;
    // Exclusion only applies in-session (non-negative window): the query and
    // reference index spaces are unrelated across sessions.
    if (exclude_recent >= 0 &&
        (best->map_index == query_map ||
         std::abs(best->map_index - query_map) <= exclude_recent)) {
      continue;
    }
    auto &vote = by_reference[best->map_index];
    vote.query_map = query_map;
    vote.reference_map = best->map_index;
    vote.pairs.push_back(
        DescriptorMatch{query.keypoint, best->keypoint, best_distance});
  }

  votes.reserve(by_reference.size());
  for (auto &[index, vote] : by_reference) {
    votes.push_back(std::move(vote));
  }
  return votes;
}

namespace {

void SerializeNode(const DescriptorDatabase::Node *node, ByteWriter *writer);

}  // namespace

// Defined out of line so the nested Node type is complete.
void DescriptorDatabase::Save(std::ostream &out) const {
  ByteWriter writer;
  for (char c : kMagic) writer.U8(static_cast<std::uint8_t>(c));
  writer.U16(kFormatVersion);
  writer.U64(descriptor_count_);
  writer.U32(static_cast<std::uint32_t>(leaf_capacity_));
  writer.U32(static_cast<std::uint32_t>(inserted_maps_.size()));
  for (const int index : inserted_maps_) {
    writer.U32(static_cast<std::uint32_t>(index));
  }
  SerializeNode(root_.get(), &writer);
  const std::uint32_t crc = Crc32(writer.bytes().data(), writer.bytes().size());
  writer.U32(crc);
  out.write(reinterpret_cast<const char *>(writer.bytes().data()),
            static_cast<std::streamsize>(writer.bytes().size()));
  if (!out) {
    throw std::runtime_error("hbst save error: write failed");
  }
}

void DescriptorDatabase::Save(const std::filesystem::path &path) const {
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  Save(file);
}

namespace {

void SerializeNode(const DescriptorDatabase::Node *node, ByteWriter *writer) {
  if (node->split_bit >= 0) {
    writer->U8(kInternal);
    writer->U8(static_cast<std::uint8_t>(node->split_bit));
    SerializeNode(node->child[0].get(), writer);
    SerializeNode(node->child[1].get(), writer);
    return;
  }
  writer->U8(node->overflow ? kOverflowLeaf : kLeaf);
  writer->U32(static_cast<std::uint32_t>(node->bucket.size()));
  for (const auto &d : node->bucket) {
    for (const std::uint64_t word : d.bits.words) writer->U64(word);
    writer->F64(d.keypoint.u);
    writer->F64(d.keypoint.v);
    writer->F64(d.keypoint.orientation);
    writer->F64(d.keypoint.response);
    writer->U32(static_cast<std::uint32_t>(d.map_index));
  }
}

std::unique_ptr<DescriptorDatabase::Node> DeserializeNode(ByteReader *reader,
                                                          int depth) {
  if (depth > 256) {
    throw std::runtime_error("hbst load error: tree deeper than 256");
  }
  auto node = std::make_unique<DescriptorDatabase::Node>();
  const std::uint8_t tag = reader->U8();
  if (tag == kInternal) {
    node->split_bit = reader->U8();
    node->child[0] = DeserializeNode(reader, depth + 1);
    node->child[1] = DeserializeNode(reader, depth + 1);
    return node;
  }
  if (tag != kLeaf && tag != kOverflowLeaf) {
    throw std::runtime_error("hbst load error: unknown node tag");
  }
  node->overflow = tag == kOverflowLeaf;
  const std::uint32_t count = reader->U32();
  node->bucket.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    BinaryDescriptor d;
    for (auto &word : d.bits.words) word = reader->U64();
    d.keypoint.u = reader->F64();
    d.keypoint.v = reader->F64();
    d.keypoint.orientation = reader->F64();
    d.keypoint.response = reader->F64();
    d.map_index = static_cast<int>(reader->U32());
    node->bucket.push_back(d);
  }
  return node;
}

}  // namespace

DescriptorDatabase DescriptorDatabase::Load(std::istream &in) {
  std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t)) {
    throw std::runtime_error("hbst load error: truncated file");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("hbst load error: bad magic");
  }
  const std::size_t payload_size = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) {
    stored_crc |= std::uint32_t(bytes[payload_size + i]) << (8 * i);
  }
  if (Crc32(bytes.data(), payload_size) != stored_crc) {
    throw std::runtime_error("hbst load error: checksum mismatch");
  }

  bytes.resize(payload_size);
  ByteReader reader(std::move(bytes));
  for (char c : kMagic) {
    (void)c;
    reader.U8();
  }
  const std::uint16_t version = reader.U16();
  if (version != kFormatVersion) {
    throw std::runtime_error("hbst load error: unsupported version " +
                             std::to_string(version));
  }
  const std::uint64_t descriptor_count = reader.U64();
  const int leaf_capacity = static_cast<int>(reader.U32());
  DescriptorDatabase db(leaf_capacity);
  const std::uint32_t map_count = reader.U32();
  for (std::uint32_t i = 0; i < map_count; ++i) {
    db.inserted_maps_.insert(static_cast<int>(reader.U32()));
  }
  db.root_ = DeserializeNode(&reader, 0);
  db.descriptor_count_ = descriptor_count;
  if (reader.position() != reader.size()) {
    throw std::runtime_error("hbst load error: trailing bytes");
  }
  return db;
}

DescriptorDatabase DescriptorDatabase::Load(const std::filesystem::path &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return Load(file);
}

namespace {

void CollectStats(const DescriptorDatabase::Node *node, int depth,
                  DescriptorDatabase::Stats *stats) {
  stats->max_depth = std::max(stats->max_depth, depth);
  if (node->split_bit >= 0) {
    CollectStats(node->child[0].get(), depth + 1, stats);
    CollectStats(node->child[1].get(), depth + 1, stats);
    return;
  }
  ++stats->leaf_count;
  if (node->overflow) ++stats->overflow_leaf_count;
  stats->max_leaf_size = std::max(stats->max_leaf_size, node->bucket.size());
}

}  // namespace

DescriptorDatabase::Stats DescriptorDatabase::ComputeStats() const {
  Stats stats;
  stats.root_split_bit = root_->split_bit;
  CollectStats(root_.get(), 0, &stats);
  return stats;
}

}  // namespace bevloop
