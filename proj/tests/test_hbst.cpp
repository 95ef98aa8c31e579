#include <doctest.h>

#include <random>
#include <sstream>

#include "bevloop/hbst.hpp"

using namespace bevloop;

namespace {

Descriptor256 RandomBits(std::mt19937_64 &rng) {
  Descriptor256 bits;
  for (auto &word : bits.words) word = rng();
  return bits;
}

std::vector<BinaryDescriptor> RandomDescriptors(int count, int map_index,
                                                std::mt19937_64 &rng) {
  std::vector<BinaryDescriptor> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    BinaryDescriptor d;
    d.bits = RandomBits(rng);
    d.keypoint.u = static_cast<double>(i);
    d.keypoint.v = static_cast<double>(map_index);
    d.map_index = map_index;
    out.push_back(d);
  }
  return out;
}

Descriptor256 Flipped(Descriptor256 bits, int flips, std::mt19937_64 &rng) {
  std::vector<int> positions(256);
  for (int i = 0; i < 256; ++i) positions[i] = i;
  for (int i = 0; i < flips; ++i) {
    const int j = i + static_cast<int>(rng() % (256 - i));
    std::swap(positions[i], positions[j]);
    bits.words[positions[i] >> 6] ^= 1ULL << (positions[i] & 63);
  }
  return bits;
}

}  // namespace

TEST_CASE("a hundred descriptors stay in a single leaf") {
  std::mt19937_64 rng(3);
  DescriptorDatabase db;
  db.Insert(RandomDescriptors(100, 0, rng));
  const auto stats = db.ComputeStats();
  CHECK(stats.leaf_count == 1);
  CHECK(stats.max_depth == 0);
  CHECK(db.size() == 100);
}

TEST_CASE("the split bit maximizes partition balance") {
  // 50 descriptors with bit 7 clear, 51 with bit 7 set, everything else
  // identical: the only separating bit is 7.
  std::vector<BinaryDescriptor> descriptors;
  for (int i = 0; i < 101; ++i) {
    BinaryDescriptor d;
    if (i >= 50) d.bits.SetBit(7);
    d.map_index = 0;
    descriptors.push_back(d);
  }
  DescriptorDatabase db;
  db.Insert(descriptors);
  const auto stats = db.ComputeStats();
  CHECK(stats.root_split_bit == 7);
  CHECK(stats.max_depth == 1);

  // Entropy oracle over all 256 candidate bits.
  int best_bit = -1;
  std::size_t best_balance = 0;
  for (int bit = 0; bit < 256; ++bit) {
    std::size_t ones = 0;
    for (const auto &d : descriptors) ones += d.bits.Bit(bit);
    const std::size_t balance = std::min(ones, descriptors.size() - ones);
    if (balance > best_balance) {
      best_balance = balance;
      best_bit = bit;
    }
  }
  CHECK(best_bit == 7);
}

TEST_CASE("inserting an empty list is a no-op") {
  DescriptorDatabase db;
  db.Insert({});
  CHECK(db.empty());
}

TEST_CASE("duplicate map indices are rejected") {
  std::mt19937_64 rng(5);
  DescriptorDatabase db;
  db.Insert(RandomDescriptors(10, 4, rng));
  CHECK_THROWS_AS(db.Insert(RandomDescriptors(5, 4, rng)),
                  std::invalid_argument);
  std::vector<BinaryDescriptor> mixed = RandomDescriptors(2, 5, rng);
  mixed.push_back(RandomDescriptors(1, 6, rng)[0]);
  CHECK_THROWS_AS(db.Insert(mixed), std::invalid_argument);
}

TEST_CASE("exact matches come back at distance zero") {
  std::mt19937_64 rng(7);
  DescriptorDatabase db;
  const auto stored = RandomDescriptors(50, 0, rng);
  db.Insert(stored);
  auto query = stored;
  for (auto &d : query) d.map_index = 10;
  const auto votes = db.Query(query, 50, 1);
  REQUIRE(votes.size() == 1);
  CHECK(votes[0].reference_map == 0);
  CHECK(votes[0].query_map == 10);
  CHECK(votes[0].pairs.size() == 50);
  for (const auto &pair : votes[0].pairs) CHECK(pair.hamming == 0);
}

TEST_CASE("matches beyond the threshold are dropped") {
  DescriptorDatabase db;
  BinaryDescriptor stored;
  stored.map_index = 0;
  db.Insert({stored});

  std::mt19937_64 rng(11);
  BinaryDescriptor query;
  query.map_index = 5;
  query.bits = Flipped(stored.bits, 51, rng);
  CHECK(db.Query({query}, 50, 1).empty());

  query.bits = Flipped(stored.bits, 50, rng);
  const auto votes = db.Query({query}, 50, 1);
  REQUIRE(votes.size() == 1);
  CHECK(votes[0].pairs[0].hamming == 50);
}

TEST_CASE("recent maps are suppressed in-session") {
  std::mt19937_64 rng(13);
  DescriptorDatabase db;
  const auto map4 = RandomDescriptors(20, 4, rng);
  db.Insert(map4);

  auto query = map4;
  for (auto &d : query) d.map_index = 5;
  CHECK(db.Query(query, 50, 1).empty());       // |5-4| <= 1 suppressed
  CHECK(db.Query(query, 50, 0).size() == 1);   // only self excluded
  CHECK(db.Query(query, 50, -1).size() == 1);  // exclusion disabled
  for (auto &d : query) d.map_index = 4;
  CHECK(db.Query(query, 50, 0).empty());  // in-session self never votes
  // Cross-session mode treats an equal index as an ordinary reference.
  CHECK(db.Query(query, 50, -1).size() == 1);
}

TEST_CASE("single-leaf queries equal brute force exactly") {
  std::mt19937_64 rng(17);
  DescriptorDatabase db;
  const auto stored = RandomDescriptors(100, 0, rng);
  db.Insert(stored);
  REQUIRE(db.ComputeStats().leaf_count == 1);

  for (int probe = 0; probe < 500; ++probe) {
    BinaryDescriptor query;
    query.bits = RandomBits(rng);
    query.map_index = 99;
    int best = 257;
    for (const auto &d : stored) {
      best = std::min(best, HammingDistance(query.bits, d.bits));
    }
    const auto votes = db.Query({query}, 256, -1);
    REQUIRE(votes.size() == 1);
    CHECK(votes[0].pairs[0].hamming == best);
  }
}

TEST_CASE("stored descriptors route back to themselves") {
  std::mt19937_64 rng(19);
  DescriptorDatabase db;
  std::vector<BinaryDescriptor> all;
  for (int m = 0; m < 10; ++m) {
    auto batch = RandomDescriptors(300, m, rng);
    db.Insert(batch);
    all.insert(all.end(), batch.begin(), batch.end());
  }
  const auto stats = db.ComputeStats();
  CHECK(stats.max_depth <= 256);
  CHECK(stats.max_leaf_size <= 100);

  for (int i = 0; i < 200; ++i) {
    BinaryDescriptor query = all[(i * 13) % all.size()];
    query.map_index = 1000;
    const auto votes = db.Query({query}, 50, -1);
    REQUIRE(votes.size() == 1);
    CHECK(votes[0].pairs[0].hamming == 0);
  }
}

TEST_CASE("empty database yields empty results") {
  DescriptorDatabase db;
  std::mt19937_64 rng(23);
  CHECK(db.Query(RandomDescriptors(5, 0, rng), 50, 1).empty());
}

TEST_CASE("save and load round trip bit-exactly") {
  std::mt19937_64 rng(29);
  DescriptorDatabase db;
  for (int m = 0; m < 5; ++m) {
    db.Insert(RandomDescriptors(200, m, rng));
  }
  std::stringstream buffer;
  db.Save(buffer);
  auto loaded = DescriptorDatabase::Load(buffer);
  CHECK(loaded.size() == db.size());
  CHECK(loaded.inserted_maps() == db.inserted_maps());

  for (int probe = 0; probe < 100; ++probe) {
    const auto query = RandomDescriptors(10, 50 + probe, rng);
    const auto original = db.Query(query, 50, -1);
    const auto restored = loaded.Query(query, 50, -1);
    REQUIRE(original.size() == restored.size());
    for (std::size_t v = 0; v < original.size(); ++v) {
      CHECK(original[v].reference_map == restored[v].reference_map);
      REQUIRE(original[v].pairs.size() == restored[v].pairs.size());
      for (std::size_t p = 0; p < original[v].pairs.size(); ++p) {
        CHECK(original[v].pairs[p].hamming == restored[v].pairs[p].hamming);
        CHECK(original[v].pairs[p].reference.u ==
              restored[v].pairs[p].reference.u);
      }
    }
  }
}

TEST_CASE("empty database round trips") {
  DescriptorDatabase db;
  std::stringstream buffer;
  db.Save(buffer);
  auto loaded = DescriptorDatabase::Load(buffer);
  CHECK(loaded.empty());
}

TEST_CASE("corrupted files are rejected with named errors") {
  std::mt19937_64 rng(31);
  DescriptorDatabase db;
  db.Insert(RandomDescriptors(50, 0, rng));
  std::stringstream buffer;
  db.Save(buffer);
  const std::string bytes = buffer.str();

  SUBCASE("bad magic") {
    std::string corrupt = bytes;
    corrupt[0] = 'X';
    std::stringstream in(corrupt);
    CHECK_THROWS_WITH_AS(DescriptorDatabase::Load(in),
                         "hbst load error: bad magic", std::runtime_error);
  }
  SUBCASE("truncation") {
    std::string corrupt = bytes.substr(0, 3);
    std::stringstream in(corrupt);
    CHECK_THROWS_WITH_AS(DescriptorDatabase::Load(in),
                         "hbst load error: truncated file",
                         std::runtime_error);
  }
  SUBCASE("payload corruption fails the checksum") {
    std::string corrupt = bytes;
    corrupt[bytes.size() / 2] ^= 0x40;
    std::stringstream in(corrupt);
    CHECK_THROWS_WITH_AS(DescriptorDatabase::Load(in),
                         "hbst load error: checksum mismatch",
                         std::runtime_error);
  }
  SUBCASE("unsupported version") {
    // Patch the version field and re-stamp the checksum so only the version
    // check can fire.
    std::string corrupt = bytes;
    corrupt[4] = 99;
    auto crc32 = [](const std::string &data, std::size_t size) {
      std::uint32_t table[256];
      for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) {
          c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        }
        table[i] = c;
      }
      std::uint32_t crc = 0xFFFFFFFFu;
      for (std::size_t i = 0; i < size; ++i) {
        crc = table[(crc ^ static_cast<std::uint8_t>(data[i])) & 0xFFu] ^
              (crc >> 8);
      }
      return crc ^ 0xFFFFFFFFu;
    };
    const std::uint32_t crc = crc32(corrupt, corrupt.size() - 4);
    for (int i = 0; i < 4; ++i) {
      corrupt[corrupt.size() - 4 + i] =
          static_cast<char>((crc >> (8 * i)) & 0xFFu);
    }
    std::stringstream in(corrupt);
    CHECK_THROWS_WITH_AS(DescriptorDatabase::Load(in),
                         "hbst load error: unsupported version 99",
                         std::runtime_error);
  }
}

TEST_CASE("query cost stays within the structural bounds") {
  std::mt19937_64 rng(37);
  DescriptorDatabase db;
  for (int m = 0; m < 40; ++m) {
    db.Insert(RandomDescriptors(250, m, rng));
  }
  const auto stats = db.ComputeStats();
  CHECK(stats.max_depth <= 256);
  CHECK(stats.overflow_leaf_count == 0);
  CHECK(stats.max_leaf_size <= 100);
}

TEST_CASE("identical descriptors overflow a leaf without splitting forever") {
  std::vector<BinaryDescriptor> same(150);
  for (auto &d : same) d.map_index = 0;
  DescriptorDatabase db;
  db.Insert(same);
  const auto stats = db.ComputeStats();
  CHECK(stats.overflow_leaf_count == 1);
  CHECK(stats.max_leaf_size == 150);
  BinaryDescriptor query;
  query.map_index = 9;
  const auto votes = db.Query({query}, 50, -1);
  REQUIRE(votes.size() == 1);
  CHECK(votes[0].pairs[0].hamming == 0);
}
