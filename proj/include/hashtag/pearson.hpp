#pragma once

// Pearson hashing over byte streams: h0 = 0, h <- T[h ^ x] for every unit x,
// where T is a secret permutation of 0..255.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace hashtag::pearson {

struct HashTable {
  std::array<std::uint8_t, 256> table{};
  std::uint64_t seed = 0;

  std::uint8_t operator[](std::uint8_t i) const { return table[i]; }
  bool is_permutation() const;
  friend bool operator==(const HashTable&, const HashTable&) = default;
};

// Fisher-Yates shuffle of 0..255 driven by SplitMix64(seed):
//   for i = 255 .. 1: j = next() % (i + 1); swap(t[i], t[j])
HashTable gen_table(std::uint64_t seed);

// Identity permutation; handy for algebraic checks.
HashTable identity_table();

struct HashValue {
  std::vector<std::uint8_t> digits;

  std::size_t width_units() const { return digits.size(); }
  friend bool operator==(const HashValue&, const HashValue&) = default;
};

// Continues a Pearson fold from state h. Exposed so callers can hash a stream
// in chunks: fold(fold(h, a), b) == fold(h, a ++ b).
std::uint8_t fold(const HashTable& table, std::uint8_t h,
                  std::span<const std::uint8_t> stream);

// 8-bit Pearson hash; throws on an empty stream.
std::uint8_t hash_stream(const HashTable& table,
                         std::span<const std::uint8_t> stream);

// Widened hash: digit j hashes the stream with table gen_table(seed ^ j) and
// the first unit replaced by (x1 + j) mod 256. Width 1 is hash_stream with
// gen_table(seed).
HashValue hash_wide(std::uint64_t seed, std::span<const std::uint8_t> stream,
                    int width_units);

// Raw table export (256 bytes) and the seeded variant used when a table is
// shipped alongside a signature (8-byte little-endian seed, then 256 bytes).
std::vector<std::uint8_t> export_table(const HashTable& table);
std::vector<std::uint8_t> export_seeded_table(const HashTable& table);
HashTable import_seeded_table(std::span<const std::uint8_t> bytes);

// Monte-Carlo collision rate: per trial (rng = SplitMix64(seed ^ trial)) draw
// a random table and a random stream of `len` bytes, replace `k` distinct
// random positions with values different from the originals, and count
// equal hashes. k = 1 is rejected: that case never collides.
struct CollisionResult {
  std::uint64_t collisions = 0;
  std::uint64_t trials = 0;
  double rate() const {
    return trials ? static_cast<double>(collisions) / static_cast<double>(trials)
                  : 0.0;
  }
};

CollisionResult collision_experiment(std::size_t len, std::size_t k,
                                     std::uint64_t trials, std::uint64_t seed,
                                     unsigned workers = 0);

// Exhaustive two-alteration count for a miniature Pearson analogue over the
// alphabet {0 .. 2^bits - 1}, summed over every permutation table of that
// alphabet, every stream of length `len`, every position pair m < n, every
// value of unit m other than the original, and every value of unit n.
// Exactly one value of unit n restores the hash, so collisions / total is
// exactly 2^-bits.
struct ExhaustiveCount {
  std::uint64_t collisions = 0;
  std::uint64_t total = 0;
};
ExhaustiveCount exhaustive_two_alteration(int alphabet_bits, std::size_t len);

}  // namespace hashtag::pearson
