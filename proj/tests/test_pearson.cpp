#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "hashtag/error.hpp"
#include "hashtag/pearson.hpp"
#include "hashtag/rng.hpp"

using namespace hashtag;
using namespace hashtag::pearson;

namespace {

// Reference SplitMix64, written out from its published constants.
struct RefSplitMix {
  std::uint64_t s;
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

std::array<std::uint8_t, 256> ref_table(std::uint64_t seed) {
  std::array<std::uint8_t, 256> t{};
  std::iota(t.begin(), t.end(), 0);
  RefSplitMix rng{seed};
  for (int i = 255; i >= 1; --i) {
    const auto j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)]);
  }
  return t;
}

std::uint8_t ref_hash(const std::array<std::uint8_t, 256>& t,
                      const std::vector<std::uint8_t>& s) {
  std::uint8_t h = 0;
  for (auto x : s) h = t[h ^ x];
  return h;
}

std::vector<std::uint8_t> random_stream(SplitMix64& rng, std::size_t n) {
  std::vector<std::uint8_t> s(n);
  for (auto& x : s) x = static_cast<std::uint8_t>(rng.next());
  return s;
}

}  // namespace

TEST_CASE("SplitMix64 matches the reference sequence") {
  SplitMix64 rng(0);
  CHECK(rng.next() == 0xE220A8397B1DCDAFULL);
  RefSplitMix ref{12345};
  SplitMix64 ours(12345);
  for (int i = 0; i < 100; ++i) CHECK(ours.next() == ref.next());
}

TEST_CASE("gen_table: permutation, determinism, reference shuffle") {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xFFFFFFFFFFFFFFFFULL}) {
    const auto t = gen_table(seed);
    CHECK(t.is_permutation());
    CHECK(t.seed == seed);
    auto sorted = t.table;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 256; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(gen_table(seed) == t);
    CHECK(t.table == ref_table(seed));
  }
  int differing = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    if (gen_table(2 * s).table != gen_table(2 * s + 1).table) ++differing;
  }
  CHECK(differing == 100);
}

TEST_CASE("HashTable::is_permutation rejects duplicates") {
  auto t = identity_table();
  CHECK(t.is_permutation());
  t.table[3] = 4;
  CHECK_FALSE(t.is_permutation());
}

TEST_CASE("hash_stream: identity-table algebra") {
  const auto id = identity_table();
  for (int x = 0; x < 256; ++x) {
    const std::vector<std::uint8_t> s{static_cast<std::uint8_t>(x)};
    CHECK(hash_stream(id, s) == x);
  }
  for (int a = 0; a < 256; a += 17) {
    for (int b = 0; b < 256; b += 13) {
      const std::vector<std::uint8_t> s{static_cast<std::uint8_t>(a),
                                        static_cast<std::uint8_t>(b)};
      CHECK(hash_stream(id, s) == (a ^ b));
    }
  }
}

TEST_CASE("hash_stream: empty stream is rejected") {
  const std::vector<std::uint8_t> empty;
  CHECK_THROWS_AS(hash_stream(gen_table(1), empty), Error);
  CHECK_THROWS_AS(hash_wide(1, empty, 1), Error);
}

TEST_CASE("hash_stream: agrees with the reference fold") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto seed = rng.next();
    const auto s = random_stream(rng, 1 + rng.below(300));
    CHECK(hash_stream(gen_table(seed), s) == ref_hash(ref_table(seed), s));
  }
}

TEST_CASE("fold is invariant under re-chunking") {
  SplitMix64 rng(5);
  const auto t = gen_table(9);
  const auto s = random_stream(rng, 200);
  const std::span<const std::uint8_t> all(s);
  const auto whole = hash_stream(t, s);
  for (std::size_t cut : {std::size_t{1}, std::size_t{50}, std::size_t{199}}) {
    const auto h = fold(t, fold(t, 0, all.first(cut)), all.subspan(cut));
    CHECK(h == whole);
  }
}

TEST_CASE("single alteration never collides (exhaustive positions and values)") {
  SplitMix64 rng(11);
  std::uint64_t checked = 0, collisions = 0;
  for (std::size_t len : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{64}}) {
    for (int rep = 0; rep < 2; ++rep) {
      const auto t = gen_table(rng.next());
      auto s = random_stream(rng, len);
      const auto h = hash_stream(t, s);
      for (std::size_t pos = 0; pos < len; ++pos) {
        const auto orig = s[pos];
        for (int v = 0; v < 256; ++v) {
          if (v == orig) continue;
          s[pos] = static_cast<std::uint8_t>(v);
          ++checked;
          if (hash_stream(t, s) == h) ++collisions;
        }
        s[pos] = orig;
      }
    }
  }
  CHECK(checked == 2 * 255 * (1 + 2 + 5 + 64));
  CHECK(collisions == 0);
}

TEST_CASE("single alteration, long streams, random tables") {
  SplitMix64 rng(2024);
  int collisions = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto t = gen_table(rng.next());
    auto s = random_stream(rng, 1000);
    const auto h = hash_stream(t, s);
    const auto pos = rng.below(1000);
    s[pos] = static_cast<std::uint8_t>(s[pos] + 1 + rng.below(255));
    if (hash_stream(t, s) == h) ++collisions;
  }
  CHECK(collisions == 0);
}

TEST_CASE("hash_wide: digits follow the widening rule") {
  SplitMix64 rng(8);
  const auto s = random_stream(rng, 40);
  const std::uint64_t seed = 0xABCDEF;
  CHECK(hash_wide(seed, s, 1).digits ==
        std::vector<std::uint8_t>{hash_stream(gen_table(seed), s)});
  const auto w = hash_wide(seed, s, 4);
  REQUIRE(w.width_units() == 4);
  for (int j = 0; j < 4; ++j) {
    auto sj = s;
    sj[0] = static_cast<std::uint8_t>(sj[0] + j);
    CHECK(w.digits[static_cast<std::size_t>(j)] ==
          ref_hash(ref_table(seed ^ static_cast<std::uint64_t>(j)), sj));
  }
  CHECK_THROWS_AS(hash_wide(seed, s, 0), Error);

  // Any single alteration changes digit 0.
  auto t = s;
  for (std::size_t pos = 0; pos < t.size(); ++pos) {
    t[pos] ^= 0x40;
    CHECK(hash_wide(seed, t, 3).digits[0] != w.digits[0]);
    t[pos] ^= 0x40;
  }
}

TEST_CASE("table export and import") {
  const auto t = gen_table(0x0102030405060708ULL);
  const auto raw = export_table(t);
  REQUIRE(raw.size() == 256);
  CHECK(std::equal(raw.begin(), raw.end(), t.table.begin()));
  const auto seeded = export_seeded_table(t);
  REQUIRE(seeded.size() == 264);
  CHECK(seeded[0] == 0x08);
  CHECK(seeded[7] == 0x01);
  CHECK(import_seeded_table(seeded) == t);
  auto bad = seeded;
  std::swap(bad[8], bad[9]);
  bad[9] = bad[8];  // duplicate entry: no longer a permutation
  CHECK_THROWS_AS(import_seeded_table(bad), Error);
  CHECK_THROWS_AS(import_seeded_table(std::span(seeded).first(100)), Error);
}

TEST_CASE("collision_experiment: guards") {
  CHECK_THROWS_AS(collision_experiment(100, 1, 10, 1), Error);
  CHECK_THROWS_AS(collision_experiment(100, 0, 10, 1), Error);
  CHECK_THROWS_AS(collision_experiment(100, 101, 10, 1), Error);
  CHECK_THROWS_AS(collision_experiment(100, 2, 0, 1), Error);
}

TEST_CASE("collision_experiment: result does not depend on sharding") {
  const auto a = collision_experiment(200, 3, 20000, 99, 1);
  const auto b = collision_experiment(200, 3, 20000, 99, 3);
  const auto c = collision_experiment(200, 3, 20000, 99, 7);
  CHECK(a.collisions == b.collisions);
  CHECK(a.collisions == c.collisions);
  CHECK(a.trials == 20000);
}

TEST_CASE("collision_experiment: rate near 1/255 at moderate trial counts") {
  // Five standard errors around 1/255 at 2e5 trials.
  const auto r = collision_experiment(1000, 2, 200000, 7);
  const double p = 1.0 / 255.0;
  const double se = std::sqrt(p * (1 - p) / 200000.0);
  CHECK(r.rate() > p - 5 * se);
  CHECK(r.rate() < p + 5 * se);
}

namespace {

// Brute force over every permutation of a 2^bits alphabet, every stream,
// every position pair m < n, every new value at m except the original, and
// every value at n.
ExhaustiveCount brute_force(int bits, std::size_t len) {
  const int a = 1 << bits;
  std::vector<int> perm(static_cast<std::size_t>(a));
  std::iota(perm.begin(), perm.end(), 0);
  ExhaustiveCount c;
  std::size_t streams = 1;
  for (std::size_t i = 0; i < len; ++i) streams *= static_cast<std::size_t>(a);
  auto h = [&](const std::vector<int>& s) {
    int v = 0;
    for (int x : s) v = perm[static_cast<std::size_t>(v ^ x)];
    return v;
  };
  do {
    for (std::size_t code = 0; code < streams; ++code) {
      std::vector<int> s(len);
      std::size_t rest = code;
      for (auto& x : s) {
        x = static_cast<int>(rest % static_cast<std::size_t>(a));
        rest /= static_cast<std::size_t>(a);
      }
      const int base = h(s);
      for (std::size_t m = 0; m < len; ++m) {
        for (std::size_t n = m + 1; n < len; ++n) {
          auto t = s;
          for (int vm = 0; vm < a; ++vm) {
            if (vm == s[m]) continue;
            t[m] = vm;
            for (int vn = 0; vn < a; ++vn) {
              t[n] = vn;
              ++c.total;
              if (h(t) == base) ++c.collisions;
            }
          }
        }
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return c;
}

}  // namespace

TEST_CASE("exhaustive two-alteration count is exactly 1/alphabet") {
  for (auto [bits, len] : {std::pair{2, std::size_t{3}}, std::pair{1, std::size_t{4}},
                           std::pair{2, std::size_t{2}}}) {
    const auto got = exhaustive_two_alteration(bits, len);
    const auto want = brute_force(bits, len);
    CHECK(got.total == want.total);
    CHECK(got.collisions == want.collisions);
    CHECK(got.collisions * (1u << bits) == got.total);
  }
  CHECK_THROWS_AS(exhaustive_two_alteration(2, 1), Error);
  CHECK_THROWS_AS(exhaustive_two_alteration(4, 3), Error);
}
