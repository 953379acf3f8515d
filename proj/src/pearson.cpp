#include "hashtag/pearson.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <thread>

#include "hashtag/bytes.hpp"
#include "hashtag/error.hpp"
#include "hashtag/rng.hpp"

namespace hashtag::pearson {

bool HashTable::is_permutation() const {
  std::array<bool, 256> seen{};
  for (auto v : table) {
    if (seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

HashTable gen_table(std::uint64_t seed) {
  HashTable t;
  t.seed = seed;
  std::iota(t.table.begin(), t.table.end(), std::uint8_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 255; i > 0; --i) {
    std::swap(t.table[i], t.table[rng.below(i + 1)]);
  }
  return t;
}

HashTable identity_table() {
  HashTable t;
  std::iota(t.table.begin(), t.table.end(), std::uint8_t{0});
  return t;
}

std::uint8_t fold(const HashTable& table, std::uint8_t h,
                  std::span<const std::uint8_t> stream) {
  for (auto x : stream) h = table.table[h ^ x];
  return h;
}

std::uint8_t hash_stream(const HashTable& table,
                         std::span<const std::uint8_t> stream) {
  if (stream.empty()) throw Error("pearson: cannot hash an empty stream");
  return fold(table, 0, stream);
}

HashValue hash_wide(std::uint64_t seed, std::span<const std::uint8_t> stream,
                    int width_units) {
  if (width_units < 1) throw Error("pearson: width must be at least one unit");
  if (stream.empty()) throw Error("pearson: cannot hash an empty stream");
  HashValue out;
  out.digits.reserve(static_cast<std::size_t>(width_units));
  for (int j = 0; j < width_units; ++j) {
    const HashTable t = gen_table(seed ^ static_cast<std::uint64_t>(j));
    const auto first = static_cast<std::uint8_t>(stream[0] + j);
    out.digits.push_back(fold(t, t.table[first], stream.subspan(1)));
  }
  return out;
}

std::vector<std::uint8_t> export_table(const HashTable& table) {
  return {table.table.begin(), table.table.end()};
}

std::vector<std::uint8_t> export_seeded_table(const HashTable& table) {
  ByteWriter w;
  w.u64(table.seed);
  w.bytes(table.table);
  return std::move(w).take();
}

HashTable import_seeded_table(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "hash table");
  HashTable t;
  t.seed = r.u64();
  const auto raw = r.bytes(256);
  r.expect_end();
  std::copy(raw.begin(), raw.end(), t.table.begin());
  if (!t.is_permutation()) r.fail("table is not a permutation of 0..255");
  return t;
}

namespace {

std::uint64_t collisions_in_range(const HashTable& table, std::size_t len,
                                  std::size_t k, std::uint64_t seed,
                                  std::uint64_t begin, std::uint64_t end) {
  std::vector<std::uint8_t> original(len), altered(len);
  std::vector<std::size_t> positions;
  positions.reserve(k);
  std::uint64_t collisions = 0;
  for (std::uint64_t trial = begin; trial < end; ++trial) {
    SplitMix64 rng(seed ^ trial);
    for (std::size_t i = 0; i < len; i += 8) {
      std::uint64_t word = rng.next();
      for (std::size_t b = i; b < std::min(len, i + 8); ++b, word >>= 8) {
        original[b] = static_cast<std::uint8_t>(word);
      }
    }
    positions.clear();
    while (positions.size() < k) {
      const std::size_t p = rng.below(len);
      if (std::find(positions.begin(), positions.end(), p) == positions.end()) {
        positions.push_back(p);
      }
    }
    altered = original;
    for (auto p : positions) {
      altered[p] = static_cast<std::uint8_t>(original[p] + 1 + rng.below(255));
    }
    const std::size_t first = *std::min_element(positions.begin(), positions.end());
    const std::span<const std::uint8_t> o(original), a(altered);
    const std::uint8_t prefix = fold(table, 0, o.first(first));
    if (fold(table, prefix, o.subspan(first)) ==
        fold(table, prefix, a.subspan(first))) {
      ++collisions;
    }
  }
  return collisions;
}

}  // namespace

CollisionResult collision_experiment(std::size_t len, std::size_t k,
                                     std::uint64_t trials, std::uint64_t seed,
                                     unsigned workers) {
  if (k == 1) {
    throw Error("collision experiment: k = 1 never collides; use k >= 2");
  }
  if (k < 2 || k > len) {
    throw Error("collision experiment: need 2 <= k <= len (k = " +
                std::to_string(k) + ", len = " + std::to_string(len) + ")");
  }
  if (trials == 0) throw Error("collision experiment: trials must be >= 1");

  const HashTable table = gen_table(mix64(seed));
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, trials));

  std::vector<std::uint64_t> partial(workers, 0);
  std::vector<std::thread> pool;
  const std::uint64_t chunk = (trials + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::uint64_t begin = std::min(trials, w * chunk);
    const std::uint64_t end = std::min(trials, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      partial[w] = collisions_in_range(table, len, k, seed, begin, end);
    });
  }
  for (auto& t : pool) t.join();

  CollisionResult result;
  result.trials = trials;
  for (auto c : partial) result.collisions += c;
  return result;
}

ExhaustiveCount exhaustive_two_alteration(int alphabet_bits, std::size_t len) {
  if (alphabet_bits < 1 || alphabet_bits > 3) {
    throw Error("exhaustive enumeration supports 1..3 alphabet bits");
  }
  if (len < 2 || len > 4) throw Error("exhaustive enumeration supports len 2..4");
  const unsigned q = 1u << alphabet_bits;
  std::vector<unsigned> perm(q);
  std::iota(perm.begin(), perm.end(), 0u);

  auto mini_hash = [&](const std::vector<unsigned>& s) {
    unsigned h = 0;
    for (auto x : s) h = perm[h ^ x];
    return h;
  };

  std::size_t stream_count = 1;
  for (std::size_t i = 0; i < len; ++i) stream_count *= q;

  ExhaustiveCount out;
  std::vector<unsigned> stream(len), altered(len);
  do {
    for (std::size_t code = 0; code < stream_count; ++code) {
      std::size_t c = code;
      for (std::size_t i = 0; i < len; ++i, c /= q) stream[i] = static_cast<unsigned>(c % q);
      const unsigned h = mini_hash(stream);
      for (std::size_t m = 0; m < len; ++m) {
        for (std::size_t n = m + 1; n < len; ++n) {
          for (unsigned vm = 0; vm < q; ++vm) {
            if (vm == stream[m]) continue;
            for (unsigned vn = 0; vn < q; ++vn) {
              altered = stream;
              altered[m] = vm;
              altered[n] = vn;
              ++out.total;
              if (mini_hash(altered) == h) ++out.collisions;
            }
          }
        }
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace hashtag::pearson
