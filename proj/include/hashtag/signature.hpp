#pragma once

// Per-layer secret signatures and the bundle file that carries them.
//
// Bundle layout ("HTAG", little-endian):
//   magic[4] version:u8 width:u8 count:u16 fingerprint[width]
//   count x { layer:u16 elements:u32 table_seed:u64 ordering_key:u64
//             traversal:u8 hash[width] }
// Hash tables are regenerated from their seeds, so a checkpoint costs
// 23 + width bytes on disk.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hashtag/pearson.hpp"
#include "hashtag/tensor_net.hpp"

namespace hashtag::signature {

enum class Traversal : std::uint8_t { ChannelMajor = 0, KeyedPermutation = 1 };

struct OrderingKey {
  int layer_index = 0;
  std::uint64_t key = 0;
  Traversal traversal = Traversal::KeyedPermutation;
  friend bool operator==(const OrderingKey&, const OrderingKey&) = default;
};

struct LayerSignature {
  int layer_index = 0;
  std::uint64_t table_seed = 0;
  OrderingKey ordering;
  pearson::HashValue hash;
  std::uint32_t element_count = 0;
  friend bool operator==(const LayerSignature&, const LayerSignature&) = default;
};

struct SignatureBundle {
  std::uint8_t version = 1;
  pearson::HashValue model_fingerprint;
  std::vector<LayerSignature> checkpoints;

  int width_units() const {
    return static_cast<int>(model_fingerprint.width_units());
  }
  friend bool operator==(const SignatureBundle&, const SignatureBundle&) = default;
};

inline constexpr std::size_t kBundleHeaderBytes = 8;  // + width fingerprint bytes
inline constexpr std::size_t kCheckpointFixedBytes = 23;  // + width hash bytes
// Public seed for model fingerprints; identification only, never a secret.
inline constexpr std::uint64_t kFingerprintSeed = 0x4854'4147'5055'424CULL;

// Element order of the channel-major traversal: (out, in, row, col) for
// convolutions and (out, in) for fully-connected layers, as indices into
// LayerParams::weight_q.
std::vector<std::size_t> channel_major_order(const net::LayerParams& layer);
std::vector<std::size_t> stream_order(const net::LayerParams& layer,
                                      const OrderingKey& ordering);

// Weights in secret order, one sign-extended byte per weight.
std::vector<std::uint8_t> order_stream(const net::LayerParams& layer,
                                       const OrderingKey& ordering);

LayerSignature sign_layer(const net::LayerParams& layer,
                          const OrderingKey& ordering,
                          std::uint64_t table_seed, int width_units);

// Recomputes the layer hash with the signature's secrets.
pearson::HashValue rehash_layer(const net::LayerParams& layer,
                                const LayerSignature& sig, int width_units);

struct DerivedSecrets {
  std::uint64_t table_seed;
  std::uint64_t ordering_key;
};
DerivedSecrets derive_secrets(std::uint64_t master_secret, int layer_index);

pearson::HashValue model_fingerprint(const net::QuantizedModel& model,
                                     int width_units);

SignatureBundle build_bundle(const net::QuantizedModel& model,
                             std::span<const int> checkpoint_layers,
                             std::uint64_t master_secret, int width_units,
                             Traversal traversal = Traversal::KeyedPermutation);

std::vector<std::uint8_t> serialize_bundle(const SignatureBundle& bundle);
SignatureBundle deserialize_bundle(std::span<const std::uint8_t> bytes);
void save_bundle(const SignatureBundle& bundle, const std::filesystem::path& path);
SignatureBundle load_bundle(const std::filesystem::path& path);

std::size_t bundle_size_bytes(std::size_t checkpoints, int width_units);

}  // namespace hashtag::signature
