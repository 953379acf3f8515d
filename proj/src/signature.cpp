#include "hashtag/signature.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>

#include "hashtag/bytes.hpp"
#include "hashtag/error.hpp"
#include "hashtag/rng.hpp"

namespace hashtag::signature {

std::vector<std::size_t> channel_major_order(const net::LayerParams& layer) {
  std::vector<std::size_t> order;
  order.reserve(layer.element_count());
  if (layer.kind == net::LayerKind::Convolution) {
    const std::size_t k = layer.shape[0], cin = layer.shape[2],
                      cout = layer.shape[3];
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t c = 0; c < k; ++c)
            order.push_back(((r * k + c) * cin + ci) * cout + co);
  } else {
    const std::size_t fin = layer.shape[0], fout = layer.shape[1];
    for (std::size_t o = 0; o < fout; ++o)
      for (std::size_t i = 0; i < fin; ++i) order.push_back(i * fout + o);
  }
  return order;
}

std::vector<std::size_t> stream_order(const net::LayerParams& layer,
                                      const OrderingKey& ordering) {
  if (ordering.layer_index != layer.layer_index) {
    throw Error("ordering key belongs to layer " +
                std::to_string(ordering.layer_index) + ", not layer " +
                std::to_string(layer.layer_index));
  }
  layer.validate();
  std::vector<std::size_t> order = channel_major_order(layer);
  if (ordering.traversal == Traversal::KeyedPermutation) {
    SplitMix64 rng(ordering.key);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
  }
  return order;
}

std::vector<std::uint8_t> order_stream(const net::LayerParams& layer,
                                       const OrderingKey& ordering) {
  const auto order = stream_order(layer, ordering);
  std::vector<std::uint8_t> stream;
  stream.reserve(order.size());
  // int8 -> uint8 keeps the two's-complement bit pattern, which is the
  // sign extension of narrower bitwidths to a full byte.
  for (auto i : order) stream.push_back(static_cast<std::uint8_t>(layer.weight_q[i]));
  return stream;
}

LayerSignature sign_layer(const net::LayerParams& layer,
                          const OrderingKey& ordering,
                          std::uint64_t table_seed, int width_units) {
  LayerSignature sig;
  sig.layer_index = layer.layer_index;
  sig.table_seed = table_seed;
  sig.ordering = ordering;
  sig.hash = pearson::hash_wide(table_seed, order_stream(layer, ordering),
                                width_units);
  sig.element_count = static_cast<std::uint32_t>(layer.element_count());
  return sig;
}

pearson::HashValue rehash_layer(const net::LayerParams& layer,
                                const LayerSignature& sig, int width_units) {
  return pearson::hash_wide(sig.table_seed, order_stream(layer, sig.ordering),
                            width_units);
}

DerivedSecrets derive_secrets(std::uint64_t master_secret, int layer_index) {
  const std::uint64_t base =
      master_secret ^ mix64(static_cast<std::uint64_t>(layer_index));
  return {mix64(base ^ 0x7461'626C'6500'0000ULL),   // "table"
          mix64(base ^ 0x6F72'6465'7200'0000ULL)};  // "order"
}

pearson::HashValue model_fingerprint(const net::QuantizedModel& model,
                                     int width_units) {
  return pearson::hash_wide(kFingerprintSeed, net::serialize_model(model),
                            width_units);
}

SignatureBundle build_bundle(const net::QuantizedModel& model,
                             std::span<const int> checkpoint_layers,
                             std::uint64_t master_secret, int width_units,
                             Traversal traversal) {
  if (checkpoint_layers.empty()) throw Error("bundle needs at least one checkpoint layer");
  if (width_units < 1 || width_units > 255) throw Error("bundle width must be in [1, 255]");
  if (checkpoint_layers.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error("too many checkpoint layers");
  }
  std::set<int> seen;
  SignatureBundle bundle;
  bundle.model_fingerprint = model_fingerprint(model, width_units);
  for (int l : checkpoint_layers) {
    if (l < 0 || l >= static_cast<int>(model.layers.size())) {
      throw Error("checkpoint layer " + std::to_string(l) + " out of range");
    }
    if (!seen.insert(l).second) {
      throw Error("checkpoint layer " + std::to_string(l) + " listed twice");
    }
    const auto secrets = derive_secrets(master_secret, l);
    bundle.checkpoints.push_back(
        sign_layer(model.layers[static_cast<std::size_t>(l)],
                   {l, secrets.ordering_key, traversal}, secrets.table_seed,
                   width_units));
  }
  return bundle;
}

std::size_t bundle_size_bytes(std::size_t checkpoints, int width_units) {
  const auto w = static_cast<std::size_t>(width_units);
  return kBundleHeaderBytes + w + checkpoints * (kCheckpointFixedBytes + w);
}

std::vector<std::uint8_t> serialize_bundle(const SignatureBundle& bundle) {
  const int width = bundle.width_units();
  if (width < 1 || width > 255) throw Error("bundle width must be in [1, 255]");
  if (bundle.checkpoints.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error("too many checkpoint layers");
  }
  ByteWriter w;
  w.magic("HTAG");
  w.u8(bundle.version);
  w.u8(static_cast<std::uint8_t>(width));
  w.u16(static_cast<std::uint16_t>(bundle.checkpoints.size()));
  w.bytes(bundle.model_fingerprint.digits);
  for (const auto& c : bundle.checkpoints) {
    if (c.layer_index < 0 || c.layer_index > std::numeric_limits<std::uint16_t>::max()) {
      throw Error("checkpoint layer index " + std::to_string(c.layer_index) +
                  " does not fit the bundle format");
    }
    if (c.hash.width_units() != static_cast<std::size_t>(width)) {
      throw Error("checkpoint hash width differs from the bundle width");
    }
    w.u16(static_cast<std::uint16_t>(c.layer_index));
    w.u32(c.element_count);
    w.u64(c.table_seed);
    w.u64(c.ordering.key);
    w.u8(static_cast<std::uint8_t>(c.ordering.traversal));
    w.bytes(c.hash.digits);
  }
  return std::move(w).take();
}

SignatureBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "bundle");
  r.expect_magic("HTAG");
  SignatureBundle b;
  b.version = r.u8();
  if (b.version != 1) r.fail("unsupported version " + std::to_string(b.version));
  const std::uint8_t width = r.u8();
  if (width == 0) r.fail("zero hash width");
  const std::uint16_t count = r.u16();
  if (count == 0) r.fail("no checkpoints");
  b.model_fingerprint.digits = r.bytes(width);
  if (r.remaining() != static_cast<std::size_t>(count) * (kCheckpointFixedBytes + width)) {
    r.fail(r.remaining() < static_cast<std::size_t>(count) * (kCheckpointFixedBytes + width)
               ? "truncated"
               : "length does not match checkpoint count");
  }
  std::set<int> seen;
  for (std::uint16_t i = 0; i < count; ++i) {
    LayerSignature c;
    c.layer_index = r.u16();
    c.element_count = r.u32();
    c.table_seed = r.u64();
    c.ordering.layer_index = c.layer_index;
    c.ordering.key = r.u64();
    const std::uint8_t trav = r.u8();
    if (trav > 1) r.fail("unknown traversal " + std::to_string(trav));
    c.ordering.traversal = static_cast<Traversal>(trav);
    c.hash.digits = r.bytes(width);
    if (c.element_count == 0) r.fail("checkpoint with zero elements");
    if (!seen.insert(c.layer_index).second) {
      r.fail("duplicate checkpoint layer " + std::to_string(c.layer_index));
    }
    b.checkpoints.push_back(std::move(c));
  }
  r.expect_end();
  return b;
}

void save_bundle(const SignatureBundle& bundle, const std::filesystem::path& path) {
  write_file(path, serialize_bundle(bundle));
}

SignatureBundle load_bundle(const std::filesystem::path& path) {
  return deserialize_bundle(read_file(path));
}

}  // namespace hashtag::signature
