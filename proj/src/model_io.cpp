#include <fstream>
#include <iterator>
#include <string>

#include "hashtag/bytes.hpp"
#include "hashtag/error.hpp"
#include "hashtag/tensor_net.hpp"

namespace hashtag {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace hashtag

namespace hashtag::net {

namespace {

// On-disk layer kind byte. Pooling has no slot of its own in the layout, so a
// pooled convolution gets a distinct kind value.
constexpr std::uint8_t kKindFc = 0;
constexpr std::uint8_t kKindConv = 1;
constexpr std::uint8_t kKindConvPool = 2;

}  // namespace

std::vector<std::uint8_t> serialize_model(const QuantizedModel& model) {
  model.validate();
  ByteWriter w;
  w.magic("QNN1");
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    w.u8(l.kind == LayerKind::FullyConnected ? kKindFc
         : l.pool                            ? kKindConvPool
                                             : kKindConv);
    w.u8(static_cast<std::uint8_t>(l.bitwidth));
    w.u8(static_cast<std::uint8_t>(l.shape.size()));
    for (auto d : l.shape) w.u32(d);
    w.f64(l.scale);
    w.u32(static_cast<std::uint32_t>(l.bias.size()));
    for (double b : l.bias) w.f64(b);
    w.u32(static_cast<std::uint32_t>(l.weight_q.size()));
    for (auto q : l.weight_q) w.i8(q);
  }
  return std::move(w).take();
}

QuantizedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "model");
  r.expect_magic("QNN1");
  const std::uint32_t count = r.u32();
  if (count == 0) r.fail("no layers");
  QuantizedModel model;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerParams l;
    l.layer_index = static_cast<int>(i);
    const std::uint8_t kind = r.u8();
    switch (kind) {
      case kKindFc: l.kind = LayerKind::FullyConnected; break;
      case kKindConv: l.kind = LayerKind::Convolution; break;
      case kKindConvPool:
        l.kind = LayerKind::Convolution;
        l.pool = true;
        break;
      default: r.fail("unknown layer kind " + std::to_string(kind));
    }
    l.bitwidth = r.u8();
    const std::uint8_t rank = r.u8();
    if (rank == 0 || rank > 4) r.fail("bad shape rank");
    for (std::uint8_t d = 0; d < rank; ++d) l.shape.push_back(r.u32());
    l.scale = r.f64();
    const std::uint32_t nb = r.u32();
    if (nb > r.remaining() / 8) r.fail("truncated");
    l.bias.resize(nb);
    for (auto& b : l.bias) b = r.f64();
    const std::uint32_t nw = r.u32();
    if (nw > r.remaining()) r.fail("truncated");
    l.weight_q.resize(nw);
    for (auto& q : l.weight_q) q = r.i8();
    model.layers.push_back(std::move(l));
  }
  r.expect_end();
  try {
    model.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  return model;
}

void save_model(const QuantizedModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

QuantizedModel load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& data) {
  if (data.inputs.size() != data.size() * data.sample_width()) {
    throw Error("dataset inputs and labels have different lengths");
  }
  ByteWriter w;
  w.magic("DSB1");
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u8(static_cast<std::uint8_t>(data.input_dims.size()));
  for (auto d : data.input_dims) w.u32(d);
  for (float v : data.inputs) w.f32(v);
  for (auto y : data.labels) w.u16(y);
  return std::move(w).take();
}

Dataset deserialize_dataset(std::span<const std::uint8_t> bytes, Split split) {
  ByteReader r(bytes, "dataset");
  r.expect_magic("DSB1");
  Dataset d;
  d.split = split;
  const std::uint32_t n = r.u32();
  const std::uint8_t rank = r.u8();
  if (rank == 0) r.fail("no input dimensions");
  for (std::uint8_t i = 0; i < rank; ++i) {
    const std::uint32_t dim = r.u32();
    if (dim == 0) r.fail("zero input dimension");
    d.input_dims.push_back(dim);
  }
  const std::size_t width = d.sample_width();
  if (width != 0 && n > r.remaining() / (4 * width + 2)) r.fail("truncated");
  d.inputs.resize(static_cast<std::size_t>(n) * width);
  for (auto& v : d.inputs) v = r.f32();
  d.labels.resize(n);
  for (auto& y : d.labels) y = r.u16();
  r.expect_end();
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, serialize_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
  return deserialize_dataset(read_file(path), split);
}

}  // namespace hashtag::net
