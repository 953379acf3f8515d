#include "hashtag/tensor_net.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hashtag/error.hpp"
#include "hashtag/rng.hpp"

namespace hashtag::net {

// ---------------------------------------------------------------------------
// LayerParams / QuantizedModel / Dataset
// ---------------------------------------------------------------------------

std::uint32_t LayerParams::in_channels() const {
  return kind == LayerKind::Convolution ? shape.at(2) : shape.at(0);
}

std::uint32_t LayerParams::out_channels() const {
  return kind == LayerKind::Convolution ? shape.at(3) : shape.at(1);
}

std::uint32_t LayerParams::kernel() const {
  return kind == LayerKind::Convolution ? shape.at(0) : 1;
}

namespace {

void validate_shape(LayerKind kind, bool pool,
                    const std::vector<std::uint32_t>& shape,
                    std::size_t weight_count, std::size_t bias_count,
                    const std::string& where) {
  if (kind == LayerKind::Convolution) {
    if (shape.size() != 4) throw Error(where + ": convolution shape must be (k, k, C_in, C_out)");
    if (shape[0] != shape[1]) throw Error(where + ": convolution kernel must be square");
  } else {
    if (shape.size() != 2) throw Error(where + ": fully-connected shape must be (in, out)");
    if (pool) throw Error(where + ": pooling is only defined for convolutions");
  }
  std::size_t product = 1;
  for (auto d : shape) {
    if (d == 0) throw Error(where + ": zero dimension in shape");
    product *= d;
  }
  if (product != weight_count) {
    throw Error(where + ": shape product " + std::to_string(product) +
                " != weight count " + std::to_string(weight_count));
  }
  if (bias_count != shape.back()) {
    throw Error(where + ": bias length " + std::to_string(bias_count) +
                " != output channels " + std::to_string(shape.back()));
  }
}

}  // namespace

void LayerParams::validate() const {
  const std::string where = "layer " + std::to_string(layer_index);
  if (bitwidth < 4 || bitwidth > 8) {
    throw Error(where + ": bitwidth " + std::to_string(bitwidth) +
                " outside [4, 8]");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(where + ": scale must be positive and finite");
  }
  validate_shape(kind, pool, shape, weight_q.size(), bias.size(), where);
  for (auto q : weight_q) {
    if (q < min_q() || q > max_q()) {
      throw Error(where + ": quantized weight " + std::to_string(q) +
                  " outside the " + std::to_string(bitwidth) + "-bit range");
    }
  }
  for (double b : bias) {
    if (!std::isfinite(b)) throw Error(where + ": non-finite bias");
  }
}

int QuantizedModel::num_classes() const {
  if (layers.empty()) throw Error("model has no layers");
  return static_cast<int>(layers.back().out_channels());
}

std::size_t QuantizedModel::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.element_count();
  return n;
}

void QuantizedModel::validate() const {
  if (layers.empty()) throw Error("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].layer_index != static_cast<int>(i)) {
      throw Error("layer " + std::to_string(i) + " carries index " +
                  std::to_string(layers[i].layer_index));
    }
    layers[i].validate();
  }
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const auto& prev = layers[i - 1];
    const auto& cur = layers[i];
    const std::uint32_t c = prev.out_channels();
    // A convolution feeding a fully-connected layer flattens C x H x W, so
    // only divisibility is checkable without the input size.
    const bool ok = cur.kind == LayerKind::Convolution
                        ? prev.kind == LayerKind::Convolution && cur.in_channels() == c
                        : (prev.kind == LayerKind::FullyConnected
                               ? cur.in_channels() == c
                               : cur.in_channels() % c == 0);
    if (!ok) {
      throw Error("layer " + std::to_string(i) + " does not compose with layer " +
                  std::to_string(i - 1));
    }
  }
  if (layers.back().kind != LayerKind::FullyConnected) {
    throw Error("the last layer must be fully-connected");
  }
  if (num_classes() < 2) throw Error("a model needs at least two classes");
}

std::size_t Dataset::sample_width() const {
  std::size_t w = 1;
  for (auto d : input_dims) w *= d;
  return w;
}

std::span<const float> Dataset::sample(std::size_t i) const {
  const std::size_t w = sample_width();
  return std::span<const float>(inputs).subspan(i * w, w);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.input_dims = input_dims;
  out.split = split;
  const std::size_t w = sample_width();
  out.inputs.reserve(indices.size() * w);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw Error("dataset subset index out of range");
    auto s = sample(i);
    out.inputs.insert(out.inputs.end(), s.begin(), s.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate(int num_classes) const {
  if (input_dims.empty()) throw Error("dataset has no input dimensions");
  if (inputs.size() != size() * sample_width()) {
    throw Error("dataset inputs and labels have different lengths");
  }
  for (auto y : labels) {
    if (static_cast<int>(y) >= num_classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " +
                  std::to_string(num_classes) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

QuantizedTensor quantize(std::span<const double> weights, int bitwidth) {
  if (bitwidth < 2 || bitwidth > 8) {
    throw Error("quantize: bitwidth " + std::to_string(bitwidth) +
                " outside [2, 8]");
  }
  double max_abs = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw Error("quantize: non-finite weight");
    max_abs = std::max(max_abs, std::abs(w));
  }
  const int hi = (1 << (bitwidth - 1)) - 1;
  const int lo = -(1 << (bitwidth - 1));
  QuantizedTensor out;
  out.scale = max_abs > 0.0 ? max_abs / hi : 1.0;
  out.values.reserve(weights.size());
  for (double w : weights) {
    // std::round rounds half away from zero.
    const double r = std::round(w / out.scale);
    out.values.push_back(
        static_cast<std::int8_t>(std::clamp(static_cast<int>(r), lo, hi)));
  }
  return out;
}

std::vector<double> dequantize(const LayerParams& layer) {
  std::vector<double> out(layer.weight_q.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = layer.weight(i);
  return out;
}

RealNetwork dequantize(const QuantizedModel& model) {
  RealNetwork net;
  net.reserve(model.layers.size());
  for (const auto& l : model.layers) {
    net.push_back({l.kind, l.pool, l.shape, dequantize(l), l.bias});
  }
  return net;
}

// ---------------------------------------------------------------------------
// Forward / backward engine
// ---------------------------------------------------------------------------

namespace {

struct Geometry {
  std::size_t c = 0, h = 1, w = 1;
  std::size_t size() const { return c * h * w; }
};

struct LayerCache {
  Geometry in;
  Geometry conv_out;  // pre-pool geometry
  Geometry out;       // post-pool geometry
  std::vector<double> input;
  std::vector<double> pre;   // pre-activation, conv_out geometry
  std::vector<std::uint32_t> pool_argmax;  // index into conv_out per pooled output
};

Geometry input_geometry(const Dataset& batch) {
  const auto& d = batch.input_dims;
  if (d.size() == 1) return {d[0], 1, 1};
  if (d.size() == 3) return {d[0], d[1], d[2]};
  throw Error("input dims must have rank 1 (features) or 3 (C, H, W)");
}

void check_layer(const RealLayer& layer, std::size_t index) {
  const std::string where = "layer " + std::to_string(index);
  validate_shape(layer.kind, layer.pool, layer.shape, layer.weight.size(),
                 layer.bias.size(), where);
  // "same" padding needs a centre tap
  if (layer.kind == LayerKind::Convolution && layer.shape[0] % 2 == 0) {
    throw Error(where + ": inference needs an odd convolution kernel");
  }
}

std::vector<double> layer_forward(const RealLayer& layer, LayerCache& cache,
                                  std::size_t n, bool last) {
  const Geometry in = cache.in;
  std::vector<double>& pre = cache.pre;
  if (layer.kind == LayerKind::FullyConnected) {
    const std::size_t fin = layer.shape[0], fout = layer.shape[1];
    if (in.size() != fin) {
      throw Error("shape mismatch: fully-connected layer expects " +
                  std::to_string(fin) + " inputs, got " +
                  std::to_string(in.size()));
    }
    cache.conv_out = {fout, 1, 1};
    pre.assign(n * fout, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* x = cache.input.data() + s * fin;
      double* z = pre.data() + s * fout;
      for (std::size_t o = 0; o < fout; ++o) z[o] = layer.bias[o];
      for (std::size_t i = 0; i < fin; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wrow = layer.weight.data() + i * fout;
        for (std::size_t o = 0; o < fout; ++o) z[o] += xi * wrow[o];
      }
    }
  } else {
    const std::size_t k = layer.shape[0], cin = layer.shape[2],
                      cout = layer.shape[3];
    if (in.c != cin) {
      throw Error("shape mismatch: convolution expects " +
                  std::to_string(cin) + " input channels, got " +
                  std::to_string(in.c));
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t H = in.h, W = in.w;
    cache.conv_out = {cout, in.h, in.w};
    const std::size_t plane = in.h * in.w;
    pre.assign(n * cout * plane, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* x = cache.input.data() + s * cin * plane;
      double* z = pre.data() + s * cout * plane;
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t p = 0; p < plane; ++p) z[co * plane + p] = layer.bias[co];
      }
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* wv = layer.weight.data() + ((r * k + c) * cin + ci) * cout;
            const double* xp = x + ci * plane;
            for (std::ptrdiff_t y = 0; y < H; ++y) {
              const std::ptrdiff_t yy = y + static_cast<std::ptrdiff_t>(r) - pad;
              if (yy < 0 || yy >= H) continue;
              for (std::ptrdiff_t xq = 0; xq < W; ++xq) {
                const std::ptrdiff_t xx = xq + static_cast<std::ptrdiff_t>(c) - pad;
                if (xx < 0 || xx >= W) continue;
                const double v = xp[yy * W + xx];
                if (v == 0.0) continue;
                const std::size_t o = static_cast<std::size_t>(y * W + xq);
                for (std::size_t co = 0; co < cout; ++co) {
                  z[co * plane + o] += v * wv[co];
                }
              }
            }
          }
        }
      }
    }
  }

  if (last) {
    cache.out = cache.conv_out;
    return pre;
  }
  std::vector<double> act(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] > 0.0 ? pre[i] : 0.0;
  if (!layer.pool) {
    cache.out = cache.conv_out;
    return act;
  }
  const Geometry g = cache.conv_out;
  if (g.h < 2 || g.w < 2) throw Error("shape mismatch: feature map too small to pool");
  const Geometry p{g.c, g.h / 2, g.w / 2};
  cache.out = p;
  std::vector<double> pooled(n * p.size());
  cache.pool_argmax.assign(n * p.size(), 0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < g.c; ++c) {
      const std::size_t base = s * g.size() + c * g.h * g.w;
      for (std::size_t y = 0; y < p.h; ++y) {
        for (std::size_t x = 0; x < p.w; ++x) {
          std::size_t best = base + (2 * y) * g.w + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + (2 * y + dy) * g.w + 2 * x + dx;
              if (act[idx] > act[best]) best = idx;
            }
          }
          const std::size_t o = s * p.size() + c * p.h * p.w + y * p.w + x;
          pooled[o] = act[best];
          cache.pool_argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return pooled;
}

// Runs the network; fills one cache per layer and returns the logits.
std::vector<double> run(const RealNetwork& net, const Dataset& batch,
                        std::vector<LayerCache>& caches) {
  if (net.empty()) throw Error("network has no layers");
  if (net.back().kind != LayerKind::FullyConnected) {
    throw Error("the last layer must be fully-connected");
  }
  if (batch.inputs.size() != batch.size() * batch.sample_width()) {
    throw Error("shape mismatch: dataset inputs and labels disagree");
  }
  const std::size_t n = batch.size();
  caches.assign(net.size(), {});
  Geometry geo = input_geometry(batch);
  std::vector<double> x(batch.inputs.begin(), batch.inputs.end());
  for (std::size_t l = 0; l < net.size(); ++l) {
    check_layer(net[l], l);
    caches[l].in = geo;
    caches[l].input = std::move(x);
    x = layer_forward(net[l], caches[l], n, l + 1 == net.size());
    geo = caches[l].out;
  }
  return x;
}

void check_labels(const Dataset& batch, std::size_t num_classes) {
  for (auto y : batch.labels) {
    if (y >= num_classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " +
                  std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

double cross_entropy(std::span<const double> logits, std::size_t num_classes,
                     std::span<const std::uint16_t> labels) {
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const double* z = logits.data() + s * num_classes;
    const double m = *std::max_element(z, z + num_classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) sum += std::exp(z[c] - m);
    total += m + std::log(sum) - z[labels[s]];
  }
  return total / static_cast<double>(labels.size());
}

ForwardResult forward(const RealNetwork& net, const Dataset& batch) {
  std::vector<LayerCache> caches;
  ForwardResult out;
  out.logits = run(net, batch, caches);
  out.num_classes = net.back().shape[1];
  check_labels(batch, out.num_classes);
  out.loss = cross_entropy(out.logits, out.num_classes, batch.labels);
  return out;
}

ForwardResult forward(const QuantizedModel& model, const Dataset& batch) {
  return forward(dequantize(model), batch);
}

GradientSet backward(const RealNetwork& net, const Dataset& batch,
                     double* loss) {
  std::vector<LayerCache> caches;
  const std::vector<double> logits = run(net, batch, caches);
  const std::size_t n = batch.size();
  const std::size_t classes = net.back().shape[1];
  check_labels(batch, classes);
  if (loss) *loss = cross_entropy(logits, classes, batch.labels);

  GradientSet grads;
  grads.weights.resize(net.size());
  grads.biases.resize(net.size());
  for (std::size_t l = 0; l < net.size(); ++l) {
    grads.weights[l].assign(net[l].weight.size(), 0.0);
    grads.biases[l].assign(net[l].bias.size(), 0.0);
  }
  if (n == 0) return grads;

  // d(mean CE)/d(logits) = (softmax - onehot) / n
  std::vector<double> delta(logits.size());
  for (std::size_t s = 0; s < n; ++s) {
    const double* z = logits.data() + s * classes;
    double* d = delta.data() + s * classes;
    const double m = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      d[c] = std::exp(z[c] - m);
      sum += d[c];
    }
    for (std::size_t c = 0; c < classes; ++c) d[c] /= sum;
    d[batch.labels[s]] -= 1.0;
    for (std::size_t c = 0; c < classes; ++c) d[c] /= static_cast<double>(n);
  }

  for (std::size_t li = net.size(); li-- > 0;) {
    const RealLayer& layer = net[li];
    LayerCache& cache = caches[li];
    const bool last = li + 1 == net.size();

    // delta currently holds d/d(layer output); map it to d/d(pre-activation).
    std::vector<double> dz;
    if (last) {
      dz = std::move(delta);
    } else {
      dz.assign(n * cache.conv_out.size(), 0.0);
      if (layer.pool) {
        for (std::size_t o = 0; o < delta.size(); ++o) {
          dz[cache.pool_argmax[o]] += delta[o];
        }
      } else {
        dz = std::move(delta);
      }
      for (std::size_t i = 0; i < dz.size(); ++i) {
        if (!(cache.pre[i] > 0.0)) dz[i] = 0.0;
      }
    }

    auto& gw = grads.weights[li];
    auto& gb = grads.biases[li];
    std::vector<double> dx(n * cache.in.size(), 0.0);
    if (layer.kind == LayerKind::FullyConnected) {
      const std::size_t fin = layer.shape[0], fout = layer.shape[1];
      for (std::size_t s = 0; s < n; ++s) {
        const double* x = cache.input.data() + s * fin;
        const double* d = dz.data() + s * fout;
        double* dxs = dx.data() + s * fin;
        for (std::size_t o = 0; o < fout; ++o) gb[o] += d[o];
        for (std::size_t i = 0; i < fin; ++i) {
          const double* wrow = layer.weight.data() + i * fout;
          double* grow = gw.data() + i * fout;
          double acc = 0.0;
          for (std::size_t o = 0; o < fout; ++o) {
            grow[o] += x[i] * d[o];
            acc += wrow[o] * d[o];
          }
          dxs[i] = acc;
        }
      }
    } else {
      const std::size_t k = layer.shape[0], cin = layer.shape[2],
                        cout = layer.shape[3];
      const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
      const std::ptrdiff_t H = cache.in.h, W = cache.in.w;
      const std::size_t plane = cache.in.h * cache.in.w;
      for (std::size_t s = 0; s < n; ++s) {
        const double* x = cache.input.data() + s * cin * plane;
        const double* d = dz.data() + s * cout * plane;
        double* dxs = dx.data() + s * cin * plane;
        for (std::size_t co = 0; co < cout; ++co) {
          for (std::size_t p = 0; p < plane; ++p) gb[co] += d[co * plane + p];
        }
        for (std::size_t r = 0; r < k; ++r) {
          for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t wbase = ((r * k + c) * cin + ci) * cout;
              const double* wv = layer.weight.data() + wbase;
              double* gv = gw.data() + wbase;
              for (std::ptrdiff_t y = 0; y < H; ++y) {
                const std::ptrdiff_t yy = y + static_cast<std::ptrdiff_t>(r) - pad;
                if (yy < 0 || yy >= H) continue;
                for (std::ptrdiff_t xq = 0; xq < W; ++xq) {
                  const std::ptrdiff_t xx = xq + static_cast<std::ptrdiff_t>(c) - pad;
                  if (xx < 0 || xx >= W) continue;
                  const std::size_t src = ci * plane + static_cast<std::size_t>(yy * W + xx);
                  const std::size_t o = static_cast<std::size_t>(y * W + xq);
                  const double v = x[src];
                  double acc = 0.0;
                  for (std::size_t co = 0; co < cout; ++co) {
                    const double dv = d[co * plane + o];
                    gv[co] += v * dv;
                    acc += wv[co] * dv;
                  }
                  dxs[src] += acc;
                }
              }
            }
          }
        }
      }
    }
    delta = std::move(dx);
  }
  return grads;
}

GradientSet backward(const QuantizedModel& model, const Dataset& batch,
                     double* loss) {
  return backward(dequantize(model), batch, loss);
}

// ---------------------------------------------------------------------------
// Bit flips and evaluation
// ---------------------------------------------------------------------------

int flip_bit_value(int q, int bit, int bitwidth) {
  if (bitwidth < 2 || bitwidth > 8) throw Error("flip_bit: bitwidth outside [2, 8]");
  if (bit < 0 || bit >= bitwidth) {
    throw Error("flip_bit: bit " + std::to_string(bit) + " outside [0, " +
                std::to_string(bitwidth) + ")");
  }
  if (q < -(1 << (bitwidth - 1)) || q > (1 << (bitwidth - 1)) - 1) {
    throw Error("flip_bit: value " + std::to_string(q) + " outside the " +
                std::to_string(bitwidth) + "-bit range");
  }
  const unsigned mask = (1u << bitwidth) - 1u;
  unsigned u = static_cast<unsigned>(q) & mask;
  u ^= 1u << bit;
  const int v = static_cast<int>(u);
  return (u & (1u << (bitwidth - 1))) ? v - (1 << bitwidth) : v;
}

QuantizedModel flip_bit(const QuantizedModel& model, int layer,
                        std::size_t element, int bit) {
  if (layer < 0 || layer >= static_cast<int>(model.layers.size())) {
    throw Error("flip_bit: layer " + std::to_string(layer) + " out of range");
  }
  const auto& src = model.layers[static_cast<std::size_t>(layer)];
  if (element >= src.element_count()) {
    throw Error("flip_bit: element " + std::to_string(element) +
                " out of range for layer " + std::to_string(layer));
  }
  QuantizedModel out = model;
  auto& q = out.layers[static_cast<std::size_t>(layer)].weight_q[element];
  q = static_cast<std::int8_t>(flip_bit_value(q, bit, src.bitwidth));
  assert(q >= src.min_q() && q <= src.max_q());
  return out;
}

std::vector<int> predict(const ForwardResult& result) {
  const std::size_t c = result.num_classes;
  const std::size_t n = c ? result.logits.size() / c : 0;
  std::vector<int> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double* z = result.logits.data() + s * c;
    // max_element returns the first maximum: lowest index wins ties.
    out[s] = static_cast<int>(std::max_element(z, z + c) - z);
  }
  return out;
}

double accuracy(const QuantizedModel& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = predict(forward(model, data));
  std::size_t correct = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s] == static_cast<int>(data.labels[s])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

RealNetwork init_network(const ArchitectureSpec& spec, std::uint64_t seed) {
  if (spec.layers.empty()) throw Error("architecture has no layers");
  SplitMix64 rng(mix64(seed ^ 0x1A17'0000'0000'0001ULL));
  RealNetwork net;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& ls = spec.layers[l];
    std::size_t count = 1;
    for (auto d : ls.shape) count *= d;
    RealLayer layer{ls.kind, ls.pool, ls.shape, std::vector<double>(count),
                    std::vector<double>(ls.shape.empty() ? 0 : ls.shape.back(), 0.0)};
    check_layer(layer, l);
    const std::size_t fan_in = count / ls.shape.back();
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& w : layer.weight) w = (2.0 * rng.uniform() - 1.0) * bound;
    net.push_back(std::move(layer));
  }
  if (net.back().kind != LayerKind::FullyConnected) {
    throw Error("the last layer must be fully-connected");
  }
  return net;
}

QuantizedModel quantize_network(const RealNetwork& net, int bitwidth) {
  QuantizedModel model;
  for (std::size_t l = 0; l < net.size(); ++l) {
    auto q = quantize(net[l].weight, bitwidth);
    LayerParams p;
    p.kind = net[l].kind;
    p.pool = net[l].pool;
    p.bitwidth = bitwidth;
    p.shape = net[l].shape;
    p.weight_q = std::move(q.values);
    p.bias = net[l].bias;
    p.scale = q.scale;
    p.layer_index = static_cast<int>(l);
    model.layers.push_back(std::move(p));
  }
  model.validate();
  return model;
}

QuantizedModel train_toy(const ArchitectureSpec& spec, const Dataset& data,
                         const TrainOptions& options) {
  if (spec.bitwidth < 4 || spec.bitwidth > 8) {
    throw Error("train: bitwidth outside [4, 8]");
  }
  if (options.epochs < 0) throw Error("train: negative epoch count");
  RealNetwork net = init_network(spec, options.seed);
  if (options.epochs > 0) {
    if (data.size() == 0) throw Error("train: empty dataset");
    data.validate(static_cast<int>(net.back().shape[1]));
  }

  RealNetwork velocity = net;
  for (auto& l : velocity) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  SplitMix64 rng(mix64(options.seed ^ 0x5EED'0000'0000'0002ULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, options.batch_size);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const Dataset batch = data.subset(
          std::span<const std::size_t>(order).subspan(start, end - start));
      double loss = 0.0;
      const GradientSet g = backward(net, batch, &loss);
      if (!std::isfinite(loss)) {
        throw Error("train: loss diverged (non-finite) at epoch " +
                    std::to_string(epoch));
      }
      for (std::size_t l = 0; l < net.size(); ++l) {
        for (std::size_t i = 0; i < net[l].weight.size(); ++i) {
          auto& v = velocity[l].weight[i];
          v = options.momentum * v - options.learning_rate * g.weights[l][i];
          net[l].weight[i] += v;
        }
        for (std::size_t i = 0; i < net[l].bias.size(); ++i) {
          auto& v = velocity[l].bias[i];
          v = options.momentum * v - options.learning_rate * g.biases[l][i];
          net[l].bias[i] += v;
        }
      }
    }
  }
  for (const auto& l : net) {
    for (double w : l.weight) {
      if (!std::isfinite(w)) throw Error("train: weights diverged (non-finite)");
    }
  }
  return quantize_network(net, spec.bitwidth);
}

}  // namespace hashtag::net
