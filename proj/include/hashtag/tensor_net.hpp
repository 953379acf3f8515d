#pragma once

// Minimal fixed-point network engine: symmetric per-layer quantization,
// forward inference, mean cross-entropy, and exact backpropagation for small
// fully-connected / convolutional stacks.
//
// Weight storage order follows the declared shape, row-major:
//   convolution (k, k, C_in, C_out): index = ((r * k + c) * C_in + ci) * C_out + co
//   fully-connected (in, out):       index = i * out + o
// Convolutions are stride 1 with "same" zero padding (odd k). Every layer but
// the last is followed by ReLU; a convolution may additionally declare 2x2
// max pooling after its activation. Activations flatten as (C, H, W).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hashtag::net {

enum class LayerKind : std::uint8_t { FullyConnected = 0, Convolution = 1 };
enum class Activation : std::uint8_t { Relu = 0 };

struct LayerParams {
  LayerKind kind = LayerKind::FullyConnected;
  bool pool = false;
  int bitwidth = 8;
  std::vector<std::uint32_t> shape;
  std::vector<std::int8_t> weight_q;
  std::vector<double> bias;
  double scale = 1.0;
  int layer_index = 0;

  std::size_t element_count() const { return weight_q.size(); }
  std::uint32_t in_channels() const;
  std::uint32_t out_channels() const;
  std::uint32_t kernel() const;  // 1 for fully-connected layers
  int min_q() const { return -(1 << (bitwidth - 1)); }
  int max_q() const { return (1 << (bitwidth - 1)) - 1; }
  double weight(std::size_t i) const { return scale * weight_q[i]; }

  // Throws hashtag::Error when any LayerParams invariant is broken.
  void validate() const;
};

struct QuantizedModel {
  std::vector<LayerParams> layers;
  Activation activation = Activation::Relu;

  int num_classes() const;
  std::size_t weight_count() const;
  void validate() const;
};

enum class Split : std::uint8_t { Train = 0, Validation = 1, Attack = 2 };

struct Dataset {
  std::vector<std::uint32_t> input_dims;  // (features) or (C, H, W)
  std::vector<float> inputs;              // size() * sample_width() values
  std::vector<std::uint16_t> labels;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_width() const;
  std::span<const float> sample(std::size_t i) const;
  Dataset subset(std::span<const std::size_t> indices) const;
  void validate(int num_classes) const;
};

// Per-layer gradients of the batch-mean cross-entropy, shape-congruent with
// the weights (and biases) of the model they were computed on.
struct GradientSet {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

// Real-valued view of a network; training and finite-difference checks work
// on this directly, QuantizedModel goes through dequantize().
struct RealLayer {
  LayerKind kind = LayerKind::FullyConnected;
  bool pool = false;
  std::vector<std::uint32_t> shape;
  std::vector<double> weight;
  std::vector<double> bias;
};
using RealNetwork = std::vector<RealLayer>;

struct QuantizedTensor {
  std::vector<std::int8_t> values;
  double scale = 1.0;
};

QuantizedTensor quantize(std::span<const double> weights, int bitwidth);
std::vector<double> dequantize(const LayerParams& layer);
RealNetwork dequantize(const QuantizedModel& model);

struct ForwardResult {
  std::vector<double> logits;  // row-major (samples, classes)
  std::size_t num_classes = 0;
  double loss = 0.0;
};

ForwardResult forward(const RealNetwork& net, const Dataset& batch);
ForwardResult forward(const QuantizedModel& model, const Dataset& batch);

GradientSet backward(const RealNetwork& net, const Dataset& batch,
                     double* loss = nullptr);
GradientSet backward(const QuantizedModel& model, const Dataset& batch,
                     double* loss = nullptr);

double cross_entropy(std::span<const double> logits, std::size_t num_classes,
                     std::span<const std::uint16_t> labels);

// Inverts bit `bit` of the bitwidth-wide two's-complement encoding of q.
int flip_bit_value(int q, int bit, int bitwidth);
QuantizedModel flip_bit(const QuantizedModel& model, int layer,
                        std::size_t element, int bit);

// Argmax prediction with ties resolved to the lowest class index.
std::vector<int> predict(const ForwardResult& result);
double accuracy(const QuantizedModel& model, const Dataset& data);

struct LayerSpec {
  LayerKind kind = LayerKind::FullyConnected;
  bool pool = false;
  std::vector<std::uint32_t> shape;
};

struct ArchitectureSpec {
  std::vector<LayerSpec> layers;
  int bitwidth = 8;
};

struct TrainOptions {
  int epochs = 30;
  std::uint64_t seed = 1;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
};

RealNetwork init_network(const ArchitectureSpec& spec, std::uint64_t seed);
QuantizedModel quantize_network(const RealNetwork& net, int bitwidth);
QuantizedModel train_toy(const ArchitectureSpec& spec, const Dataset& data,
                         const TrainOptions& options);

// Binary model ("QNN1") and dataset ("DSB1") formats, little-endian.
std::vector<std::uint8_t> serialize_model(const QuantizedModel& model);
QuantizedModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const QuantizedModel& model, const std::filesystem::path& path);
QuantizedModel load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_dataset(const Dataset& data);
Dataset deserialize_dataset(std::span<const std::uint8_t> bytes,
                            Split split = Split::Train);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path,
                     Split split = Split::Train);

}  // namespace hashtag::net
