#pragma once

// Synthetic workloads: Gaussian-blob classification data and the small
// reference architectures used by the CLI, the tests and the benchmarks.

#include <cstdint>
#include <vector>

#include "hashtag/tensor_net.hpp"

namespace hashtag::toy {

struct BlobSpec {
  int classes = 3;
  int per_class = 200;
  std::vector<std::uint32_t> dims{1, 8, 8};
  double separation = 4.0;  // minimum distance between class means, in noise sigmas
  std::uint64_t seed = 1;
};

struct BlobSplits {
  net::Dataset train;
  net::Dataset validation;  // 20 per class, or all per_class when fewer
  net::Dataset attack;
  bool validation_short = false;
};

inline constexpr int kValidationPerClass = 20;

BlobSplits make_blobs(const BlobSpec& spec);

// 6-layer CNN for (C, H, W) inputs with H, W divisible by 4:
//   conv3x3 C->4, conv3x3 4->4 + pool, conv3x3 4->8, conv3x3 8->8 + pool,
//   fc (8*H/4*W/4)->16, fc 16->classes
net::ArchitectureSpec cnn6(std::uint32_t channels, std::uint32_t height,
                           std::uint32_t width, int classes, int bitwidth);

// One hidden layer perceptron.
net::ArchitectureSpec mlp(std::uint32_t inputs, std::uint32_t hidden,
                          int classes, int bitwidth);

}  // namespace hashtag::toy
