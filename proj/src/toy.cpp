#include "hashtag/toy.hpp"

#include <cmath>
#include <string>

#include "hashtag/error.hpp"
#include "hashtag/rng.hpp"

namespace hashtag::toy {

namespace {

net::Dataset draw(const std::vector<std::vector<double>>& means,
                  const std::vector<std::uint32_t>& dims, int per_class,
                  net::Split split, SplitMix64& rng) {
  net::Dataset d;
  d.input_dims = dims;
  d.split = split;
  const std::size_t width = means.front().size();
  // Interleave classes so any prefix is close to balanced.
  for (int i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < means.size(); ++c) {
      for (std::size_t f = 0; f < width; ++f) {
        d.inputs.push_back(static_cast<float>(means[c][f] + rng.normal()));
      }
      d.labels.push_back(static_cast<std::uint16_t>(c));
    }
  }
  return d;
}

}  // namespace

BlobSplits make_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw Error("gendata: need at least two classes");
  if (spec.classes > 65535) throw Error("gendata: too many classes");
  if (spec.per_class < 1) throw Error("gendata: need at least one sample per class");
  if (spec.dims.empty() || (spec.dims.size() != 1 && spec.dims.size() != 3)) {
    throw Error("gendata: dims must be (features) or (C, H, W)");
  }
  std::size_t width = 1;
  for (auto d : spec.dims) {
    if (d == 0) throw Error("gendata: degenerate (zero) input dimension");
    width *= d;
  }
  if (!(spec.separation > 0.0)) throw Error("gendata: separation must be positive");

  SplitMix64 rng(mix64(spec.seed ^ 0xB10B'0000'0000'0000ULL));
  const double scale = spec.separation / std::sqrt(static_cast<double>(width));
  std::vector<std::vector<double>> means;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw Error("gendata: could not place separated class means");
    means.assign(static_cast<std::size_t>(spec.classes), std::vector<double>(width));
    for (auto& m : means)
      for (auto& v : m) v = rng.normal() * scale;
    bool ok = true;
    for (std::size_t a = 0; a < means.size() && ok; ++a) {
      for (std::size_t b = a + 1; b < means.size() && ok; ++b) {
        double d2 = 0.0;
        for (std::size_t f = 0; f < width; ++f) {
          d2 += (means[a][f] - means[b][f]) * (means[a][f] - means[b][f]);
        }
        ok = std::sqrt(d2) >= spec.separation;
      }
    }
    if (ok) break;
  }

  BlobSplits out;
  out.train = draw(means, spec.dims, spec.per_class, net::Split::Train, rng);
  out.validation_short = spec.per_class < kValidationPerClass;
  out.validation = draw(means, spec.dims,
                        out.validation_short ? spec.per_class : kValidationPerClass,
                        net::Split::Validation, rng);
  out.attack = draw(means, spec.dims, std::max(1, spec.per_class / 4),
                    net::Split::Attack, rng);
  return out;
}

net::ArchitectureSpec cnn6(std::uint32_t channels, std::uint32_t height,
                           std::uint32_t width, int classes, int bitwidth) {
  if (height % 4 != 0 || width % 4 != 0 || height == 0 || width == 0) {
    throw Error("cnn6: spatial dims must be positive multiples of 4");
  }
  using net::LayerKind;
  const auto c = static_cast<std::uint32_t>(classes);
  net::ArchitectureSpec a;
  a.bitwidth = bitwidth;
  a.layers = {
      {LayerKind::Convolution, false, {3, 3, channels, 4}},
      {LayerKind::Convolution, true, {3, 3, 4, 4}},
      {LayerKind::Convolution, false, {3, 3, 4, 8}},
      {LayerKind::Convolution, true, {3, 3, 8, 8}},
      {LayerKind::FullyConnected, false, {8 * (height / 4) * (width / 4), 16}},
      {LayerKind::FullyConnected, false, {16, c}},
  };
  return a;
}

net::ArchitectureSpec mlp(std::uint32_t inputs, std::uint32_t hidden,
                          int classes, int bitwidth) {
  using net::LayerKind;
  net::ArchitectureSpec a;
  a.bitwidth = bitwidth;
  a.layers = {
      {LayerKind::FullyConnected, false, {inputs, hidden}},
      {LayerKind::FullyConnected, false, {hidden, static_cast<std::uint32_t>(classes)}},
  };
  return a;
}

}  // namespace hashtag::toy
