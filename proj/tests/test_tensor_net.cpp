#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>

#include "hashtag/error.hpp"
#include "hashtag/tensor_net.hpp"
#include "hashtag/toy.hpp"
#include "test_util.hpp"

using namespace hashtag;
using namespace hashtag::net;

TEST_CASE("quantize: hand-computed cases") {
  SUBCASE("all zeros") {
    const std::vector<double> w{0, 0, 0};
    const auto q = quantize(w, 8);
    CHECK(q.scale == 1.0);
    CHECK(q.values == std::vector<std::int8_t>{0, 0, 0});
  }
  SUBCASE("symmetric 8-bit, half rounds away from zero") {
    const std::vector<double> w{-1.0, 0.5, 1.0};
    const auto q = quantize(w, 8);
    CHECK(q.scale == doctest::Approx(1.0 / 127));
    CHECK(q.values == std::vector<std::int8_t>{-127, 64, 127});
  }
  SUBCASE("2-bit") {
    const std::vector<double> w{0.3};
    const auto q = quantize(w, 2);
    CHECK(q.scale == doctest::Approx(0.3));
    CHECK(q.values == std::vector<std::int8_t>{1});
  }
  SUBCASE("negative half step") {
    // -0.5 / (1/127) = -63.5 -> -64
    const std::vector<double> w{1.0, -0.5};
    CHECK(quantize(w, 8).values[1] == -64);
  }
}

TEST_CASE("quantize: rejects bad input") {
  const std::vector<double> nan{1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(quantize(nan, 8), Error);
  const std::vector<double> inf{std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(quantize(inf, 8), Error);
  const std::vector<double> ok{1.0};
  CHECK_THROWS_AS(quantize(ok, 1), Error);
  CHECK_THROWS_AS(quantize(ok, 9), Error);
}

TEST_CASE("quantize: idempotent through dequantize") {
  SplitMix64 rng(3);
  for (int bw : {2, 4, 6, 8}) {
    std::vector<double> w(50);
    for (auto& x : w) x = rng.normal();
    const auto q1 = quantize(w, bw);
    std::vector<double> back(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) back[i] = q1.scale * q1.values[i];
    const auto q2 = quantize(back, bw);
    CHECK(q2.values == q1.values);
    CHECK(q2.scale == doctest::Approx(q1.scale));
    const int lo = -(1 << (bw - 1)), hi = (1 << (bw - 1)) - 1;
    for (auto v : q1.values) {
      CHECK(v >= lo);
      CHECK(v <= hi);
    }
  }
}

TEST_CASE("dequantize") {
  auto l = testutil::fc_layer(1, 2, {-127, 127}, 1.0 / 127);
  const auto w = dequantize(l);
  CHECK(w[0] == doctest::Approx(-1.0));
  CHECK(w[1] == doctest::Approx(1.0));
  auto z = testutil::fc_layer(1, 1, {0}, 0.37);
  CHECK(dequantize(z)[0] == 0.0);
}

TEST_CASE("layer validation") {
  auto l = testutil::fc_layer(2, 2, {1, 2, 3, 4}, 1.0, 4);
  CHECK_NOTHROW(l.validate());
  l.weight_q[0] = 8;  // 4-bit range is [-8, 7]
  CHECK_THROWS_AS(l.validate(), Error);
  l.weight_q[0] = 1;
  l.bitwidth = 3;
  CHECK_THROWS_AS(l.validate(), Error);
  l.bitwidth = 8;
  l.scale = 0.0;
  CHECK_THROWS_AS(l.validate(), Error);
  l.scale = 1.0;
  l.weight_q.pop_back();
  CHECK_THROWS_AS(l.validate(), Error);
}

TEST_CASE("model validation: shapes must compose") {
  QuantizedModel m;
  m.layers.push_back(testutil::fc_layer(2, 3, {1, 1, 1, 1, 1, 1}, 1.0, 8, 0));
  m.layers.push_back(testutil::fc_layer(4, 2, std::vector<std::int8_t>(8, 1), 1.0, 8, 1));
  CHECK_THROWS_AS(m.validate(), Error);
  m.layers[1] = testutil::fc_layer(3, 2, std::vector<std::int8_t>(6, 1), 1.0, 8, 1);
  CHECK_NOTHROW(m.validate());
  CHECK(m.num_classes() == 2);
  CHECK(m.weight_count() == 12);
}

TEST_CASE("forward: hand-computed 2x2 fully-connected layer") {
  QuantizedModel m;
  // W (in, out) = [[1, 2], [3, 4]], bias [0.5, -1]
  m.layers.push_back(testutil::fc_layer(2, 2, {1, 2, 3, 4}, 1.0));
  m.layers[0].bias = {0.5, -1.0};
  Dataset d;
  d.input_dims = {2};
  d.inputs = {1.0f, 2.0f};
  d.labels = {1};
  const auto r = forward(m, d);
  REQUIRE(r.logits.size() == 2);
  CHECK(r.logits[0] == doctest::Approx(1 * 1 + 2 * 3 + 0.5));
  CHECK(r.logits[1] == doctest::Approx(1 * 2 + 2 * 4 - 1.0));
  // -log softmax(9)[label 1] over logits (7.5, 9)
  CHECK(r.loss == doctest::Approx(std::log(1.0 + std::exp(7.5 - 9.0))));
}

TEST_CASE("forward: uniform logits give ln C") {
  QuantizedModel m;
  m.layers.push_back(testutil::fc_layer(3, 4, std::vector<std::int8_t>(12, 0), 1.0));
  const auto d = testutil::random_data({3}, 8, 4, 1);
  const auto r = forward(m, d);
  CHECK(r.loss == doctest::Approx(std::log(4.0)));
  // constant logits tie-break to class 0, which holds a quarter of the labels
  CHECK(accuracy(m, d) == doctest::Approx(0.25));
}

TEST_CASE("forward: shape mismatch is rejected") {
  const auto m = testutil::small_cnn(8, 1);
  const auto d = testutil::random_data({1, 6, 6}, 2, 3, 1);
  CHECK_THROWS_AS(forward(m, d), Error);
  CHECK_THROWS_AS(backward(m, d), Error);
  const auto flat = testutil::random_data({16}, 2, 3, 1);
  CHECK_THROWS_AS(forward(m, flat), Error);
}

TEST_CASE("forward and accuracy are pure") {
  const auto m = testutil::small_cnn(8, 2);
  const auto d = testutil::random_data({1, 4, 4}, 9, 3, 2);
  const auto a = forward(m, d);
  const auto b = forward(m, d);
  CHECK(a.logits == b.logits);
  CHECK(a.loss == b.loss);
  CHECK(accuracy(m, d) == accuracy(m, d));
}

TEST_CASE("cross_entropy gradient wrt logits sums to zero") {
  // d loss / d z_c = softmax_c - [c == y]; the sum over classes is 0.
  const std::vector<double> z{0.3, -1.2, 2.0};
  const std::vector<std::uint16_t> y{2};
  const double eps = 1e-6;
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    auto zp = z, zm = z;
    zp[c] += eps;
    zm[c] -= eps;
    sum += (cross_entropy(zp, 3, y) - cross_entropy(zm, 3, y)) / (2 * eps);
  }
  CHECK(std::abs(sum) < 1e-8);
}

TEST_CASE("backward: zero input gives zero first-layer weight gradients") {
  QuantizedModel m;
  m.layers.push_back(testutil::fc_layer(3, 2, testutil::random_q(6, 8, 5), 0.1, 8, 0));
  m.layers.push_back(testutil::fc_layer(2, 2, testutil::random_q(4, 8, 6), 0.1, 8, 1));
  Dataset d;
  d.input_dims = {3};
  d.inputs.assign(6, 0.0f);
  d.labels = {0, 1};
  const auto g = backward(m, d);
  for (double v : g.weights[0]) CHECK(v == 0.0);
}

namespace {

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-7});
  return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("backward matches central differences") {
  for (int bw : {4, 8}) {
    const auto m = testutil::small_cnn(bw, 17);
    const auto d = testutil::random_data({1, 4, 4}, 6, 3, 23);
    RealNetwork net = dequantize(m);
    const auto g = backward(net, d);
    const double eps = 1e-4;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.size(); ++l) {
      for (std::size_t i = 0; i < net[l].weight.size(); ++i) {
        auto p = net, n = net;
        p[l].weight[i] += eps;
        n[l].weight[i] -= eps;
        const double fd = (forward(p, d).loss - forward(n, d).loss) / (2 * eps);
        worst = std::max(worst, rel_err(g.weights[l][i], fd));
      }
      for (std::size_t i = 0; i < net[l].bias.size(); ++i) {
        auto p = net, n = net;
        p[l].bias[i] += eps;
        n[l].bias[i] -= eps;
        const double fd = (forward(p, d).loss - forward(n, d).loss) / (2 * eps);
        worst = std::max(worst, rel_err(g.biases[l][i], fd));
      }
    }
    CHECK(worst < 1e-4);
    // The quantized overload differentiates at the dequantized point.
    const auto gq = backward(m, d);
    CHECK(gq.weights == g.weights);
  }
}

TEST_CASE("flip_bit_value: two's-complement semantics") {
  CHECK(flip_bit_value(0, 7, 8) == -128);
  CHECK(flip_bit_value(5, 1, 8) == 7);
  CHECK(flip_bit_value(-128, 7, 8) == 0);
  CHECK(flip_bit_value(-1, 0, 8) == -2);
  CHECK(flip_bit_value(1, 3, 4) == -7);  // 0001 -> 1001
  CHECK(flip_bit_value(7, 3, 4) == -1);
  CHECK_THROWS_AS(flip_bit_value(0, 8, 8), Error);
  CHECK_THROWS_AS(flip_bit_value(0, -1, 8), Error);
  CHECK_THROWS_AS(flip_bit_value(8, 0, 4), Error);
}

TEST_CASE("flip_bit_value: exhaustive involution and range") {
  for (int bw = 2; bw <= 8; ++bw) {
    const int lo = -(1 << (bw - 1)), hi = (1 << (bw - 1)) - 1;
    for (int q = lo; q <= hi; ++q) {
      for (int b = 0; b < bw; ++b) {
        const int f = flip_bit_value(q, b, bw);
        CHECK(f >= lo);
        CHECK(f <= hi);
        CHECK(flip_bit_value(f, b, bw) == q);
        const unsigned mask = (1u << bw) - 1;
        CHECK(std::popcount((static_cast<unsigned>(q) ^ static_cast<unsigned>(f)) & mask) == 1);
      }
    }
  }
}

TEST_CASE("flip_bit: copy semantics, one-bit Hamming distance") {
  const auto m = testutil::small_cnn(6, 4);
  const auto before = serialize_model(m);
  const auto f = flip_bit(m, 1, 7, 5);
  CHECK(serialize_model(m) == before);
  const auto after = serialize_model(f);
  REQUIRE(after.size() == before.size());
  int bits = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    bits += std::popcount(static_cast<unsigned>(before[i] ^ after[i]));
  }
  // Sign extension to a full byte means a sign-bit flip in a narrow layer
  // touches the padding bits too; bit 5 of a 6-bit weight is its sign.
  CHECK(bits == 1 + (8 - 6));
  const auto g = flip_bit(m, 1, 7, 2);
  int bits2 = 0;
  const auto after2 = serialize_model(g);
  for (std::size_t i = 0; i < before.size(); ++i) {
    bits2 += std::popcount(static_cast<unsigned>(before[i] ^ after2[i]));
  }
  CHECK(bits2 == 1);
  CHECK(serialize_model(flip_bit(f, 1, 7, 5)) == before);
  CHECK_THROWS_AS(flip_bit(m, 3, 0, 0), Error);
  CHECK_THROWS_AS(flip_bit(m, 0, 18, 0), Error);
  CHECK_THROWS_AS(flip_bit(m, 0, 0, 6), Error);
}

TEST_CASE("predict: ties go to the lowest class") {
  ForwardResult r;
  r.num_classes = 3;
  r.logits = {1, 1, 0, 0, 2, 2, 5, 5, 5};
  CHECK(predict(r) == std::vector<int>{0, 1, 0});
}

TEST_CASE("model file round trip and corruption") {
  const auto m = testutil::small_cnn(5, 9);
  const auto bytes = serialize_model(m);
  const auto back = deserialize_model(bytes);
  CHECK(serialize_model(back) == bytes);
  CHECK(back.layers[0].pool);
  CHECK_FALSE(back.layers[1].pool);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad_magic), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(deserialize_model(t), FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_model(trailing), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "hashtag_model_rt.qnn";
  save_model(m, path);
  CHECK(serialize_model(load_model(path)) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_model(path), Error);
}

TEST_CASE("dataset file round trip") {
  const auto d = testutil::random_data({2, 2, 2}, 5, 2, 4);
  const auto bytes = serialize_dataset(d);
  const auto back = deserialize_dataset(bytes, Split::Attack);
  CHECK(back.inputs == d.inputs);
  CHECK(back.labels == d.labels);
  CHECK(back.input_dims == d.input_dims);
  CHECK(back.split == Split::Attack);
  std::vector<std::uint8_t> t(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(deserialize_dataset(t), FormatError);
}

TEST_CASE("train_toy: separable blobs, determinism, zero epochs") {
  toy::BlobSpec spec;
  spec.classes = 2;
  spec.per_class = 100;
  spec.dims = {16};
  spec.separation = 4.0;
  spec.seed = 5;
  const auto blobs = toy::make_blobs(spec);
  const auto arch = toy::mlp(16, 8, 2, 8);
  const TrainOptions opt{20, 3, 0.05, 0.9, 32};
  const auto m = train_toy(arch, blobs.train, opt);
  CHECK(accuracy(m, blobs.validation) >= 0.95);
  CHECK(accuracy(m, blobs.attack) >= 0.95);
  CHECK(forward(m, blobs.validation).loss < std::log(2.0));
  CHECK(serialize_model(train_toy(arch, blobs.train, opt)) == serialize_model(m));

  TrainOptions none = opt;
  none.epochs = 0;
  CHECK(serialize_model(train_toy(arch, blobs.train, none)) ==
        serialize_model(quantize_network(init_network(arch, opt.seed), 8)));
}

TEST_CASE("train_toy: divergence is reported") {
  toy::BlobSpec spec;
  spec.classes = 2;
  spec.per_class = 40;
  spec.dims = {8};
  spec.seed = 2;
  const auto blobs = toy::make_blobs(spec);
  const TrainOptions wild{5, 1, 1e6, 0.9, 8};
  CHECK_THROWS_AS(train_toy(toy::mlp(8, 8, 2, 8), blobs.train, wild), Error);
}

TEST_CASE("even kernels are storable but not runnable") {
  QuantizedModel m;
  m.layers.push_back(testutil::conv_layer(2, 1, 2, testutil::random_q(8, 8, 1), 0.1, false, 8, 0));
  m.layers.push_back(testutil::fc_layer(8, 2, testutil::random_q(16, 8, 2), 0.1, 8, 1));
  CHECK_NOTHROW(m.validate());
  CHECK_THROWS_AS(forward(m, testutil::random_data({1, 2, 2}, 1, 2, 1)), Error);
}
