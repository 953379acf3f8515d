#pragma once

// Desk-scale simulation of the progressive bit-flip attack on quantized
// weights, a random-flip baseline, and attack profiling statistics.
//
// The attack module only ever sees the model and attack data. It has no
// access to signature bundles.

#include <cstdint>
#include <string>
#include <vector>

#include "hashtag/tensor_net.hpp"

namespace hashtag::attack {

struct FlipRecord {
  int step = 0;
  int layer = 0;
  std::size_t element = 0;
  int bit = 0;
  int old_value = 0;
  int new_value = 0;
  bool sign_changed = false;  // (old < 0) != (new < 0)
  double loss_before = 0.0;   // attack-batch loss before the flip
  double loss_after = 0.0;
  double accuracy_after = 0.0;

  friend bool operator==(const FlipRecord&, const FlipRecord&) = default;
};

struct AttackTrace {
  std::vector<FlipRecord> records;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  double stop_accuracy = 0.0;
  int max_iters = 0;
  double initial_accuracy = 0.0;
  double terminal_accuracy = 0.0;
  bool reached_threshold = false;  // terminal accuracy < stop_accuracy
  bool hit_iteration_cap = false;

  std::size_t flips() const { return records.size(); }
};

struct Candidate {
  std::size_t element = 0;
  int bit = 0;
  double predicted_delta = 0.0;  // g * scale * (new_q - old_q)
};

// Best single-bit flip of one layer under the linearized loss model: the
// (element, bit) maximizing the predicted loss increase g * dw. Ties go to
// the lower element, then the lower bit.
Candidate candidate_bit(const net::QuantizedModel& model,
                        const net::GradientSet& grads, int layer);

// Stop level for "accuracy at chance": a collapsed network that predicts one
// class scores exactly 1/C on balanced data, a plateau that loss-maximizing
// flips cannot push further down. Half a sample above 1/C makes
// `accuracy < threshold` equivalent to `correct <= samples / C`.
double random_guess_threshold(int num_classes, std::size_t samples);

struct AttackOptions {
  double stop_accuracy = 0.0;
  int max_iters = 200;
  std::uint64_t seed = 0;
  std::size_t batch_size = 64;  // capped at the attack-set size
};

// Per iteration: gradients on the round's fixed batch, one candidate per
// layer, true batch loss of each candidate (model restored in between), the
// highest-loss flip is committed (ties to the lower layer). Stops once
// accuracy on attack_data falls below stop_accuracy or after max_iters.
AttackTrace progressive_bfa(const net::QuantizedModel& model,
                            const net::Dataset& attack_data,
                            const AttackOptions& options);

// Flips n_flips uniformly random weight bits (uniform over every bit of
// every weight), recording the accuracy on `data` after each.
AttackTrace random_flip_baseline(const net::QuantizedModel& model,
                                 const net::Dataset& data, int n_flips,
                                 std::uint64_t seed);

// Re-applies every flip of a trace, in order.
net::QuantizedModel apply_trace(const net::QuantizedModel& model,
                                const AttackTrace& trace);

struct AttackStats {
  double sign_change_pct = 0.0;             // fraction in [0, 1]
  double per_layer_max_concentration = 0.0; // mean over traces of max hits in one layer
  std::vector<std::uint64_t> per_layer_hit_counts;
  std::size_t total_flips = 0;
};

AttackStats attack_stats(const std::vector<AttackTrace>& traces,
                         std::size_t num_layers);

// Line-oriented export: '#' metadata lines, then one record per line:
//   step layer element bit old new sign_changed loss acc
std::string format_trace(const AttackTrace& trace);
AttackTrace parse_trace(const std::string& text);

}  // namespace hashtag::attack
