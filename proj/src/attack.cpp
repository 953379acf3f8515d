#include "hashtag/attack.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hashtag/error.hpp"
#include "hashtag/rng.hpp"

namespace hashtag::attack {

Candidate candidate_bit(const net::QuantizedModel& model,
                        const net::GradientSet& grads, int layer) {
  if (layer < 0 || layer >= static_cast<int>(model.layers.size())) {
    throw Error("candidate_bit: layer " + std::to_string(layer) + " out of range");
  }
  const auto& l = model.layers[static_cast<std::size_t>(layer)];
  if (grads.weights.size() != model.layers.size() ||
      grads.weights[static_cast<std::size_t>(layer)].size() != l.element_count()) {
    throw Error("candidate_bit: gradients are not shape-congruent with the model");
  }
  const auto& g = grads.weights[static_cast<std::size_t>(layer)];
  Candidate best;
  bool have = false;
  for (std::size_t e = 0; e < l.element_count(); ++e) {
    const int q = l.weight_q[e];
    for (int b = 0; b < l.bitwidth; ++b) {
      const int nq = net::flip_bit_value(q, b, l.bitwidth);
      const double delta = g[e] * l.scale * static_cast<double>(nq - q);
      if (!have || delta > best.predicted_delta) {
        best = {e, b, delta};
        have = true;
      }
    }
  }
  return best;
}

double random_guess_threshold(int num_classes, std::size_t samples) {
  if (num_classes < 2) throw Error("random-guess threshold needs at least two classes");
  if (samples == 0) throw Error("random-guess threshold needs a non-empty dataset");
  return 1.0 / num_classes + 0.5 / static_cast<double>(samples);
}

namespace {

net::Dataset draw_batch(const net::Dataset& data, std::size_t batch_size,
                        std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t n = std::min(batch_size, data.size());
  SplitMix64 rng(mix64(seed ^ 0xBA7C'4000'0000'0000ULL));
  // Partial Fisher-Yates: the first n slots are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  }
  idx.resize(n);
  return data.subset(idx);
}

FlipRecord make_record(int step, int layer, std::size_t element, int bit,
                       int old_value, int new_value) {
  FlipRecord r;
  r.step = step;
  r.layer = layer;
  r.element = element;
  r.bit = bit;
  r.old_value = old_value;
  r.new_value = new_value;
  r.sign_changed = (old_value < 0) != (new_value < 0);
  return r;
}

}  // namespace

AttackTrace progressive_bfa(const net::QuantizedModel& model,
                            const net::Dataset& attack_data,
                            const AttackOptions& options) {
  if (!(options.stop_accuracy > 0.0 && options.stop_accuracy < 1.0)) {
    throw Error("attack: stop accuracy must lie in (0, 1)");
  }
  if (attack_data.size() == 0) throw Error("attack: empty attack data");
  if (options.max_iters < 0) throw Error("attack: negative iteration cap");
  if (options.batch_size == 0) throw Error("attack: batch size must be positive");

  AttackTrace trace;
  trace.seed = options.seed;
  trace.batch_size = std::min(options.batch_size, attack_data.size());
  trace.stop_accuracy = options.stop_accuracy;
  trace.max_iters = options.max_iters;

  const net::Dataset batch = draw_batch(attack_data, options.batch_size, options.seed);
  net::QuantizedModel current = model;
  double acc = net::accuracy(current, attack_data);
  trace.initial_accuracy = acc;

  for (int step = 0; step < options.max_iters && !(acc < options.stop_accuracy); ++step) {
    double loss_before = 0.0;
    const net::GradientSet grads = net::backward(current, batch, &loss_before);

    int best_layer = -1;
    Candidate best;
    double best_loss = 0.0;
    for (int l = 0; l < static_cast<int>(current.layers.size()); ++l) {
      const Candidate c = candidate_bit(current, grads, l);
      // Evaluate on a copy; `current` stays untouched between candidates.
      const double loss =
          net::forward(net::flip_bit(current, l, c.element, c.bit), batch).loss;
      if (best_layer < 0 || loss > best_loss) {
        best_layer = l;
        best = c;
        best_loss = loss;
      }
    }

    auto& layer = current.layers[static_cast<std::size_t>(best_layer)];
    const int old_value = layer.weight_q[best.element];
    current = net::flip_bit(current, best_layer, best.element, best.bit);
    const int new_value = current.layers[static_cast<std::size_t>(best_layer)]
                              .weight_q[best.element];
    acc = net::accuracy(current, attack_data);

    FlipRecord r = make_record(step, best_layer, best.element, best.bit,
                               old_value, new_value);
    r.loss_before = loss_before;
    r.loss_after = best_loss;
    r.accuracy_after = acc;
    trace.records.push_back(r);
  }

  trace.terminal_accuracy = acc;
  trace.reached_threshold = acc < options.stop_accuracy;
  trace.hit_iteration_cap = !trace.reached_threshold;
  return trace;
}

AttackTrace random_flip_baseline(const net::QuantizedModel& model,
                                 const net::Dataset& data, int n_flips,
                                 std::uint64_t seed) {
  if (n_flips < 1) throw Error("random baseline: need at least one flip");
  std::vector<std::size_t> bit_offsets;  // first global bit of each layer
  std::size_t total_bits = 0;
  for (const auto& l : model.layers) {
    bit_offsets.push_back(total_bits);
    total_bits += l.element_count() * static_cast<std::size_t>(l.bitwidth);
  }
  if (total_bits == 0) throw Error("random baseline: model has no weights");

  AttackTrace trace;
  trace.seed = seed;
  trace.max_iters = n_flips;
  net::QuantizedModel current = model;
  trace.initial_accuracy = net::accuracy(current, data);
  SplitMix64 rng(mix64(seed ^ 0x7A4D'0000'0000'0000ULL));
  double loss = net::forward(current, data).loss;
  for (int step = 0; step < n_flips; ++step) {
    const std::size_t pick = rng.below(total_bits);
    const auto it = std::upper_bound(bit_offsets.begin(), bit_offsets.end(), pick);
    const auto layer = static_cast<std::size_t>(it - bit_offsets.begin() - 1);
    const std::size_t local = pick - bit_offsets[layer];
    const auto bw = static_cast<std::size_t>(current.layers[layer].bitwidth);
    const std::size_t element = local / bw;
    const int bit = static_cast<int>(local % bw);

    const int old_value = current.layers[layer].weight_q[element];
    current = net::flip_bit(current, static_cast<int>(layer), element, bit);
    FlipRecord r = make_record(step, static_cast<int>(layer), element, bit, old_value,
                               current.layers[layer].weight_q[element]);
    const auto res = net::forward(current, data);
    r.loss_before = loss;
    r.loss_after = res.loss;
    loss = res.loss;
    const auto pred = net::predict(res);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
      if (pred[s] == static_cast<int>(data.labels[s])) ++correct;
    }
    r.accuracy_after = data.size() ? static_cast<double>(correct) / data.size() : 0.0;
    trace.records.push_back(r);
  }
  trace.terminal_accuracy = trace.records.back().accuracy_after;
  return trace;
}

net::QuantizedModel apply_trace(const net::QuantizedModel& model,
                                const AttackTrace& trace) {
  net::QuantizedModel out = model;
  for (const auto& r : trace.records) {
    out = net::flip_bit(out, r.layer, r.element, r.bit);
  }
  return out;
}

AttackStats attack_stats(const std::vector<AttackTrace>& traces,
                         std::size_t num_layers) {
  if (traces.empty()) throw Error("attack stats: no traces");
  AttackStats s;
  s.per_layer_hit_counts.assign(num_layers, 0);
  std::size_t sign_changes = 0;
  double concentration = 0.0;
  for (const auto& t : traces) {
    std::vector<std::uint64_t> hits(num_layers, 0);
    for (const auto& r : t.records) {
      if (r.layer < 0 || static_cast<std::size_t>(r.layer) >= num_layers) {
        throw Error("attack stats: record layer outside the model");
      }
      ++hits[static_cast<std::size_t>(r.layer)];
      ++s.per_layer_hit_counts[static_cast<std::size_t>(r.layer)];
      if (r.sign_changed) ++sign_changes;
      ++s.total_flips;
    }
    concentration += static_cast<double>(
        hits.empty() ? 0 : *std::max_element(hits.begin(), hits.end()));
  }
  s.sign_change_pct = s.total_flips
                          ? static_cast<double>(sign_changes) / s.total_flips
                          : 0.0;
  s.per_layer_max_concentration = concentration / static_cast<double>(traces.size());
  return s;
}

std::string format_trace(const AttackTrace& t) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line,
                "# seed %llu\n# batch_size %zu\n# stop_accuracy %.17g\n"
                "# max_iters %d\n# initial_accuracy %.17g\n"
                "# terminal_accuracy %.17g\n# reached_threshold %d\n"
                "# hit_iteration_cap %d\n",
                static_cast<unsigned long long>(t.seed), t.batch_size,
                t.stop_accuracy, t.max_iters, t.initial_accuracy,
                t.terminal_accuracy, t.reached_threshold ? 1 : 0,
                t.hit_iteration_cap ? 1 : 0);
  out += line;
  out += "# step layer element bit old new sign_changed loss_before loss_after acc\n";
  for (const auto& r : t.records) {
    std::snprintf(line, sizeof line, "%d %d %zu %d %d %d %d %.17g %.17g %.17g\n",
                  r.step, r.layer, r.element, r.bit, r.old_value, r.new_value,
                  r.sign_changed ? 1 : 0, r.loss_before, r.loss_after,
                  r.accuracy_after);
    out += line;
  }
  return out;
}

AttackTrace parse_trace(const std::string& text) {
  AttackTrace t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "seed") ls >> t.seed;
      else if (key == "batch_size") ls >> t.batch_size;
      else if (key == "stop_accuracy") ls >> t.stop_accuracy;
      else if (key == "max_iters") ls >> t.max_iters;
      else if (key == "initial_accuracy") ls >> t.initial_accuracy;
      else if (key == "terminal_accuracy") ls >> t.terminal_accuracy;
      else if (key == "reached_threshold") { int v = 0; ls >> v; t.reached_threshold = v; }
      else if (key == "hit_iteration_cap") { int v = 0; ls >> v; t.hit_iteration_cap = v; }
      if (ls.fail()) throw FormatError("trace line " + std::to_string(lineno) + ": bad metadata");
      continue;
    }
    FlipRecord r;
    int sc = 0;
    ls >> r.step >> r.layer >> r.element >> r.bit >> r.old_value >> r.new_value >>
        sc >> r.loss_before >> r.loss_after >> r.accuracy_after;
    if (ls.fail()) throw FormatError("trace line " + std::to_string(lineno) + ": bad record");
    r.sign_changed = sc != 0;
    t.records.push_back(r);
  }
  return t;
}

}  // namespace hashtag::attack
