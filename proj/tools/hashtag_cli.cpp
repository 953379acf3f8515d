// hashtag: command-line driver for the signature / attack / detection pipeline.
//
// Exit status: 0 clean (or success), 2 compromised, 1 usage or I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hashtag/attack.hpp"
#include "hashtag/bytes.hpp"
#include "hashtag/detector.hpp"
#include "hashtag/error.hpp"
#include "hashtag/pearson.hpp"
#include "hashtag/rng.hpp"
#include "hashtag/sensitivity.hpp"
#include "hashtag/signature.hpp"
#include "hashtag/toy.hpp"

namespace fs = std::filesystem;
using hashtag::Error;
using nlohmann::json;
namespace net = hashtag::net;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitError = 1;
constexpr int kExitCompromised = 2;

void write_text(const fs::path& path, const std::string& text) {
  hashtag::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                      text.size()));
}

// Every artifact gets a sibling "<artifact>.config.json" holding the exact
// parameters that produced it. No timestamps, so reruns are byte-identical.
void write_config(const fs::path& artifact, const std::string& command, json params) {
  json j;
  j["command"] = command;
  j["params"] = std::move(params);
  write_text(fs::path(artifact.string() + ".config.json"), j.dump(2) + "\n");
}

struct Paths {
  fs::path train, validation, attack;
};

Paths data_paths(const fs::path& dir) {
  return {dir / "train.dsb", dir / "validation.dsb", dir / "attack.dsb"};
}

std::vector<std::uint32_t> parse_dims(const std::string& text) {
  std::vector<std::uint32_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      dims.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw Error("bad dimension \"" + item + "\" in --dims");
    }
  }
  if (dims.size() != 1 && dims.size() != 3) {
    throw Error("--dims needs one value (features) or three (C,H,W)");
  }
  return dims;
}

// ---- gendata ----------------------------------------------------------------

struct GendataArgs {
  int classes = 3;
  int per_class = 200;
  std::string dims = "1,8,8";
  double separation = 4.0;
  std::uint64_t seed = 7;
  std::string out = "data";
};

int cmd_gendata(const GendataArgs& a) {
  if (a.classes < 2) throw Error("gendata: need at least two classes");
  hashtag::toy::BlobSpec spec;
  spec.classes = a.classes;
  spec.per_class = a.per_class;
  spec.dims = parse_dims(a.dims);
  spec.separation = a.separation;
  spec.seed = a.seed;
  const auto blobs = hashtag::toy::make_blobs(spec);
  if (blobs.validation_short) {
    std::fprintf(stderr,
                 "warning: %d samples per class is below %d; validation uses all of them\n",
                 a.per_class, hashtag::toy::kValidationPerClass);
  }
  fs::create_directories(a.out);
  const auto p = data_paths(a.out);
  net::save_dataset(blobs.train, p.train);
  net::save_dataset(blobs.validation, p.validation);
  net::save_dataset(blobs.attack, p.attack);
  write_config(fs::path(a.out) / "data", "gendata",
               {{"classes", a.classes},
                {"per_class", a.per_class},
                {"dims", spec.dims},
                {"separation", a.separation},
                {"seed", a.seed}});
  std::printf("wrote %zu train / %zu validation / %zu attack samples to %s\n",
              blobs.train.size(), blobs.validation.size(), blobs.attack.size(), a.out.c_str());
  return kExitClean;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data = "data";
  std::string arch = "cnn6";
  int hidden = 16;
  int bitwidth = 8;
  int epochs = 20;
  double lr = 0.02;
  std::uint64_t seed = 11;
  std::string out = "model.qnn";
};

int cmd_train(const TrainArgs& a) {
  const auto p = data_paths(a.data);
  const auto train = net::load_dataset(p.train, net::Split::Train);
  int classes = 0;
  for (auto l : train.labels) classes = std::max(classes, static_cast<int>(l) + 1);
  net::ArchitectureSpec spec;
  if (a.arch == "cnn6") {
    if (train.input_dims.size() != 3) throw Error("train: cnn6 needs (C,H,W) inputs");
    spec = hashtag::toy::cnn6(train.input_dims[0], train.input_dims[1], train.input_dims[2],
                              classes, a.bitwidth);
  } else if (a.arch == "mlp") {
    spec = hashtag::toy::mlp(static_cast<std::uint32_t>(train.sample_width()),
                             static_cast<std::uint32_t>(a.hidden), classes, a.bitwidth);
  } else {
    throw Error("train: unknown architecture \"" + a.arch + "\" (cnn6 or mlp)");
  }
  net::TrainOptions opt;
  opt.epochs = a.epochs;
  opt.learning_rate = a.lr;
  opt.seed = a.seed;
  const auto model = net::train_toy(spec, train, opt);
  net::save_model(model, a.out);
  write_config(a.out, "train",
               {{"data", a.data},
                {"arch", a.arch},
                {"hidden", a.hidden},
                {"bitwidth", a.bitwidth},
                {"epochs", a.epochs},
                {"learning_rate", a.lr},
                {"momentum", opt.momentum},
                {"batch_size", opt.batch_size},
                {"seed", a.seed}});
  const auto val = net::load_dataset(p.validation, net::Split::Validation);
  std::printf("trained %zu-layer model, %zu weights; accuracy train %.4f validation %.4f\n",
              model.layers.size(), model.weight_count(), net::accuracy(model, train),
              net::accuracy(model, val));
  return kExitClean;
}

// ---- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  std::string model = "model.qnn";
  std::string data = "data";
  int checkpoints = 3;
  int width = 1;
  std::uint64_t seed = 1;  // master secret
  std::string out = "model.htag";
  std::string report;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto model = net::load_model(a.model);
  const auto val = net::load_dataset(data_paths(a.data).validation, net::Split::Validation);
  const auto rep = hashtag::sensitivity::taylor_sensitivity(model, val);
  const auto cps = hashtag::sensitivity::select_checkpoints(rep, a.checkpoints);
  const auto bundle = hashtag::signature::build_bundle(model, cps, a.seed, a.width);
  hashtag::signature::save_bundle(bundle, a.out);
  // The master secret stays out of the record; the bundle is the only place
  // secrets are written.
  write_config(a.out, "calibrate",
               {{"model", a.model},
                {"data", a.data},
                {"checkpoints", a.checkpoints},
                {"width", a.width}});
  if (!a.report.empty()) write_text(a.report, hashtag::sensitivity::report_json(rep));
  std::fputs(hashtag::sensitivity::format_report(rep).c_str(), stdout);
  std::printf("checkpoints:");
  for (int c : cps) std::printf(" %d", c);
  std::printf("\nbundle %s: %zu bytes\n", a.out.c_str(),
              hashtag::signature::serialize_bundle(bundle).size());
  return kExitClean;
}

// ---- attack -----------------------------------------------------------------

struct AttackArgs {
  std::string model = "model.qnn";
  std::string data = "data";
  double stop_acc = 0.0;  // 0: random-guess level
  int max_iters = 200;
  std::uint64_t seed = 0;
  std::string out = "attacked.qnn";
  std::string report;
};

double stop_level(double requested, const net::QuantizedModel& model, const net::Dataset& data) {
  return requested > 0.0 ? requested
                         : hashtag::attack::random_guess_threshold(model.num_classes(),
                                                                   data.size());
}

int cmd_attack(const AttackArgs& a) {
  const auto model = net::load_model(a.model);
  const auto data = net::load_dataset(data_paths(a.data).attack, net::Split::Attack);
  const double stop = stop_level(a.stop_acc, model, data);
  const auto trace = hashtag::attack::progressive_bfa(model, data, {stop, a.max_iters, a.seed, 64});
  net::save_model(hashtag::attack::apply_trace(model, trace), a.out);
  write_config(a.out, "attack",
               {{"model", a.model},
                {"data", a.data},
                {"stop_accuracy", stop},
                {"max_iters", a.max_iters},
                {"batch_size", 64},
                {"seed", a.seed}});
  if (!a.report.empty()) write_text(a.report, hashtag::attack::format_trace(trace));
  std::printf("%zu flips: accuracy %.4f -> %.4f (stop below %.4f)%s\n", trace.flips(),
              trace.initial_accuracy, trace.terminal_accuracy, stop,
              trace.hit_iteration_cap ? ", iteration cap hit" : "");
  return kExitClean;
}

// ---- verify -----------------------------------------------------------------

struct VerifyArgs {
  std::string model = "model.qnn";
  std::string bundle = "model.htag";
};

int cmd_verify(const VerifyArgs& a) {
  const auto model = net::load_model(a.model);
  const auto bundle = hashtag::signature::load_bundle(a.bundle);
  const auto r = hashtag::detector::verify(model, bundle);
  std::printf("checked layers:");
  for (int l : r.checked_layers) std::printf(" %d", l);
  std::printf("\n");
  if (!r.compromised()) {
    std::printf("verdict: clean\n");
    return kExitClean;
  }
  std::printf("verdict: COMPROMISED, mismatched layers:");
  for (int l : r.mismatched_layers) std::printf(" %d", l);
  std::printf("\n");
  return kExitCompromised;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string model = "model.qnn";
  std::string data = "data";
  int rounds = 50;
  int checkpoints = 0;  // 0: scan every k
  int width = 1;
  double stop_acc = 0.0;
  std::uint64_t seed = 1;
  std::string report;
};

int cmd_eval(const EvalArgs& a) {
  if (a.rounds < 1) throw Error("eval: need at least one round");
  const auto model = net::load_model(a.model);
  const auto p = data_paths(a.data);
  const auto val = net::load_dataset(p.validation, net::Split::Validation);
  const auto atk = net::load_dataset(p.attack, net::Split::Attack);
  const double stop = stop_level(a.stop_acc, model, atk);

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(a.rounds));
  std::iota(seeds.begin(), seeds.end(), 0);
  std::vector<hashtag::attack::AttackTrace> traces;
  for (auto s : seeds) traces.push_back(hashtag::attack::progressive_bfa(model, atk, {stop, 200, s, 64}));

  hashtag::detector::EvalHooks hooks;
  hooks.model_factory = [&](std::uint64_t) { return model; };
  hooks.bundle_builder = hashtag::detector::sensitivity_bundle_builder(val, a.seed, a.width);
  hooks.attack_runner = [&](const net::QuantizedModel&, std::uint64_t s) { return traces.at(s); };
  const auto st = hashtag::attack::attack_stats(traces, model.layers.size());

  const int layers = static_cast<int>(model.layers.size());
  const int lo = a.checkpoints > 0 ? a.checkpoints : 1;
  const int hi = a.checkpoints > 0 ? a.checkpoints : layers;
  json out = json::array();
  int minimal = 0;
  for (int k = lo; k <= hi; ++k) {
    const auto s = hashtag::detector::evaluate(hooks, k, seeds);
    std::printf("%s\n", hashtag::detector::summary_table(s, st).c_str());
    out.push_back(json::parse(hashtag::detector::summary_json(s, st)));
    if (!minimal && s.detection_rate && *s.detection_rate == 1.0 && s.false_positive_rate == 0.0) {
      minimal = k;
    }
  }
  if (minimal) std::printf("minimal k with DR = 1 and FPR = 0: %d\n", minimal);
  else std::printf("no k in [%d, %d] reached DR = 1 with FPR = 0\n", lo, hi);
  if (!a.report.empty()) {
    json j;
    j["stop_accuracy"] = stop;
    j["minimal_k"] = minimal ? json(minimal) : json(nullptr);
    j["summaries"] = out;
    write_text(a.report, j.dump(2) + "\n");
    write_config(a.report, "eval",
                 {{"model", a.model},
                  {"data", a.data},
                  {"rounds", a.rounds},
                  {"checkpoints", a.checkpoints},
                  {"width", a.width},
                  {"stop_accuracy", stop}});
  }
  return kExitClean;
}

// ---- collision --------------------------------------------------------------

struct CollisionArgs {
  std::size_t len = 1000;
  std::vector<std::size_t> k{2};
  std::uint64_t trials = 1'000'000;
  std::uint64_t seed = 1;
  std::string report;
};

int cmd_collision(const CollisionArgs& a) {
  json rows = json::array();
  std::printf("%6s %10s %12s %10s\n", "k", "trials", "collisions", "rate");
  for (auto k : a.k) {
    const auto r = hashtag::pearson::collision_experiment(a.len, k, a.trials, a.seed);
    std::printf("%6zu %10llu %12llu %10.6f\n", k, static_cast<unsigned long long>(r.trials),
                static_cast<unsigned long long>(r.collisions), r.rate());
    rows.push_back({{"k", k}, {"trials", r.trials}, {"collisions", r.collisions}, {"rate", r.rate()}});
  }
  if (!a.report.empty()) {
    write_text(a.report, json{{"len", a.len}, {"results", rows}}.dump(2) + "\n");
    write_config(a.report, "collision",
                 {{"len", a.len}, {"k", a.k}, {"trials", a.trials}, {"seed", a.seed}});
  }
  return kExitClean;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
  std::string model = "model.qnn";
  std::string bundle = "model.htag";
  std::string data = "data";
  int repetitions = 15;
  std::string report;
};

int cmd_bench(const BenchArgs& a) {
  const auto model = net::load_model(a.model);
  const auto bundle = hashtag::signature::load_bundle(a.bundle);
  const auto val = net::load_dataset(data_paths(a.data).validation, net::Split::Validation);
  const auto r = hashtag::detector::overhead_report(model, bundle, val, a.repetitions);
  std::printf("signature bytes   %zu (%zu checkpoints, %zu hashed weights)\n", r.signature_bytes,
              r.checkpoints, r.hashed_elements);
  std::printf("verify (median)   %.3e s\n", r.hash_seconds);
  std::printf("forward (median)  %.3e s on %zu samples\n", r.inference_seconds, val.size());
  std::printf("ratio             %.4f\n", r.ratio);
  if (!a.report.empty()) {
    // Timings vary run to run; only this report is not byte-reproducible.
    write_text(a.report, json{{"signature_bytes", r.signature_bytes},
                              {"checkpoints", r.checkpoints},
                              {"hashed_elements", r.hashed_elements},
                              {"hash_seconds", r.hash_seconds},
                              {"inference_seconds", r.inference_seconds},
                              {"ratio", r.ratio},
                              {"repetitions", r.repetitions}}
                             .dump(2) + "\n");
  }
  return kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pearson-hash integrity signatures for quantized networks"};
  app.require_subcommand(1);

  GendataArgs gd;
  auto* gendata = app.add_subcommand("gendata", "generate Gaussian-blob train/validation/attack splits");
  gendata->add_option("--classes", gd.classes, "number of classes")->capture_default_str();
  gendata->add_option("--per-class", gd.per_class, "training samples per class")->capture_default_str();
  gendata->add_option("--dims", gd.dims, "input dims, \"F\" or \"C,H,W\"")->capture_default_str();
  gendata->add_option("--separation", gd.separation, "minimum distance between class means")->capture_default_str();
  gendata->add_option("--seed", gd.seed)->capture_default_str();
  gendata->add_option("--out", gd.out, "output directory")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train and quantize a toy model");
  train->add_option("--data", tr.data, "dataset directory")->capture_default_str();
  train->add_option("--arch", tr.arch, "cnn6 or mlp")->capture_default_str();
  train->add_option("--hidden", tr.hidden, "mlp hidden units")->capture_default_str();
  train->add_option("--bitwidth", tr.bitwidth)->check(CLI::Range(4, 8))->capture_default_str();
  train->add_option("--epochs", tr.epochs)->capture_default_str();
  train->add_option("--lr", tr.lr)->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--out", tr.out)->capture_default_str();

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "rank layers by sensitivity and sign the top k");
  calibrate->add_option("--model", ca.model)->capture_default_str();
  calibrate->add_option("--data", ca.data)->capture_default_str();
  calibrate->add_option("--checkpoints", ca.checkpoints, "number of checkpoint layers")->capture_default_str();
  calibrate->add_option("--width", ca.width, "hash width in bytes")->check(CLI::Range(1, 255))->capture_default_str();
  calibrate->add_option("--seed", ca.seed, "master secret")->capture_default_str();
  calibrate->add_option("--out", ca.out, "bundle file")->capture_default_str();
  calibrate->add_option("--report", ca.report, "sensitivity report (JSON)");

  AttackArgs at;
  auto* atk = app.add_subcommand("attack", "run the progressive bit-flip attack");
  atk->add_option("--model", at.model)->capture_default_str();
  atk->add_option("--data", at.data)->capture_default_str();
  atk->add_option("--stop-acc", at.stop_acc, "stop below this accuracy (default: chance level)");
  atk->add_option("--max-iters", at.max_iters)->capture_default_str();
  atk->add_option("--seed", at.seed)->capture_default_str();
  atk->add_option("--out", at.out, "attacked model")->capture_default_str();
  atk->add_option("--report", at.report, "flip trace (text)");

  VerifyArgs ve;
  auto* verify = app.add_subcommand("verify", "check a model against its bundle (exit 2 if compromised)");
  verify->add_option("--model", ve.model)->capture_default_str();
  verify->add_option("--bundle", ve.bundle)->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "detection rate and false positives over attack rounds");
  eval->add_option("--model", ev.model)->capture_default_str();
  eval->add_option("--data", ev.data)->capture_default_str();
  eval->add_option("--rounds", ev.rounds)->capture_default_str();
  eval->add_option("--checkpoints", ev.checkpoints, "k (default: scan all)");
  eval->add_option("--width", ev.width)->check(CLI::Range(1, 255))->capture_default_str();
  eval->add_option("--stop-acc", ev.stop_acc, "stop below this accuracy (default: chance level)");
  eval->add_option("--seed", ev.seed, "master secret")->capture_default_str();
  eval->add_option("--report", ev.report, "summary (JSON)");

  CollisionArgs co;
  auto* collision = app.add_subcommand("collision", "Monte-Carlo multi-alteration collision rate");
  collision->add_option("--len", co.len)->capture_default_str();
  collision->add_option("--k", co.k, "altered units (repeatable)")->capture_default_str();
  collision->add_option("--trials", co.trials)->capture_default_str();
  collision->add_option("--seed", co.seed)->capture_default_str();
  collision->add_option("--report", co.report, "results (JSON)");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "verification vs inference overhead");
  bench->add_option("--model", be.model)->capture_default_str();
  bench->add_option("--bundle", be.bundle)->capture_default_str();
  bench->add_option("--data", be.data)->capture_default_str();
  bench->add_option("--repetitions", be.repetitions)->capture_default_str();
  bench->add_option("--report", be.report, "timings (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*gendata) return cmd_gendata(gd);
    if (*train) return cmd_train(tr);
    if (*calibrate) return cmd_calibrate(ca);
    if (*atk) return cmd_attack(at);
    if (*verify) return cmd_verify(ve);
    if (*eval) return cmd_eval(ev);
    if (*collision) return cmd_collision(co);
    if (*bench) return cmd_bench(be);
  } catch (const hashtag::StructuralMismatch& e) {
    std::fprintf(stderr, "error: wrong bundle for this model: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
