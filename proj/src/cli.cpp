/*
 * Copyright (c) 2026, the rnnt-sim authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "rnntsim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rnntsim/analysis.hpp"
#include "rnntsim/decoders.hpp"
#include "rnntsim/engine.hpp"
#include "rnntsim/model.hpp"
#include "rnntsim/tensor.hpp"

namespace rnntsim {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GenOptions {
  std::string out_dir;
  int batch = 4;
  int frames = 10;
  int feature_dim = 8;
  int vocab = 16;
  int max_symbols = 5;
  uint64_t seed = 1;
  std::string pattern = "random";
};

struct DecodeOptions {
  std::string data_dir;
  std::string model = "neural:1";
  std::string algo = "baseline";
  std::string hyp_path;
  std::string report_path;
  std::string timeline_path;
  int warmup = 0;
  int iters = 1;
  int max_symbols = 0;  // 0: take the manifest value
  int hidden_dim = 8;
  int embed_dim = 8;
  int joint_dim = 8;
  std::string durations = "0,1,2,3,4";
  LatencyConfig latency;
};

std::vector<int32_t> parse_int_list(const std::string& csv) {
  std::vector<int32_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<int32_t>(std::stol(item)));
  }
  return out;
}

// -- dataset ------------------------------------------------------------------

struct Dataset {
  json manifest;
  std::vector<std::string> ids;
  Tensor x;        // [batch, frames, feature_dim]
  Tensor out_len;  // [batch]
  int feature_dim = 0;
  int vocab = 16;
  int max_symbols = 5;
  std::string scripted_path;  // empty when the dataset is not scripted
};

int cmd_gen(const GenOptions& opt, std::ostream& out) {
  if (opt.batch < 1 || opt.frames < 1 || opt.feature_dim < 1 || opt.vocab < 1) {
    throw ValueError("batch, frames, feature-dim and vocab must be >= 1");
  }
  if (opt.max_symbols < 1) throw ValueError("max-symbols must be >= 1");
  if (opt.pattern != "random" && opt.pattern != "adversarial") {
    throw ValueError("pattern must be random or adversarial");
  }
  fs::create_directories(opt.out_dir);
  json manifest;
  manifest["pattern"] = opt.pattern;
  manifest["vocab"] = opt.vocab;
  manifest["max_symbols"] = opt.max_symbols;
  manifest["seed"] = opt.seed;
  json records = json::array();

  if (opt.pattern == "adversarial") {
    // Two utterances: one plants max_symbols labels on every even frame, the
    // other on every odd frame, so a frame-synchronous batch always has one
    // element waiting on the other.
    const int batch = 2;
    ScriptedModel::LabelTable table(
        batch, std::vector<std::vector<int32_t>>(opt.frames));
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < opt.frames; ++t) {
        if (t % 2 == b % 2) {
          for (int j = 0; j < opt.max_symbols; ++j) {
            table[b][t].push_back((t * opt.max_symbols + j) % opt.vocab);
          }
        }
      }
    }
    ScriptedModel model(opt.vocab, opt.max_symbols, std::move(table));
    model.save_json(opt.out_dir + "/scripted.json");
    manifest["feature_dim"] = model.feature_dim();
    manifest["scripted_model"] = "scripted.json";
    const Tensor x = model.make_features();
    for (int b = 0; b < batch; ++b) {
      char name[32];
      std::snprintf(name, sizeof(name), "utt_%03d.tnsr", b);
      write_tensor_file(opt.out_dir + "/" + name, slice_element(x, b));
      json rec;
      std::snprintf(name, sizeof(name), "utt_%03d", b);
      rec["id"] = name;
      std::snprintf(name, sizeof(name), "utt_%03d.tnsr", b);
      rec["features"] = name;
      rec["out_len"] = opt.frames;
      records.push_back(rec);
    }
  } else {
    manifest["feature_dim"] = opt.feature_dim;
    Rng rng(opt.seed);
    for (int b = 0; b < opt.batch; ++b) {
      std::vector<float> data(static_cast<size_t>(opt.frames) * opt.feature_dim);
      for (float& v : data) v = rng.uniform(-1.0f, 1.0f);
      const int out_len = 1 + rng.uniform_int(opt.frames);
      char name[32];
      std::snprintf(name, sizeof(name), "utt_%03d.tnsr", b);
      write_tensor_file(opt.out_dir + "/" + name,
                        Tensor::from_floats(std::move(data),
                                            {opt.frames, opt.feature_dim}));
      json rec;
      std::snprintf(name, sizeof(name), "utt_%03d", b);
      rec["id"] = name;
      std::snprintf(name, sizeof(name), "utt_%03d.tnsr", b);
      rec["features"] = name;
      rec["out_len"] = out_len;
      records.push_back(rec);
    }
  }
  manifest["records"] = records;
  std::ofstream os(opt.out_dir + "/manifest.json");
  if (!os) throw IoError("cannot write manifest in " + opt.out_dir);
  os << manifest.dump(2) << "\n";
  out << "wrote " << records.size() << " utterances to " << opt.out_dir << "\n";
  return 0;
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw IoError("cannot read " + dir + "/manifest.json");
  Dataset ds;
  ds.manifest = json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (ds.manifest.is_discarded()) throw IoError("invalid manifest in " + dir);
  ds.feature_dim = ds.manifest.at("feature_dim").get<int>();
  ds.vocab = ds.manifest.value("vocab", 16);
  ds.max_symbols = ds.manifest.value("max_symbols", 5);
  if (ds.manifest.contains("scripted_model")) {
    ds.scripted_path =
        dir + "/" + ds.manifest.at("scripted_model").get<std::string>();
  }
  std::vector<Tensor> feats;
  std::vector<int32_t> lens;
  for (const auto& rec : ds.manifest.at("records")) {
    ds.ids.push_back(rec.at("id").get<std::string>());
    feats.push_back(
        read_tensor_file(dir + "/" + rec.at("features").get<std::string>()));
    lens.push_back(rec.at("out_len").get<int32_t>());
  }
  if (feats.empty()) throw ValueError("dataset has no records");
  const int64_t frames = feats[0].dim(0), width = feats[0].dim(1);
  for (const auto& f : feats) {
    if (f.rank() != 2 || f.dim(0) != frames || f.dim(1) != width) {
      throw DimensionError("all utterances must share [frames, feature_dim]");
    }
  }
  const int64_t batch = static_cast<int64_t>(feats.size());
  Tensor x(Dtype::Float32, {batch, frames, width});
  auto px = x.f32();
  for (int64_t b = 0; b < batch; ++b) {
    std::copy_n(feats[static_cast<size_t>(b)].f32().data(), frames * width,
                &px[b * frames * width]);
  }
  ds.x = std::move(x);
  ds.out_len = Tensor::from_ints(std::move(lens), {batch});
  return ds;
}

// -- decode -------------------------------------------------------------------

std::unique_ptr<DecoderModel> build_model(const DecodeOptions& opt,
                                          const Dataset& ds, bool needs_tdt,
                                          int max_symbols) {
  const auto colon = opt.model.find(':');
  const std::string kind = opt.model.substr(0, colon);
  const std::string arg =
      colon == std::string::npos ? "" : opt.model.substr(colon + 1);
  if (kind == "scripted") {
    const std::string path = arg.empty() ? ds.scripted_path : arg;
    if (path.empty()) throw ValueError("no scripted model available");
    auto model = std::make_unique<ScriptedModel>(ScriptedModel::load_json(path));
    if (model->feature_dim() != ds.feature_dim) {
      throw DimensionError("scripted model feature width mismatch");
    }
    if (model->max_symbols() != max_symbols) {
      throw ValueError("scripted model was planted for max_symbols=" +
                       std::to_string(model->max_symbols()));
    }
    if (needs_tdt && !model->has_duration_head()) {
      throw StateError("scripted model has no duration table");
    }
    return model;
  }
  if (kind == "neural") {
    RnntDims dims;
    dims.vocab = ds.vocab;
    dims.embed = opt.embed_dim;
    dims.hidden = opt.hidden_dim;
    dims.joint = opt.joint_dim;
    dims.feature = ds.feature_dim;
    if (needs_tdt) dims.durations = parse_int_list(opt.durations);
    const uint64_t seed = arg.empty() ? 1 : std::stoull(arg);
    return std::make_unique<NeuralModel>(init_params(seed, dims));
  }
  throw ValueError("model must be neural:<seed> or scripted:<path>");
}

json mean_report(const std::vector<TimingReport>& reports) {
  json j;
  TimingReport acc;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    acc.span_us += r.span_us;
    acc.host_busy_us += r.host_busy_us;
    acc.device_busy_us += r.device_busy_us;
    acc.idle_fraction += r.idle_fraction;
    acc.num_kernels += r.num_kernels;
    acc.num_syncs += r.num_syncs;
    acc.num_permitted_syncs += r.num_permitted_syncs;
    acc.num_graph_launches += r.num_graph_launches;
  }
  j["span_us"] = acc.span_us / n;
  j["host_busy_us"] = acc.host_busy_us / n;
  j["device_busy_us"] = acc.device_busy_us / n;
  j["idle_fraction"] = acc.idle_fraction / n;
  j["num_kernels"] = static_cast<double>(acc.num_kernels) / n;
  j["num_syncs"] = static_cast<double>(acc.num_syncs) / n;
  j["num_permitted_syncs"] = static_cast<double>(acc.num_permitted_syncs) / n;
  j["num_graph_launches"] = static_cast<double>(acc.num_graph_launches) / n;
  return j;
}

int cmd_decode(const DecodeOptions& opt, std::ostream& out) {
  static const std::map<std::string, std::pair<DecodeAlgo, bool>> kGraphAlgos = {
      {"graph", {DecodeAlgo::FrameSync, true}},
      {"label_loop_graph", {DecodeAlgo::LabelLoop, true}},
      {"tdt_label_loop_graph", {DecodeAlgo::TdtLabelLoop, true}},
  };
  if (opt.warmup < 0 || opt.iters < 1) {
    throw ValueError("warmup must be >= 0 and iters >= 1");
  }
  Dataset ds = load_dataset(opt.data_dir);
  const int max_symbols = opt.max_symbols > 0 ? opt.max_symbols : ds.max_symbols;
  const bool needs_tdt = opt.algo.rfind("tdt", 0) == 0;
  auto model = build_model(opt, ds, needs_tdt, max_symbols);

  Engine engine(opt.latency, sync_policy_from_env());
  const int batch = static_cast<int>(ds.x.dim(0));
  const int frames = static_cast<int>(ds.x.dim(1));
  Hypotheses hyps;
  const int runs = opt.warmup + opt.iters;

  if (auto it = kGraphAlgos.find(opt.algo); it != kGraphAlgos.end()) {
    CapturedDecoder captured = build_decode_graph(
        engine, *model, it->second.first, batch, frames, max_symbols);
    for (int i = 0; i < runs; ++i) {
      hyps = replay_decode(captured, ds.x, ds.out_len);
    }
  } else {
    for (int i = 0; i < runs; ++i) {
      if (opt.algo == "baseline") {
        hyps = greedy_decode_baseline(engine, *model, ds.x, ds.out_len,
                                      max_symbols);
      } else if (opt.algo == "sync_free") {
        hyps = greedy_decode_sync_free(engine, *model, ds.x, ds.out_len,
                                       max_symbols);
      } else if (opt.algo == "label_loop") {
        hyps = label_looping_decode(engine, *model, ds.x, ds.out_len,
                                    max_symbols);
      } else if (opt.algo == "tdt_label_loop") {
        hyps = tdt_label_looping_decode(engine, *model, ds.x, ds.out_len,
                                        max_symbols);
      } else {
        throw ValueError("unknown algorithm: " + opt.algo);
      }
    }
  }

  if (!opt.hyp_path.empty()) write_hypotheses_jsonl(opt.hyp_path, ds.ids, hyps);

  auto spans = engine.timeline_stats_all("decode");
  const std::vector<TimingReport> measured(
      spans.end() - std::min<size_t>(spans.size(), opt.iters), spans.end());
  json report = mean_report(measured);
  report["algo"] = opt.algo;
  report["batch"] = batch;
  report["frames"] = frames;
  report["max_symbols"] = max_symbols;
  report["warmup"] = opt.warmup;
  report["iters"] = opt.iters;
  report["total_syncs"] = engine.sync_count();
  if (!opt.report_path.empty()) {
    std::ofstream os(opt.report_path);
    if (!os) throw IoError("cannot write " + opt.report_path);
    os << report.dump(2) << "\n";
  }
  if (!opt.timeline_path.empty()) {
    std::ofstream os(opt.timeline_path);
    if (!os) throw IoError("cannot write " + opt.timeline_path);
    engine.export_timeline_csv(os);
  }
  out << report.dump() << "\n";
  return 0;
}

// -- compare ------------------------------------------------------------------

int cmd_compare(const std::string& path_a, const std::string& path_b,
                std::ostream& out, std::ostream& err) {
  auto a = read_hypotheses_jsonl(path_a);
  auto b = read_hypotheses_jsonl(path_b);
  std::map<std::string, const Hypothesis*> by_id;
  for (const auto& [id, hyp] : b) by_id[id] = &hyp;
  if (a.size() != b.size() || a.size() != by_id.size()) {
    err << "utterance id sets differ\n";
    return 2;
  }
  Hypotheses refs, hyps;
  bool identical = true;
  for (const auto& [id, hyp] : a) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      err << "utterance id sets differ\n";
      return 2;
    }
    refs.push_back(hyp);
    hyps.push_back(*it->second);
    identical = identical && hyp.tokens == it->second->tokens;
  }
  out << "WER " << wer(refs, hyps) << "\n";
  return identical ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"virtual-device transducer greedy decoding simulator"};
  app.name("rnntsim");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a decode workload");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--batch", gen.batch, "utterance count");
  gen_cmd->add_option("--frames", gen.frames, "encoder frames per utterance");
  gen_cmd->add_option("--feature-dim", gen.feature_dim, "encoder feature width");
  gen_cmd->add_option("--vocab", gen.vocab, "label vocabulary size");
  gen_cmd->add_option("--max-symbols", gen.max_symbols,
                      "per-frame emission cap the workload targets");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--pattern", gen.pattern, "random or adversarial")
      ->check(CLI::IsMember({"random", "adversarial"}));

  DecodeOptions dec;
  auto* dec_cmd = app.add_subcommand("decode", "decode a generated workload");
  dec_cmd->add_option("--data", dec.data_dir, "dataset directory")->required();
  dec_cmd->add_option("--model", dec.model,
                      "neural:<seed> or scripted:<path>");
  dec_cmd
      ->add_option("--algo", dec.algo, "decoding algorithm")
      ->check(CLI::IsMember({"baseline", "sync_free", "graph", "label_loop",
                             "label_loop_graph", "tdt_label_loop",
                             "tdt_label_loop_graph"}));
  dec_cmd->add_option("--hyp", dec.hyp_path, "hypotheses output (jsonl)");
  dec_cmd->add_option("--report", dec.report_path, "timing report output");
  dec_cmd->add_option("--timeline", dec.timeline_path, "timeline CSV output");
  dec_cmd->add_option("--warmup", dec.warmup, "unmeasured repetitions");
  dec_cmd->add_option("--iters", dec.iters, "measured repetitions");
  dec_cmd->add_option("--max-symbols", dec.max_symbols,
                      "per-frame emission cap (default: manifest value)");
  dec_cmd->add_option("--hidden-dim", dec.hidden_dim, "prediction hidden width");
  dec_cmd->add_option("--embed-dim", dec.embed_dim, "embedding width");
  dec_cmd->add_option("--joint-dim", dec.joint_dim, "joint trunk width");
  dec_cmd->add_option("--durations", dec.durations,
                      "duration classes for duration-head decoding");
  dec_cmd->add_option("--launch-latency-us", dec.latency.launch_latency_us,
                      "kernel launch latency");
  dec_cmd->add_option("--host-overhead-us",
                      dec.latency.host_overhead_per_launch_us,
                      "host work between launches");
  dec_cmd->add_option("--d2h-sync-us", dec.latency.d2h_sync_latency_us,
                      "device-to-host sync latency");
  dec_cmd->add_option("--kernel-runtime-us",
                      dec.latency.default_kernel_runtime_us,
                      "default kernel runtime");
  dec_cmd->add_option("--graph-launch-us", dec.latency.graph_launch_latency_us,
                      "graph launch latency");
  dec_cmd->add_option("--per-node-overhead-us",
                      dec.latency.per_node_device_overhead_us,
                      "device-side per-node overhead during replay");

  std::string cmp_a, cmp_b;
  auto* cmp_cmd =
      app.add_subcommand("compare", "compare two hypothesis files");
  cmp_cmd->add_option("a", cmp_a, "first hypotheses file")->required();
  cmp_cmd->add_option("b", cmp_b, "second hypotheses file")->required();

  auto* calc_cmd = app.add_subcommand("calc", "closed-form arithmetic");
  double calc_fraction = 0.0, calc_speedup = 0.0, calc_p = 0.0;
  int64_t calc_k = 1;
  double calc_audio = 0.0, calc_wall = 1.0, calc_gap = 5.0, calc_kernel = 1.0;
  auto* amdahl_cmd = calc_cmd->add_subcommand("amdahl", "Amdahl projection");
  amdahl_cmd->add_option("--fraction", calc_fraction, "optimized fraction")
      ->required();
  amdahl_cmd->add_option("--speedup", calc_speedup,
                         "component speedup (omit for the limit)");
  auto* adv_cmd =
      calc_cmd->add_subcommand("adversarial", "slow-batch probability");
  adv_cmd->add_option("-p", calc_p, "per-input adversarial probability")
      ->required();
  adv_cmd->add_option("-k", calc_k, "batch size")->required();
  auto* rtfx_cmd = calc_cmd->add_subcommand("rtfx", "throughput factor");
  rtfx_cmd->add_option("--audio-seconds", calc_audio, "audio amount")
      ->required();
  rtfx_cmd->add_option("--wall-seconds", calc_wall, "wall-clock time")
      ->required();
  auto* spd_cmd =
      calc_cmd->add_subcommand("speedup", "predicted graph speedup");
  spd_cmd->add_option("--gap", calc_gap, "average inter-launch gap (us)")
      ->required();
  spd_cmd->add_option("--kernel", calc_kernel, "average kernel runtime (us)")
      ->required();
  calc_cmd->require_subcommand(1);

  app.require_subcommand(1);

  std::vector<const char*> argv;
  argv.push_back("rnntsim");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (dec_cmd->parsed()) return cmd_decode(dec, out);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_a, cmp_b, out, err);
    if (calc_cmd->parsed()) {
      char buf[64];
      double value = 0.0;
      if (amdahl_cmd->parsed()) {
        value = calc_speedup > 0.0 ? amdahl_overall(calc_fraction, calc_speedup)
                                   : amdahl_max(calc_fraction);
      } else if (adv_cmd->parsed()) {
        value = adversarial_prob(calc_p, calc_k);
      } else if (rtfx_cmd->parsed()) {
        value = rtfx(calc_audio, calc_wall);
      } else {
        value = predicted_graph_speedup(calc_gap, calc_kernel);
      }
      std::snprintf(buf, sizeof(buf), "%.6g", value);
      out << buf << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "no command selected\n";
  return 2;
}

}  // namespace rnntsim
