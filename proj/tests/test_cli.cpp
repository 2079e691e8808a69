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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnntsim/cli.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = rnntsim::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const {
    return (path / leaf).string();
  }
};

}  // namespace

TEST_CASE("gen is byte deterministic for a fixed seed") {
  TempDir dir("rnntsim_cli_gen");
  const auto a = run({"gen", "--out", dir / "a", "--batch", "3", "--frames",
                      "5", "--feature-dim", "4", "--vocab", "9", "--seed",
                      "21"});
  const auto b = run({"gen", "--out", dir / "b", "--batch", "3", "--frames",
                      "5", "--feature-dim", "4", "--vocab", "9", "--seed",
                      "21"});
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  for (const char* leaf :
       {"manifest.json", "utt_000.tnsr", "utt_001.tnsr", "utt_002.tnsr"}) {
    CHECK(slurp(dir / ("a/" + std::string(leaf))) ==
          slurp(dir / ("b/" + std::string(leaf))));
  }
}

TEST_CASE("gen rejects an empty batch") {
  TempDir dir("rnntsim_cli_gen_bad");
  const auto r = run({"gen", "--out", dir / "x", "--batch", "0"});
  CHECK(r.code == 2);
}

TEST_CASE("gen adversarial plants the even/odd pair") {
  TempDir dir("rnntsim_cli_adv");
  const auto r = run({"gen", "--out", dir / "ds", "--pattern", "adversarial",
                      "--frames", "4", "--max-symbols", "5"});
  REQUIRE(r.code == 0);
  const json manifest = json::parse(slurp(dir / "ds/manifest.json"));
  CHECK(manifest.at("feature_dim") == 2);
  CHECK(manifest.at("records").size() == 2);
  const json scripted = json::parse(slurp(dir / "ds/scripted.json"));
  const auto& labels = scripted.at("labels");
  CHECK(labels[0][0].size() == 5);  // element A: even frames
  CHECK(labels[0][1].size() == 0);
  CHECK(labels[0][2].size() == 5);
  CHECK(labels[1][0].size() == 0);  // element B: odd frames
  CHECK(labels[1][1].size() == 5);
  CHECK(labels[1][3].size() == 5);
}

TEST_CASE("decode algorithms agree and compare reports equality") {
  TempDir dir("rnntsim_cli_decode");
  REQUIRE(run({"gen", "--out", dir / "ds", "--batch", "3", "--frames", "6",
               "--feature-dim", "4", "--vocab", "8", "--seed", "5"})
              .code == 0);
  const std::vector<std::string> algos = {"baseline", "sync_free", "graph",
                                          "label_loop", "label_loop_graph"};
  for (const auto& algo : algos) {
    const auto r =
        run({"decode", "--data", dir / "ds", "--model", "neural:3", "--algo",
             algo, "--hyp", dir / (algo + ".jsonl"), "--report",
             dir / (algo + ".json")});
    REQUIRE(r.code == 0);
  }
  for (size_t i = 1; i < algos.size(); ++i) {
    const auto cmp = run({"compare", dir / (algos[0] + ".jsonl"),
                          dir / (algos[i] + ".jsonl")});
    CHECK(cmp.code == 0);
    CHECK(cmp.out.find("WER 0") != std::string::npos);
  }

  const json base = json::parse(slurp(dir / "baseline.json"));
  CHECK(base.at("idle_fraction").get<double>() ==
        doctest::Approx(0.8).epsilon(0.0625));
  CHECK(base.at("num_syncs").get<double>() > 0.0);

  const json graph = json::parse(slurp(dir / "graph.json"));
  CHECK(graph.at("num_syncs").get<double>() == 0.0);
  CHECK(graph.at("num_graph_launches").get<double>() == 1.0);
  CHECK(graph.at("idle_fraction").get<double>() < 0.05);
}

TEST_CASE("compare flags token differences and id mismatches") {
  TempDir dir("rnntsim_cli_cmp");
  std::ofstream(dir / "a.jsonl")
      << R"({"id":"u0","tokens":[1,2],"frames":[0,0],"scores":[-1.0,-1.0],"total_score":-2.0})"
      << "\n";
  std::ofstream(dir / "b.jsonl")
      << R"({"id":"u0","tokens":[1,3],"frames":[0,0],"scores":[-1.0,-1.0],"total_score":-2.0})"
      << "\n";
  std::ofstream(dir / "c.jsonl")
      << R"({"id":"u1","tokens":[1,2],"frames":[0,0],"scores":[-1.0,-1.0],"total_score":-2.0})"
      << "\n";
  std::ofstream(dir / "bad.jsonl") << "{not json}\n";

  CHECK(run({"compare", dir / "a.jsonl", dir / "a.jsonl"}).code == 0);
  const auto diff = run({"compare", dir / "a.jsonl", dir / "b.jsonl"});
  CHECK(diff.code == 1);
  CHECK(diff.out.find("WER 0.5") != std::string::npos);
  CHECK(run({"compare", dir / "a.jsonl", dir / "c.jsonl"}).code == 2);
  CHECK(run({"compare", dir / "a.jsonl", dir / "bad.jsonl"}).code == 2);
  CHECK(run({"compare", dir / "a.jsonl", dir / "missing.jsonl"}).code == 2);
}

TEST_CASE("scripted decode runs through every schedule") {
  TempDir dir("rnntsim_cli_scripted");
  REQUIRE(run({"gen", "--out", dir / "ds", "--pattern", "adversarial",
               "--frames", "4", "--max-symbols", "5"})
              .code == 0);
  for (const char* algo : {"baseline", "label_loop"}) {
    const auto r = run({"decode", "--data", dir / "ds", "--model", "scripted:",
                        "--algo", algo, "--hyp",
                        dir / (std::string(algo) + ".jsonl")});
    REQUIRE(r.code == 0);
  }
  CHECK(run({"compare", dir / "baseline.jsonl", dir / "label_loop.jsonl"})
            .code == 0);
}

TEST_CASE("duration-head decode writes hypotheses") {
  TempDir dir("rnntsim_cli_tdt");
  REQUIRE(run({"gen", "--out", dir / "ds", "--batch", "2", "--frames", "8",
               "--feature-dim", "4", "--vocab", "10", "--seed", "2"})
              .code == 0);
  const auto eager =
      run({"decode", "--data", dir / "ds", "--model", "neural:9", "--algo",
           "tdt_label_loop", "--hyp", dir / "eager.jsonl"});
  REQUIRE(eager.code == 0);
  const auto graph =
      run({"decode", "--data", dir / "ds", "--model", "neural:9", "--algo",
           "tdt_label_loop_graph", "--hyp", dir / "graph.jsonl"});
  REQUIRE(graph.code == 0);
  CHECK(run({"compare", dir / "eager.jsonl", dir / "graph.jsonl"}).code == 0);
}

TEST_CASE("warmup and iteration counts land in the report") {
  TempDir dir("rnntsim_cli_iters");
  REQUIRE(run({"gen", "--out", dir / "ds", "--batch", "2", "--frames", "4",
               "--feature-dim", "3", "--vocab", "6", "--seed", "8"})
              .code == 0);
  const auto r = run({"decode", "--data", dir / "ds", "--model", "neural:1",
                      "--algo", "graph", "--warmup", "2", "--iters", "3",
                      "--report", dir / "rep.json"});
  REQUIRE(r.code == 0);
  const json rep = json::parse(slurp(dir / "rep.json"));
  CHECK(rep.at("warmup") == 2);
  CHECK(rep.at("iters") == 3);
  CHECK(rep.at("num_graph_launches").get<double>() == 1.0);
}

TEST_CASE("timeline export carries the csv schema") {
  TempDir dir("rnntsim_cli_timeline");
  REQUIRE(run({"gen", "--out", dir / "ds", "--batch", "1", "--frames", "3",
               "--feature-dim", "3", "--vocab", "5", "--seed", "4"})
              .code == 0);
  REQUIRE(run({"decode", "--data", dir / "ds", "--model", "neural:1", "--algo",
               "baseline", "--timeline", dir / "tl.csv"})
              .code == 0);
  const std::string csv = slurp(dir / "tl.csv");
  CHECK(csv.rfind("kind,name,start_us,end_us\n", 0) == 0);
  CHECK(csv.find("host_launch") != std::string::npos);
  CHECK(csv.find("device_exec") != std::string::npos);
  CHECK(csv.find("host_sync") != std::string::npos);
}

TEST_CASE("usage errors exit with code two") {
  CHECK(run({"decode"}).code == 2);             // missing required option
  CHECK(run({"nonsense"}).code == 2);           // unknown command
  TempDir dir("rnntsim_cli_usage");
  REQUIRE(run({"gen", "--out", dir / "ds", "--batch", "1", "--frames", "2",
               "--feature-dim", "3", "--vocab", "5"})
              .code == 0);
  CHECK(run({"decode", "--data", dir / "ds", "--algo", "warp_drive"}).code ==
        2);
}

TEST_CASE("calc prints plain decimals") {
  auto value_of = [](const CliResult& r) {
    REQUIRE(r.code == 0);
    return std::stod(r.out);
  };
  CHECK(value_of(run({"calc", "amdahl", "--fraction", "0.33"})) ==
        doctest::Approx(1.49).epsilon(0.01));
  CHECK(value_of(run({"calc", "amdahl", "--fraction", "0.6739", "--speedup",
                      "6.59"})) == doctest::Approx(2.33).epsilon(0.005));
  CHECK(value_of(run({"calc", "adversarial", "-p", "0", "-k", "32"})) == 0.0);
  CHECK(value_of(run({"calc", "speedup", "--gap", "5", "--kernel", "1"})) ==
        doctest::Approx(5.0));
  CHECK(value_of(run({"calc", "rtfx", "--audio-seconds", "18360",
                      "--wall-seconds", "44.28"})) ==
        doctest::Approx(414.6).epsilon(0.002));
}

TEST_CASE("sync debug environment variable gates the baseline") {
  TempDir dir("rnntsim_cli_env");
  REQUIRE(run({"gen", "--out", dir / "ds", "--batch", "1", "--frames", "3",
               "--feature-dim", "3", "--vocab", "5", "--seed", "3"})
              .code == 0);
  setenv("RNNT_SIM_SYNC_DEBUG", "2", 1);
  CHECK(run({"decode", "--data", dir / "ds", "--model", "neural:1", "--algo",
             "baseline"})
            .code == 2);
  CHECK(run({"decode", "--data", dir / "ds", "--model", "neural:1", "--algo",
             "graph"})
            .code == 0);
  unsetenv("RNNT_SIM_SYNC_DEBUG");
  CHECK(run({"decode", "--data", dir / "ds", "--model", "neural:1", "--algo",
             "baseline"})
            .code == 0);
}
