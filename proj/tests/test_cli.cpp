// SPDX-License-Identifier: Apache-2.0
#include "vtmot/cli.hpp"
#include "vtmot/mot_data.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sstream>
#include <string>
#include <vector>

using namespace vtmot;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return Run{code, out.str(), err.str()};
}

std::string str(const std::filesystem::path& p) { return p.string(); }

// Two clean sequences plus their perfect-identity results.
void make_dataset(const std::filesystem::path& root) {
  const Run r = run({"gen", "--out", str(root / "ds"), "--results", str(root / "res"), "--sequences", "2",
                     "--tracks", "3", "--frames", "50", "--seed", "4"});
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("parse examples") {
  const std::vector<std::string> a{"evaluate", "--gt", "g", "--res", "r", "--protocol", "2", "--platform", "uav",
                                   "--format", "machine", "--jobs", "3"};
  const ParseOutcome p = parse_cli(a);
  REQUIRE(p.config);
  CHECK(p.config->command == Command::Evaluate);
  CHECK(p.config->dataset == "g");
  CHECK(p.config->results == "r");
  CHECK(p.config->protocol.kind == ProtocolKind::II);
  CHECK(p.config->protocol.platform == Platform::UAV);
  CHECK(p.config->format == OutputFormat::Machine);
  CHECK(p.config->jobs == 3);

  const std::vector<std::string> t{"track", "--dataset", "d", "--out", "o", "--max-age", "5", "--min-hits", "1"};
  const ParseOutcome pt = parse_cli(t);
  REQUIRE(pt.config);
  CHECK(pt.config->tracker.max_age == 5);
  CHECK(pt.config->tracker.min_hits == 1);
  CHECK(pt.config->tracker.iou_threshold == 0.3);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({"evaluate"}).code == kExitUsage);
  CHECK(run({"evaluate", "--gt", "x"}).code == kExitUsage);
  CHECK(run({"stats", "--bogus"}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"evaluate", "--gt", "a", "--res", "b", "--protocol", "3"}).code == kExitUsage);
  CHECK(run({"validate", "--dataset", "a", "--jobs", "0"}).code == kExitUsage);
  const Run r = run({"stats", "--bogus"});
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("help lists every command") {
  const Run r = run({"--help"});
  CHECK(r.code == 0);
  for (const char* c : {"validate", "stats", "evaluate", "track", "pfm-demo", "gradcheck", "gen"}) {
    CHECK(r.out.find(c) != std::string::npos);
  }
  CHECK(help_text().find("--protocol") != std::string::npos);
}

TEST_CASE("stats from counts") {
  const Run r = run({"stats", "--videos", "582", "--frames", "401068", "--boxes", "3994777", "--format", "machine"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["density"].get<double>() == doctest::Approx(3994777.0 / 401068.0));
  const Run t = run({"stats", "--videos", "582", "--frames", "401068", "--boxes", "3994777"});
  CHECK(t.out.find("9.96") != std::string::npos);
}

TEST_CASE("generated dataset: validate, stats, evaluate, track") {
  testing::TempDir dir("cli");
  make_dataset(dir.path());

  const Run v = run({"validate", "--dataset", str(dir.path() / "ds")});
  CHECK(v.code == 0);

  const Run s = run({"stats", "--dataset", str(dir.path() / "ds"), "--format", "machine"});
  REQUIRE(s.code == 0);
  const auto sj = nlohmann::json::parse(s.out);
  CHECK(sj["videos"] == 2);
  CHECK(sj["frames"] == 100);
  CHECK(sj["boxes"] == 300);
  CHECK(sj["density"].get<double>() == doctest::Approx(3.0));

  const Run e = run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "res")});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("COMBINED") != std::string::npos);
  CHECK(e.out.find("100.000") != std::string::npos);
  CHECK(run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "res")}).out == e.out);
  CHECK(run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "res"), "--jobs", "2"}).out ==
        e.out);

  const Run em = run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "res"), "--format",
                      "machine"});
  REQUIRE(em.code == 0);
  const auto ej = nlohmann::json::parse(em.out);
  CHECK(ej["groups"][0]["metrics"]["HOTA"].get<double>() == 1.0);

  const Run t = run({"track", "--dataset", str(dir.path() / "ds"), "--out", str(dir.path() / "trk")});
  REQUIRE(t.code == 0);
  CHECK(std::filesystem::exists(dir.path() / "trk" / "synthetic-001.txt"));
  const Run te = run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "trk")});
  CHECK(te.code == 0);
}

TEST_CASE("missing results fail with 1") {
  testing::TempDir dir("cli-missing");
  make_dataset(dir.path());
  std::filesystem::remove(dir.path() / "res" / "synthetic-002.txt");
  const Run e = run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "res")});
  CHECK(e.code == kExitFailure);
  CHECK_FALSE(e.err.empty());
}

TEST_CASE("validate reports a broken sequence") {
  testing::TempDir dir("cli-broken");
  make_dataset(dir.path());
  write_text_atomic(dir.path() / "ds" / "synthetic-001" / "gt" / "gt.txt", "1,1,10,10,5,5,1,9,1\n");
  const Run v = run({"validate", "--dataset", str(dir.path() / "ds")});
  CHECK(v.code == kExitFailure);
}

TEST_CASE("protocol II with platforms") {
  testing::TempDir dir("cli-p2");
  REQUIRE(run({"gen", "--out", str(dir.path() / "ds"), "--results", str(dir.path() / "res"), "--platforms",
               "handheld=2,surveillance=1,uav=1", "--frames", "20"})
              .code == 0);
  const Run e = run({"evaluate", "--gt", str(dir.path() / "ds"), "--res", str(dir.path() / "res"), "--protocol", "2"});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("[UAV]") != std::string::npos);
  CHECK(e.out.find("GROUP-MEAN") != std::string::npos);
}

TEST_CASE("pfm-demo and gradcheck") {
  testing::TempDir dir("cli-pfm");
  const Run init = run({"pfm-demo", "--fixture", str(dir.path() / "fx"), "--init", "--dim", "16", "--hidden", "32",
                        "--stem-channels", "2", "--out", str(dir.path() / "stages.json")});
  REQUIRE(init.code == 0);
  CHECK(std::filesystem::exists(dir.path() / "fx" / "params.json"));
  CHECK(init.out.find("fused") != std::string::npos);
  const auto stages = nlohmann::json::parse(read_text_file(dir.path() / "stages.json"));
  CHECK(stages.contains("fused"));

  const Run again = run({"pfm-demo", "--fixture", str(dir.path() / "fx"), "--out", str(dir.path() / "stages2.json")});
  REQUIRE(again.code == 0);
  CHECK(read_text_file(dir.path() / "stages2.json") == read_text_file(dir.path() / "stages.json"));

  CHECK(run({"pfm-demo", "--fixture", str(dir.path() / "nothing")}).code == kExitFailure);
  CHECK(run({"pfm-demo", "--fixture", str(dir.path() / "fx"), "--dim", "8"}).code == kExitUsage);
}
