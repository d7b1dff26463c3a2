// tests/cli_test.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "nstf/cli.hpp"

namespace nstf::cli {
namespace {

namespace fs = std::filesystem;

// A port that was bound but never listened on.
int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

const std::string kData = std::string(NSTF_SOURCE_DIR) + "/tests/data/";

struct Run {
  int rc;
  std::string out;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "nstfilter");
  args.insert(args.begin() + 1, {"--log-level", "off"});
  std::ostringstream os;
  const int rc = run_cli(args, os);
  return {rc, os.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nstf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& body) const {
    std::ofstream(path(name), std::ios::binary) << body;
    return path(name);
  }
  fs::path dir_;
};

TEST_F(CliTest, ScoreIdenticalIsZero) {
  auto r = run({"score", "--ref", kData + "ref.manifest", "--hyp", kData + "ref.manifest"});
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("greedy MER: 0.0000"), std::string::npos) << r.out;
}

TEST_F(CliTest, ScoreFixtureFractions) {
  auto r = run({"score", "--ref", kData + "ref.manifest", "--hyp", kData + "hyp.manifest"});
  ASSERT_EQ(r.rc, 0);
  const auto last = r.out.substr(r.out.rfind('{'));
  const auto j = nlohmann::json::parse(last);
  EXPECT_DOUBLE_EQ(j["frac_greedy_exact"].get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j["frac_llm_exact"].get<double>(), 0.5);
}

TEST_F(CliTest, ScoreMissingFileIsIoError) {
  EXPECT_EQ(run({"score", "--ref", kData + "ref.manifest", "--hyp", "/nonexistent.manifest"}).rc, 2);
}

TEST_F(CliTest, ScoreMismatchedIds) {
  const auto hyp = write("h.manifest", R"({"utt_id": "zz", "audio_filepath": "a", "duration": 1, "lang": "EN", "text": "x"})" "\n");
  EXPECT_EQ(run({"score", "--ref", kData + "ref.manifest", "--hyp", hyp}).rc, 1);
}

TEST_F(CliTest, BadManifestIsValidationError) {
  const auto bad = write("bad.manifest", "{\"utt_id\": \"a\"}\n");
  EXPECT_EQ(run({"score", "--ref", bad, "--hyp", bad}).rc, 1);
}

TEST_F(CliTest, IterateEchoKeepsEverything) {
  auto r = run({"iterate", "--mock", "echo", "--out", path("out"), kData + "greedy_mixed.manifest"});
  ASSERT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find(" 1.00 "), std::string::npos) << r.out;
  for (const char* f : {"train.manifest", "decisions.manifest", "stats.txt", "stats.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / "iter_1" / f)) << f;
  const auto stats = nlohmann::json::parse(slurp(dir_ / "out" / "iter_1" / "stats.json"));
  EXPECT_DOUBLE_EQ(stats["filtered_ratio"].get<double>(), 1.0);
}

TEST_F(CliTest, IterateDefaultsWhenThresholdMissing) {
  const auto cfg = write("cfg.json", R"({"batch_size": 2})");
  auto r = run({"iterate", "--config", cfg, "--mock", "echo", "--out", path("out"), kData + "greedy_mixed.manifest"});
  EXPECT_EQ(r.rc, 0);
}

TEST_F(CliTest, IterateIsByteIdentical) {
  for (const char* o : {"a", "b"})
    ASSERT_EQ(run({"iterate", "--mock", "echo", "--out", path(o), kData + "greedy_mixed.manifest"}).rc, 0);
  for (const char* f : {"train.manifest", "decisions.manifest", "stats.txt", "stats.json"})
    EXPECT_EQ(slurp(dir_ / "a" / "iter_1" / f), slurp(dir_ / "b" / "iter_1" / f)) << f;
}

TEST_F(CliTest, IterateFailingEndpointDropsAll) {
  auto r = run({"iterate", "--mock", "fail", "--out", path("out"), kData + "greedy_mixed.manifest"});
  ASSERT_EQ(r.rc, 0);
  const auto stats = nlohmann::json::parse(slurp(dir_ / "out" / "iter_1" / "stats.json"));
  EXPECT_EQ(stats["total_hours"].get<double>(), 0.0);
  EXPECT_TRUE(slurp(dir_ / "out" / "iter_1" / "train.manifest").empty());
}

TEST_F(CliTest, UnreachableEndpointIsExit3) {
  const int port = closed_port();
  const auto cfg = write("cfg.json", R"({"endpoint": {"url": "http://127.0.0.1:)" + std::to_string(port) +
                                         R"(/v1/chat/completions", "timeout_s": 2}})");
  EXPECT_EQ(run({"iterate", "--config", cfg, "--out", path("out"), kData + "greedy_mixed.manifest"}).rc, 3);
  EXPECT_FALSE(fs::exists(dir_ / "out" / "iter_1" / "train.manifest"));
}

TEST_F(CliTest, MissingEndpointUrlIsExit3) {
  EXPECT_EQ(run({"iterate", "--out", path("out"), kData + "greedy_mixed.manifest"}).rc, 3);
}

TEST_F(CliTest, CorrectFilterBalancePipeline) {
  ASSERT_EQ(run({"correct", "--mock", "echo", "--out", path("c.manifest"), kData + "greedy_mixed.manifest"}).rc, 0);
  ASSERT_EQ(run({"filter", "--out", path("d.manifest"), path("c.manifest")}).rc, 0);
  ASSERT_EQ(run({"balance", "--out", path("t.manifest"), path("d.manifest")}).rc, 0);
  const auto train = read_manifest(path("t.manifest"));
  const auto split = partition_by_lang(train);
  // ZH 7.3 s; EN trimmed by utt_id to en-0001 (5.0 s) since adding en-0002 overflows
  EXPECT_DOUBLE_EQ(total_duration(split.at(Lang::ZH)), 7.3);
  EXPECT_DOUBLE_EQ(total_duration(split.at(Lang::EN)), 5.0);
}

TEST_F(CliTest, CorrectWritesDropped) {
  ASSERT_EQ(run({"correct", "--mock", "fail", "--out", path("c.manifest"), "--dropped", path("x.manifest"),
                 kData + "greedy_mixed.manifest"}).rc,
            0);
  EXPECT_TRUE(read_manifest(path("c.manifest")).entries.empty());
  EXPECT_EQ(read_manifest(path("x.manifest")).entries.size(), 5u);
}

TEST_F(CliTest, SimulateZeroIterationsIsValidationError) {
  const auto cfg = write("s.json", R"({"sim": {"n_utts": 10, "iterations": 0}})");
  EXPECT_EQ(run({"simulate", "--scenario", cfg, "--out", path("sim")}).rc, 1);
}

TEST_F(CliTest, SimulateAndReport) {
  const auto cfg = write("s.json", R"({"seed": 3, "batch_size": 10, "sim": {"n_utts": 60}})");
  for (const char* o : {"a", "b"})
    ASSERT_EQ(run({"simulate", "--scenario", cfg, "--out", path(o), "--write-manifests"}).rc, 0);
  for (const char* f : {"summary.txt", "summary.json", "iter_1/train.manifest", "iter_3/stats.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  auto r = run({"report", (dir_ / "a" / "summary.json").string()});
  EXPECT_EQ(r.rc, 0);
  EXPECT_EQ(r.out, slurp(dir_ / "a" / "summary.txt"));
}

TEST_F(CliTest, UnknownMockAndBadMode) {
  EXPECT_EQ(run({"iterate", "--mock", "nope", "--out", path("o"), kData + "greedy_mixed.manifest"}).rc, 1);
  EXPECT_EQ(run({"score", "--ref", kData + "ref.manifest", "--hyp", kData + "hyp.manifest", "--mode", "BLEU"}).rc, 1);
  EXPECT_EQ(run({"bogus"}).rc, 1);
}

}  // namespace
}  // namespace nstf::cli
