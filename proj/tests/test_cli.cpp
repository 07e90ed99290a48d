#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "mdl_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run mdl(const std::string& args) {
  const auto log = work_dir() / "out.txt";
  const std::string cmd = std::string("\"") + MDL_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(mdl("--help").code == 0);
  CHECK(mdl("").code == 2);
  CHECK(mdl("no-such-command").code == 2);
  const auto r = mdl("extract-features --audio");
  CHECK(r.code == 2);
}

TEST_CASE("missing and malformed inputs exit with 2 and name the file") {
  const auto dir = work_dir();
  auto r = mdl("extract-features --audio " + q(dir / "nope.wav") + " --out " + q(dir / "x.mdlf"));
  CHECK(r.code == 2);
  CHECK(r.output.find("nope.wav") != std::string::npos);

  std::ofstream(dir / "junk.wav") << "definitely not a wav file";
  r = mdl("extract-features --audio " + q(dir / "junk.wav") + " --out " + q(dir / "x.mdlf"));
  CHECK(r.code == 2);
  CHECK(r.output.find("junk.wav") != std::string::npos);

  r = mdl("translate --checkpoint " + q(dir / "none.mdlc") + " --audio " + q(dir / "junk.wav") + " --out " +
          q(dir / "p.mdlp"));
  CHECK(r.code == 2);
}

TEST_CASE("synth, extract, sync, train, translate, evaluate") {
  const auto dir = work_dir() / "pipeline";
  REQUIRE(mdl("synth --out " + q(dir / "corpus") + " --songs 4 --duration 2 --seed 3").code == 0);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "corpus" / "manifest.json"));
  REQUIRE(manifest["songs"].size() == 4);
  const fs::path wav = dir / "corpus" / manifest["songs"][0]["audio"].get<std::string>();
  const fs::path keypoints = dir / "corpus" / manifest["songs"][0]["keypoints"].get<std::string>();

  REQUIRE(mdl("extract-features --audio " + q(wav) + " --out " + q(dir / "a.mdlf")).code == 0);
  REQUIRE(mdl("extract-poses --keypoints " + q(keypoints) + " --out " + q(dir / "a.mdlp")).code == 0);
  REQUIRE(mdl("sync --features " + q(dir / "a.mdlf") + " --poses " + q(dir / "a.mdlp") + " --out " +
              q(dir / "a.mdls") + " --id song-000")
              .code == 0);
  CHECK(fs::file_size(dir / "a.mdls") > fs::file_size(dir / "a.mdlf"));

  nlohmann::json cfg = {{"manifest", (dir / "corpus" / "manifest.json").string()},
                        {"variant", "mamba"},
                        {"window", 8},
                        {"updates", 4},
                        {"batch", 2},
                        {"lr", 1e-3},
                        {"validate_every", 2},
                        {"model", {{"layers", 1}, {"embed_dim", 8}, {"ff_dim", 16}, {"dropout", 0.0}}}};
  std::ofstream(dir / "train.json") << cfg.dump();
  const auto run = dir / "run";
  REQUIRE(mdl("train --config " + q(dir / "train.json") + " --out " + q(run)).code == 0);
  CHECK(fs::exists(run / "best.mdlc"));
  CHECK(fs::exists(run / "metrics.csv"));

  REQUIRE(mdl("translate --checkpoint " + q(run / "best.mdlc") + " --audio " + q(wav) + " --out " +
              q(dir / "gen.mdlp"))
              .code == 0);
  CHECK(fs::exists(dir / "gen.mdlp"));

  const nlohmann::json split = {{"train", {"song-000", "song-001"}}, {"validation", {"song-002", "song-003"}}};
  std::ofstream(dir / "split.json") << split.dump();
  REQUIRE(mdl("evaluate --checkpoint " + q(run / "best.mdlc") + " --manifest " +
              q(dir / "corpus" / "manifest.json") + " --split " + q(dir / "split.json") + " --out " +
              q(dir / "report.json"))
              .code == 0);
  const auto report = nlohmann::json::parse(std::ifstream(dir / "report.json"));
  CHECK(report.contains("aggregate"));
  CHECK(report.contains("song-002"));
  CHECK(!report.contains("song-000"));
  CHECK(report["aggregate"]["aje_mean"].get<double>() >= 0.0);

  // A window that disagrees with the checkpoint is a usage error.
  auto bad = cfg;
  bad["window"] = 9;
  std::ofstream(dir / "bad.json") << bad.dump();
  const auto r = mdl("evaluate --checkpoint " + q(run / "best.mdlc") + " --manifest " +
                     q(dir / "corpus" / "manifest.json") + " --split " + q(dir / "split.json") + " --config " + q(dir / "bad.json") + " --out " +
                     q(dir / "r2.json"));
  CHECK(r.code == 2);

  // Flags override the config file; an invalid value is rejected.
  CHECK(mdl("train --config " + q(dir / "train.json") + " --out " + q(dir / "run2") + " --batch 0").code == 2);
}
