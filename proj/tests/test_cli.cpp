#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "acsr/pipeline.hpp"

using namespace acsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("acsr_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + ACSR_CLI + "' " + args + " > out.txt 2> err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"({"synth": {"train_utterances": 4, "test_utterances": 2},
 "train": {"epochs": 1, "batch_size": 2}})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("validation failures exit with 1") {
    const auto dir = scratch("exit1");
    CHECK(cli(dir, "") == 1);
    CHECK(cli(dir, "synth --bogus") == 1);
    CHECK(cli(dir, "train --manifest missing.json --inventory missing.txt") == 1);
    write_text(dir / "bad.json", R"({"train": {"epoch": 3}})");
    write_text(dir / "small.json", kSmall);
    REQUIRE(cli(dir, "synth --config small.json") == 0);
    CHECK(cli(dir, "train --config bad.json --manifest manifest.json --inventory inventory.txt") == 1);
    CHECK(read_text(dir / "err.txt").find("epoch") != std::string::npos);
    CHECK(cli(dir, "decode --manifest manifest.json") == 1);
    CHECK(cli(dir, "eval") == 1);
    CHECK(cli(dir, "--help") == 0);
    fs::remove_all(dir);
  }

  TEST_CASE("runtime failures exit with 2") {
    const auto dir = scratch("exit2");
    write_text(dir / "inventory.txt", "a\nb\n");
    StreamBundle b;
    b.lips.values = Eigen::MatrixXd::Zero(2, 3);
    b.hand_shape.values = Eigen::MatrixXd::Zero(2, 3);
    b.hand_position.values = Eigen::MatrixXd::Zero(2, 2);
    b.hand_position.values.col(0).setOnes();
    write_text(dir / "u.json", to_json(b).dump());
    // Five phones cannot align to two frames.
    write_text(dir / "manifest.json",
               R"({"utterances": [{"id": "u", "streams": "u.json", "phones": ["a", "b", "a", "b", "a"]}]})");
    CHECK(cli(dir, "train --manifest manifest.json --inventory inventory.txt --epochs 1 --quiet") == 2);
    fs::remove_all(dir);
  }

  TEST_CASE("eval of identical transcripts") {
    const auto dir = scratch("eval");
    write_transcripts_jsonl({{"u1", {{"a", "b", "c"}, {"x", "y"}}}, {"u2", {{"b"}, {"y"}}}}, dir / "ref.jsonl");
    REQUIRE(cli(dir, "eval --ref ref.jsonl --hyp ref.jsonl") == 0);
    const auto r = read_json(dir / "report.json");
    CHECK(r.at("phone").at("acc").get<double>() == 100.0);
    CHECK(r.at("word").at("corr").get<double>() == 100.0);
    CHECK(r.at("utterances") == 2);
    CHECK(read_text(dir / "out.txt").find("phone") != std::string::npos);
    CHECK(fs::exists(dir / "eval.report.summary.json"));
    fs::remove_all(dir);
  }

  TEST_CASE("greedy decoding of a delta posteriorgram") {
    const auto dir = scratch("greedy");
    write_text(dir / "inventory.txt", "a\nb\n");
    // Frame classes a a _ b b a over {blank, a, b}.
    write_text(dir / "post.json", R"({"id": "d", "probs": [[0,1,0],[0,1,0],[1,0,0],[0,0,1],[0,0,1],[0,1,0]]})");
    REQUIRE(cli(dir, "decode --greedy --posteriors post.json --inventory inventory.txt") == 0);
    const auto t = read_transcripts_jsonl(dir / "hypotheses.jsonl");
    CHECK(t.at("d").phones == std::vector<std::string>{"a", "b", "a"});
    write_text(dir / "ragged.json", R"({"id": "d", "probs": [[0,1,0],[1,0]]})");
    CHECK(cli(dir, "decode --posteriors ragged.json --inventory inventory.txt") == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("small pipeline with repeatable summaries") {
    const auto dir = scratch("pipeline");
    write_text(dir / "small.json", kSmall);
    auto pipeline = [&] {
      const std::string c = " --config small.json";
      REQUIRE(cli(dir, "synth --landmarks" + c) == 0);
      REQUIRE(cli(dir, "featurize --manifest manifest.json --out feat" + c) == 0);
      REQUIRE(cli(dir, "train --quiet --manifest feat/manifest.json --inventory inventory.txt" + c) == 0);
      REQUIRE(cli(dir, "decode --manifest feat/manifest.json --model model.json --name greedy" + c) == 0);
      REQUIRE(cli(dir, "decode --manifest feat/manifest.json --model model.json --beam --lexicon lexicon.txt"
                        " --lm lm.arpa --rescore --oracle --beam-width 50 --name beam" + c) == 0);
      REQUIRE(cli(dir, "segment --svg --manifest feat/manifest.json --model model.json" + c) == 0);
      REQUIRE(cli(dir, "eval --manifest feat/manifest.json --hyp greedy.jsonl --segmentation segmentation.jsonl"
                        " --onsets onsets.jsonl --inventory inventory.txt" + c) == 0);
    };
    const std::vector<std::string> summaries{"synth", "featurize", "train", "decode.greedy", "decode.beam", "segment",
                                             "eval.report"};
    pipeline();
    std::vector<std::string> first;
    for (const auto& s : summaries) {
      const auto path = (s == "featurize" ? dir / "feat" : dir) / (s + ".summary.json");
      REQUIRE(fs::exists(path));
      first.push_back(read_text(path));
      const auto j = read_json(path);
      for (const char* key : {"command", "inputs", "config", "outputs", "metrics"}) CHECK(j.contains(key));
    }
    CHECK(fs::exists(dir / "beam.nbest.jsonl"));
    CHECK(fs::exists(dir / "beam.oracle.jsonl"));
    CHECK(read_json(dir / "report.json").at("segmentation").contains("hand_shape"));
    CHECK(!fs::is_empty(dir / "svg"));

    pipeline();
    for (std::size_t i = 0; i < summaries.size(); ++i) {
      const auto path = (summaries[i] == "featurize" ? dir / "feat" : dir) / (summaries[i] + ".summary.json");
      CAPTURE(summaries[i]);
      CHECK(read_text(path) == first[i]);
    }
    fs::remove_all(dir);
  }
}
