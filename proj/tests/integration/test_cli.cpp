// Copyright 2026 The Desc2Story Authors.
//
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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <doctest.h>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("d2s-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run d2s(const Scratch& s, const std::string& args) {
  const std::string out = s / "stdout.txt", err = s / "stderr.txt";
  const std::string cmd = "cd '" + s.dir.string() + "' && '" D2S_CLI_PATH "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::string corpus_text(int n) {
  static const char* who[] = {"dog", "cat", "boy", "girl"};
  static const char* where[] = {"park", "beach", "house"};
  std::string out;
  for (int i = 0; i < n; ++i) {
    std::string w = who[i % 4], p = where[i % 3];
    out += "{\"id\": \"d" + std::to_string(i) + "\", \"descriptions\": [\"a " + w + " in the " + p +
           ".\", \"the " + w + " runs.\"], \"story\": \"the " + w + " went to the " + p + ". it was fun.\"}\n";
  }
  return out;
}

const std::string kTiny =
    "--embed-dim 8 --hidden-dim 8 --batch-size 4 --max-iterations 6 --eval-every 3 --min-count 1 "
    "--max-decode-len 12 --quiet";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  Scratch s;
  CHECK(d2s(s, "").code == 2);
  auto r = d2s(s, "frobnicate");
  CHECK(r.code == 2);
  CHECK(d2s(s, "evaluate --hyp a.txt").code == 2);
  CHECK(d2s(s, "generate --checkpoint x --input y --beam 0").code == 2);
  CHECK(d2s(s, "train --train t.jsonl --checkpoint-dir ck --dim 64").code == 2);
  CHECK(d2s(s, "evaluate --hyp a --ref b --no-such-flag").code == 2);
}

TEST_CASE("help and version") {
  Scratch s;
  auto r = d2s(s, "train --help");
  CHECK(r.code == 0);
  CHECK(r.out.find("--dim UINT:{50,128,256} [256]") != std::string::npos);
  CHECK(r.out.find("--batch-size UINT [32]") != std::string::npos);
  CHECK(r.out.find("--dropout") != std::string::npos);
  CHECK(r.out.find("[0.2]") != std::string::npos);
  CHECK(r.out.find("--clip FLOAT [5.0]") != std::string::npos);
  r = d2s(s, "generate --help");
  CHECK(r.out.find("--beam UINT:INT in [1 - 1000] [5]") != std::string::npos);
  r = d2s(s, "--version");
  CHECK(r.code == 0);
  CHECK(r.out.find("1.0.0") != std::string::npos);
}

TEST_CASE("evaluate on identical files") {
  Scratch s;
  write(s / "h.txt", "the dog went to the park . it was fun .\nthe cat sat on the mat all day long .\n");
  auto r = d2s(s, "evaluate --hyp h.txt --ref h.txt --json rep.json --label seq2seq");
  CHECK(r.code == 0);
  const auto header = r.out.substr(0, r.out.find('\n'));
  CHECK(header.find("BLEU-4") < header.find("METEOR"));
  CHECK(header.find("METEOR") < header.find("TER"));
  CHECK(header.find("TER") < header.find("ROUGE-L"));
  CHECK(r.out.find("seq2seq") != std::string::npos);
  CHECK(r.out.find("100.00") != std::string::npos);
  CHECK(r.out.find(" 0.00 ") != std::string::npos);
  CHECK(r.out.find("1.000") != std::string::npos);
  CHECK(slurp(s / "rep.json").find("\"ter\":0.0") != std::string::npos);

  write(s / "r.txt", "one line only\n");
  r = d2s(s, "evaluate --hyp h.txt --ref r.txt");
  CHECK(r.code == 1);
  CHECK(r.err.find("d2s: error:") != std::string::npos);
  CHECK(d2s(s, "evaluate --hyp missing.txt --ref r.txt").code == 1);
}

TEST_CASE("stats, vocabulary and language model commands") {
  Scratch s;
  write(s / "c.jsonl", corpus_text(12));
  auto r = d2s(s, "stats -i c.jsonl --json");
  CHECK(r.code == 0);
  CHECK(r.out.find("\"docs\":12") != std::string::npos);
  CHECK(r.out.find("\"avg_words_caption\":8.000000") != std::string::npos);
  r = d2s(s, "stats -i c.jsonl");
  CHECK(r.out.find("# docs") != std::string::npos);

  CHECK(d2s(s, "build-vocab -i c.jsonl -o v.txt --min-count 1").code == 0);
  CHECK(fs::exists(s / "v.txt"));

  CHECK(d2s(s, "lm-train -i c.jsonl -o m.kn --order 3").code == 0);
  r = d2s(s, "lm-score -m m.kn -i c.jsonl");
  CHECK(r.code == 0);
  CHECK(r.out.find("perplexity") != std::string::npos);
  CHECK(d2s(s, "lm-score -m missing.kn -i c.jsonl").code == 1);

  write(s / "bad.jsonl", "{\"id\": 1}\n");
  r = d2s(s, "stats -i bad.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("bad.jsonl") != std::string::npos);
}

TEST_CASE("train and generate, deterministic runs are byte-identical") {
  Scratch s;
  write(s / "c.jsonl", corpus_text(12));
  REQUIRE(d2s(s, "train --train c.jsonl --valid c.jsonl --checkpoint-dir a --deterministic " + kTiny).code == 0);
  REQUIRE(d2s(s, "train --train c.jsonl --valid c.jsonl --checkpoint-dir b --deterministic --threads 3 " + kTiny)
              .code == 0);
  CHECK(slurp(s / "a/last.ckpt") == slurp(s / "b/last.ckpt"));
  CHECK(slurp(s / "a/best.ckpt") == slurp(s / "b/best.ckpt"));
  CHECK(slurp(s / "a/train_log.csv") == slurp(s / "b/train_log.csv"));
  CHECK(slurp(s / "a/train_log.csv").rfind("iteration,loss,val_bleu4\n", 0) == 0);

  REQUIRE(d2s(s, "generate --checkpoint a/best.ckpt -i c.jsonl -o g1.txt --beam 3 --deterministic").code == 0);
  REQUIRE(d2s(s, "generate --checkpoint b/best.ckpt -i c.jsonl -o g2.txt --beam 3 --threads 2").code == 0);
  const auto g1 = slurp(s / "g1.txt");
  CHECK(g1 == slurp(s / "g2.txt"));
  CHECK(std::count(g1.begin(), g1.end(), '\n') == 12);
  auto r = d2s(s, "generate --checkpoint a/best.ckpt -i c.jsonl --beam 3");
  CHECK(r.out == g1);

  write(s / "junk.ckpt", "garbage");
  r = d2s(s, "generate --checkpoint junk.ckpt -i c.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("not a checkpoint") != std::string::npos);
}

TEST_CASE("config files supply options and flags take precedence") {
  Scratch s;
  write(s / "c.jsonl", corpus_text(8));
  write(s / "run.cfg",
        "# tiny run\nembed-dim = 8\nhidden-dim = 8\nbatch-size = 4\nmax-iterations = 5\nmin-count = 1\n"
        "max-decode-len = 10\nquiet = true\ndeterministic = true\n");
  REQUIRE(d2s(s, "train --config run.cfg --train c.jsonl --checkpoint-dir a").code == 0);
  REQUIRE(d2s(s, "train --config run.cfg --train c.jsonl --checkpoint-dir b --max-iterations 3").code == 0);
  auto log_a = slurp(s / "a/train_log.csv");
  auto log_b = slurp(s / "b/train_log.csv");
  CHECK(std::count(log_a.begin(), log_a.end(), '\n') == 6);
  CHECK(std::count(log_b.begin(), log_b.end(), '\n') == 4);
  CHECK(log_a.rfind(log_b, 0) == 0);

  write(s / "bad.cfg", "bogus = 1\n");
  auto r = d2s(s, "evaluate --config bad.cfg --hyp c.jsonl --ref c.jsonl");
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown option 'bogus'") != std::string::npos);
  write(s / "bad2.cfg", "dim = 64\n");
  CHECK(d2s(s, "train --config bad2.cfg --train c.jsonl --checkpoint-dir x").code == 2);
  CHECK(d2s(s, "train --config missing.cfg --train c.jsonl --checkpoint-dir x").code == 1);
}
