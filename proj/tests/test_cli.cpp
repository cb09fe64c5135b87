#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using fixture::TempDir;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult hgnn_cli(const std::string& args, const TempDir& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + HGNN_CLI_PATH + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Value printed after a label in the counts table.
long counted(const std::string& table, const std::string& label) {
  const auto at = table.find(label);
  if (at == std::string::npos) return -1;
  return std::stol(table.substr(at + label.size()));
}

// Small corpus with embeddings in `dir`.
void synth(const TempDir& dir, std::size_t users = 12) {
  const CliResult r = hgnn_cli("synth --out-dir " + q(dir.path()) + " --users " + std::to_string(users) +
                             " --docs-per-user 6",
                         dir);
  ASSERT_EQ(r.code, 0) << r.err;
}

std::string build_args(const TempDir& dir) {
  return "build-graph --corpus " + q(dir / "corpus.jsonl") + " --word-vectors " +
         q(dir / "words.txt") + " --sentence-embeddings " + q(dir / "sentences.jsonl");
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  TempDir dir("cli_usage");
  EXPECT_EQ(hgnn_cli("--help", dir).code, 0);
  EXPECT_EQ(hgnn_cli("", dir).code, 2);
  EXPECT_EQ(hgnn_cli("frobnicate", dir).code, 2);
  EXPECT_EQ(hgnn_cli("build-graph --out x.graph", dir).code, 2);
  synth(dir);
  ASSERT_EQ(hgnn_cli(build_args(dir) + " --out " + q(dir / "g.bin"), dir).code, 0);
  const CliResult bad = hgnn_cli("train --graph " + q(dir / "g.bin") + " --variant no-users --out " +
                               q(dir / "m.ckpt"),
                           dir);
  EXPECT_EQ(bad.code, 2);
  EXPECT_FALSE(fs::exists(dir / "m.ckpt"));
  EXPECT_EQ(hgnn_cli("grid --graph " + q(dir / "g.bin") + " --lrs 0.1,abc", dir).code, 2);
}

TEST(Cli, SynthBuildTrainEvaluate) {
  TempDir dir("cli_pipeline");
  synth(dir);
  const CliResult b = hgnn_cli(build_args(dir) + " --out " + q(dir / "g.bin"), dir);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(counted(b.out, "User nodes"), 12);
  EXPECT_EQ(counted(b.out, "Document nodes"), 72);
  EXPECT_EQ(counted(b.out, "User-document edges"), 72);
  EXPECT_TRUE(fs::exists(dir / "g.bin.manifest.json"));

  const CliResult t = hgnn_cli("train --graph " + q(dir / "g.bin") + " --model gat --epochs 30 --out " +
                             q(dir / "m.ckpt"),
                         dir);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("train  accuracy"), std::string::npos);
  const std::string history = slurp(dir / "m.ckpt.history.csv");
  EXPECT_EQ(history.rfind("epoch,train_loss,train_acc,val_acc\n", 0), 0u);
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 31);

  const CliResult e = hgnn_cli("evaluate --graph " + q(dir / "g.bin") + " --checkpoint " +
                             q(dir / "m.ckpt") + " --split all --json " + q(dir / "m.json"),
                         dir);
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string js = slurp(dir / "m.json");
  EXPECT_NE(js.find("\"train\""), std::string::npos);
  EXPECT_NE(js.find("\"accuracy\""), std::string::npos);
  // Evaluating the same checkpoint twice prints the same numbers.
  EXPECT_EQ(hgnn_cli("evaluate --graph " + q(dir / "g.bin") + " --checkpoint " + q(dir / "m.ckpt") +
                         " --split all",
                     dir)
                .out,
            e.out);
}

TEST(Cli, MissingSentenceEmbeddingNamesTheDocument) {
  TempDir dir("cli_missing");
  synth(dir);
  const std::string all = slurp(dir / "sentences.jsonl");
  const auto nl = all.find('\n');
  const std::string first = all.substr(0, nl);
  const auto key = first.find("\"doc_id\":\"") + 10;
  const std::string doc_id = first.substr(key, first.find('"', key) - key);
  fixture::write_text(dir / "sentences.jsonl", all.substr(nl + 1));
  const CliResult r = hgnn_cli(build_args(dir) + " --out " + q(dir / "g.bin"), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(doc_id), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "g.bin"));
}

TEST(Cli, KnnFlagSetsDocDocEdgeCount) {
  TempDir dir("cli_knn");
  synth(dir);
  for (int k : {1, 3}) {
    const CliResult r = hgnn_cli(build_args(dir) + " --knn " + std::to_string(k) + " --out " +
                               q(dir / "g.bin"),
                           dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(counted(r.out, "Document-document edges"), k * counted(r.out, "Document nodes"));
  }
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  TempDir dir("cli_repeat");
  synth(dir);
  std::string graphs[2], histories[2], metrics[2];
  for (int i = 0; i < 2; ++i) {
    const std::string g = "g" + std::to_string(i) + ".bin", m = "m" + std::to_string(i) + ".ckpt";
    ASSERT_EQ(hgnn_cli(build_args(dir) + " --seed 3 --out " + q(dir / g), dir).code, 0);
    const CliResult t = hgnn_cli("train --graph " + q(dir / g) + " --epochs 15 --seed 9 --out " + q(dir / m), dir);
    ASSERT_EQ(t.code, 0) << t.err;
    graphs[i] = slurp(dir / g);
    histories[i] = slurp(dir / (m + ".history.csv"));
    metrics[i] = t.out;
  }
  EXPECT_EQ(graphs[0], graphs[1]);
  EXPECT_EQ(histories[0], histories[1]);
  EXPECT_EQ(metrics[0], metrics[1]);
}

TEST(Cli, ManifestHashTracksInputContent) {
  TempDir dir("cli_manifest");
  synth(dir);
  const auto hash_of = [&](const std::string& out) {
    const std::string m = slurp(dir / (out + ".manifest.json"));
    const auto at = m.find("\"corpus\": \"", m.find("\"input_sha256\""));
    return at == std::string::npos ? std::string() : m.substr(at + 11, 64);
  };
  ASSERT_EQ(hgnn_cli(build_args(dir) + " --out " + q(dir / "a.bin"), dir).code, 0);
  ASSERT_EQ(hgnn_cli(build_args(dir) + " --out " + q(dir / "b.bin"), dir).code, 0);
  ASSERT_EQ(hash_of("a.bin").size(), 64u);
  EXPECT_EQ(hash_of("a.bin"), hash_of("b.bin"));

  const std::string manifest = slurp(dir / "a.bin.manifest.json");
  EXPECT_NE(manifest.find("\"command\": \"build-graph\""), std::string::npos);
  EXPECT_NE(manifest.find("\"wall_clock_seconds\""), std::string::npos);
  EXPECT_NE(manifest.find("\"knn\": \"3\""), std::string::npos);

  std::ofstream(dir / "corpus.jsonl", std::ios::app)
      << "{\"author_id\":\"user0\",\"doc_id\":\"user0/extra\",\"label\":0,\"text\":\"calm1 calm2\"}\n";
  std::ofstream(dir / "sentences.jsonl", std::ios::app)
      << "{\"doc_id\":\"user0/extra\",\"vector\":[1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}\n";
  ASSERT_EQ(hgnn_cli(build_args(dir) + " --out " + q(dir / "c.bin"), dir).code, 0);
  EXPECT_NE(hash_of("c.bin"), hash_of("a.bin"));
}

TEST(Cli, ConfigFileSitsBelowFlags) {
  TempDir dir("cli_config");
  synth(dir);
  fixture::write_text(dir / "run.conf", "# shared settings\nknn = 2\nseed = 5\nmin-count = 1\n");
  const CliResult from_file =
      hgnn_cli(build_args(dir) + " --config " + q(dir / "run.conf") + " --out " + q(dir / "a.bin"), dir);
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  EXPECT_EQ(counted(from_file.out, "Document-document edges"),
            2 * counted(from_file.out, "Document nodes"));
  const std::string manifest = slurp(dir / "a.bin.manifest.json");
  EXPECT_NE(manifest.find("run.conf"), std::string::npos);
  EXPECT_NE(manifest.find("\"seed\": 5"), std::string::npos);

  const CliResult overridden = hgnn_cli(build_args(dir) + " --config " + q(dir / "run.conf") +
                                      " --knn 4 --out " + q(dir / "b.bin"),
                                  dir);
  ASSERT_EQ(overridden.code, 0) << overridden.err;
  EXPECT_EQ(counted(overridden.out, "Document-document edges"),
            4 * counted(overridden.out, "Document nodes"));

  fixture::write_text(dir / "bad.conf", "knn 2\n");
  EXPECT_EQ(hgnn_cli(build_args(dir) + " --config " + q(dir / "bad.conf") + " --out " + q(dir / "c.bin"), dir).code,
            2);
}

TEST(Cli, AblateReportsFourVariants) {
  TempDir dir("cli_ablate");
  synth(dir);
  ASSERT_EQ(hgnn_cli(build_args(dir) + " --out " + q(dir / "g.bin"), dir).code, 0);
  const CliResult r = hgnn_cli("ablate --graph " + q(dir / "g.bin") + " --epochs 10 --out " + q(dir / "abl.csv"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir / "abl.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  for (const char* v : {"\nall,", "\nno-word-word,", "\nno-word,", "\nno-doc-doc,"}) {
    EXPECT_NE(csv.find(v), std::string::npos) << v;
  }
  EXPECT_EQ(r.out.find("MISMATCH"), std::string::npos);
}

TEST(Cli, GridPrintsBestConfig) {
  TempDir dir("cli_grid");
  synth(dir);
  ASSERT_EQ(hgnn_cli(build_args(dir) + " --out " + q(dir / "g.bin"), dir).code, 0);
  const CliResult r = hgnn_cli("grid --graph " + q(dir / "g.bin") +
                             " --lrs 0.01,0.001 --wds 0.0005 --epoch-grid 5,10 --out " + q(dir / "grid.csv"),
                         dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("4 cells, 0 failed"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("learning_rate"), std::string::npos);
  const std::string csv = slurp(dir / "grid.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}
