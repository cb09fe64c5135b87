// hgnn: build heterogeneous user/document/word graphs, train and evaluate
// node classifiers, run the ablation and the hyperparameter grid.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "hgnn/binary_io.hpp"
#include "hgnn/corpus.hpp"
#include "hgnn/embeddings.hpp"
#include "hgnn/gnn.hpp"
#include "hgnn/hetgraph.hpp"
#include "hgnn/report.hpp"
#include "hgnn/synthetic.hpp"
#include "hgnn/textstats.hpp"
#include "hgnn/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hgnn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed for " + path.string());
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// A directory hashes as one entry per regular file, in path order.
void hash_input(json& hashes, const std::string& role, const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      hashes[role + ":" + fs::relative(f, path).generic_string()] = sha256_file(f);
    }
  } else {
    hashes[role] = sha256_file(path);
  }
}

// Collects what a command read and wrote, then writes `<output>.manifest.json`
// for every output once the command has succeeded.
class Manifest {
 public:
  Manifest(std::string command, const CLI::App* sub, std::string config_path)
      : command_(std::move(command)), sub_(sub), config_(std::move(config_path)),
        start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& role, const fs::path& path) { hash_input(hashes_, role, path); }
  void output(const fs::path& path) { outputs_.push_back(path); }
  void seed(std::uint64_t s) { seed_ = s; }

  void write() const {
    json resolved = json::object();
    for (const CLI::Option* opt : sub_->get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help" || name == "help-all") continue;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        resolved[name] = res.size() == 1 ? json(res.front()) : json(res);
      } else {
        resolved[name] = opt->get_default_str();
      }
    }
    json out_paths = json::array();
    for (const auto& p : outputs_) out_paths.push_back(p.string());
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m;
    m["command"] = command_;
    m["config_file"] = config_.empty() ? json(nullptr) : json(config_);
    m["config"] = resolved;
    m["input_sha256"] = hashes_;
    m["outputs"] = out_paths;
    m["wall_clock_seconds"] = wall;
    m["seed"] = seed_;
    const std::string text = m.dump(2) + "\n";
    for (const auto& p : outputs_) {
      write_file_atomic(fs::path(p.string() + ".manifest.json"), text);
    }
  }

 private:
  std::string command_;
  const CLI::App* sub_;
  std::string config_;
  std::chrono::steady_clock::time_point start_;
  json hashes_ = json::object();
  std::vector<fs::path> outputs_;
  std::uint64_t seed_ = 0;
};

// Flat `key = value` file; '#' starts a comment. Keys are long option names
// without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  const auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Rewrites argv so config entries become ordinary flags placed right after the
// subcommand, skipping keys already given as flags.
std::vector<std::string> expand_config(std::vector<std::string> args, std::string& config_path) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string value;
    std::size_t span = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      value = args[i + 1];
      span = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      value = args[i].substr(9);
      span = 1;
    }
    if (span == 0) continue;
    config_path = value;
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + span));
    std::vector<std::string> injected;
    for (const auto& [key, v] : read_config(value)) {
      if (given_on_command_line(args, key)) continue;
      if (v == "true") {
        injected.push_back("--" + key);
      } else if (v != "false") {
        injected.push_back("--" + key);
        injected.push_back(v);
      }
    }
    const std::size_t at = args.size() > 1 ? 2 : 1;
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(std::min(at, args.size())),
                injected.begin(), injected.end());
    break;
  }
  return args;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) {
      throw UsageError(std::string("invalid ") + what + " list entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

Corpus load_any(const fs::path& path, const std::string& format, const LabelTable* table) {
  std::string f = format;
  if (f == "auto") f = fs::is_directory(path) ? "pan" : "jsonl";
  return f == "pan" ? load_pan_corpus(path, table) : load_jsonl_corpus(path, table);
}

void print_metrics(const char* name, const Metrics& m) {
  std::printf("%-6s accuracy %.4f  f1 %.4f  loss %.6f  n %zu\n", name, m.accuracy, m.f1, m.loss,
              m.count);
}

bool has_split(const HeteroGraph& g, Split s) {
  return std::find(g.splits.begin(), g.splits.end(), s) != g.splits.end();
}

struct TrainFlags {
  std::string kind = "sage";
  std::string variant = "all";
  double lr = 0.01;
  double wd = 0.0005;
  std::size_t epochs = 50;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;

  void add_to(CLI::App* sub, bool with_variant) {
    sub->add_option("--model", kind)
        ->check(CLI::IsMember({"sage", "gat", "transformer"}))
        ->capture_default_str();
    if (with_variant) {
      sub->add_option("--variant", variant)
          ->check(CLI::IsMember({"all", "no-word-word", "no-word", "no-doc-doc"}))
          ->capture_default_str();
    }
    sub->add_option("--lr", lr, "learning rate")->capture_default_str();
    sub->add_option("--wd", wd, "weight decay")->capture_default_str();
    sub->add_option("--epochs", epochs)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--hidden", hidden)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed)->capture_default_str();
  }

  TrainConfig config() const {
    TrainConfig c;
    c.kind = parse_conv_kind(kind);
    c.variant = parse_variant(variant);
    c.learning_rate = lr;
    c.weight_decay = wd;
    c.epochs = epochs;
    c.hidden = hidden;
    c.seed = seed;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous graph neural networks for author profiling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  std::string config_placeholder;
  app.add_option("--config", config_placeholder,
                 "flat `key = value` file; command-line flags take precedence");

  // build-graph
  auto* build = app.add_subcommand("build-graph", "corpus + embeddings -> graph file");
  fs::path corpus_path, test_corpus_path, word_vec_path, sent_path, graph_out;
  std::string format = "auto", labels, splits_text = "0.8,0.1,0.1";
  GraphConfig gcfg;
  std::size_t word_dim = 0;
  bool filter = false;
  ActivityFilter activity;
  build->add_option("--corpus", corpus_path, "PAN directory or JSONL file")->required();
  build->add_option("--format", format, "pan | jsonl | auto")
      ->check(CLI::IsMember({"pan", "jsonl", "auto"}))
      ->capture_default_str();
  build->add_option("--test-corpus", test_corpus_path,
                    "held-out corpus; its authors form the test split");
  build->add_option("--labels", labels, "label table name or NEG,POS");
  build->add_option("--word-vectors", word_vec_path, "GloVe-format text file");
  build->add_option("--word-dim", word_dim, "word feature width (default: word vector width, 50 without vectors)");
  build->add_option("--sentence-embeddings", sent_path, "per-document embeddings (JSONL or binary)")
      ->required();
  build->add_option("--min-count", gcfg.min_count)->capture_default_str();
  build->add_option("--window", gcfg.window)->capture_default_str();
  build->add_option("--knn", gcfg.knn)->capture_default_str()->check(CLI::PositiveNumber);
  build->add_option("--splits", splits_text, "train,val,test fractions")->capture_default_str();
  build->add_option("--seed", gcfg.seed)->capture_default_str();
  build->add_flag("--filter", filter, "apply the author activity filter");
  build->add_option("--min-docs", activity.min_docs)->capture_default_str();
  build->add_option("--max-docs", activity.max_docs)->capture_default_str();
  build->add_option("--min-len", activity.min_len)->capture_default_str();
  build->add_option("--max-len", activity.max_len)->capture_default_str();
  build->add_option("--out", graph_out, "graph file to write")->required();

  // train
  auto* trn = app.add_subcommand("train", "train one model and write a checkpoint");
  fs::path graph_in, ckpt_out, history_out;
  TrainFlags tf;
  trn->add_option("--graph", graph_in)->required()->check(CLI::ExistingFile);
  tf.add_to(trn, true);
  trn->add_option("--out", ckpt_out, "checkpoint to write")->required();
  trn->add_option("--history", history_out, "history CSV (default: <out>.history.csv)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "metrics of a checkpoint on one split");
  fs::path ev_graph, ev_ckpt, ev_json;
  std::string ev_split = "test";
  ev->add_option("--graph", ev_graph)->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split)
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  ev->add_option("--json", ev_json, "also write metrics as JSON");

  // ablate
  auto* abl = app.add_subcommand("ablate", "train one model per graph variant");
  fs::path abl_graph, abl_out;
  TrainFlags af;
  abl->add_option("--graph", abl_graph)->required()->check(CLI::ExistingFile);
  af.add_to(abl, false);
  abl->add_option("--out", abl_out, "CSV of the four rows");

  // grid
  auto* grd = app.add_subcommand("grid", "hyperparameter grid search");
  fs::path grid_graph, grid_out;
  TrainFlags gf;
  std::string lrs = "0.01,0.001,0.0001,0.00001", wds = "0.05,0.005,0.0005,0.00005",
              epoch_grid = "50,100,250,500";
  grd->add_option("--graph", grid_graph)->required()->check(CLI::ExistingFile);
  gf.add_to(grd, true);
  grd->add_option("--lrs", lrs, "learning rates")->capture_default_str();
  grd->add_option("--wds", wds, "weight decays")->capture_default_str();
  grd->add_option("--epoch-grid", epoch_grid, "epoch counts")->capture_default_str();
  grd->add_option("--out", grid_out, "CSV of every grid cell");

  // synth
  auto* syn = app.add_subcommand("synth", "write a small separable corpus with embeddings");
  fs::path syn_dir;
  SyntheticSpec spec;
  syn->add_option("--out-dir", syn_dir)->required();
  syn->add_option("--users", spec.users)->capture_default_str();
  syn->add_option("--docs-per-user", spec.docs_per_user)->capture_default_str();
  syn->add_option("--seed", spec.seed)->capture_default_str();

  std::string config_path;
  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args), config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (build->parsed()) {
      Manifest man("build-graph", build, config_path);
      std::optional<LabelTable> table;
      if (!labels.empty()) table = label_table_from_string(labels);
      const LabelTable* tp = table ? &*table : nullptr;
      const SplitFractions fr = parse_fractions(splits_text);
      Corpus corpus = load_any(corpus_path, format, tp);
      man.input("corpus", corpus_path);
      if (filter) corpus = filter_by_activity(corpus, activity);
      SplitAssignment splits;
      if (!test_corpus_path.empty()) {
        Corpus test = load_any(test_corpus_path, format, tp);
        man.input("test_corpus", test_corpus_path);
        if (filter) test = filter_by_activity(test, activity);
        test.validate();
        const double tv = fr.train + fr.val;
        if (tv <= 0) throw UsageError("--splits needs a positive train fraction");
        splits = split_corpus(corpus, {fr.train / tv, fr.val / tv, 0.0}, gcfg.seed);
        for (auto& a : test.authors) {
          splits.by_author[a.author_id] = Split::Test;
          corpus.authors.push_back(std::move(a));
        }
      } else {
        splits = split_corpus(corpus, fr, gcfg.seed);
      }
      corpus.validate();

      WordEmbeddingTable words;
      if (!word_vec_path.empty()) {
        std::unordered_set<std::string> keep;
        for (const auto& a : corpus.authors) {
          for (const auto& d : a.documents) {
            for (auto& t : tokenize(d.text)) keep.insert(std::move(t));
          }
        }
        words = load_word_vectors(word_vec_path, &keep);
        man.input("word_vectors", word_vec_path);
      } else {
        words.dim = word_dim == 0 ? 50 : word_dim;
      }
      const SentenceEmbeddingTable sentences = load_sentence_embeddings(sent_path);
      man.input("sentence_embeddings", sent_path);

      std::vector<TokenizedDoc> docs;
      for (const auto& a : corpus.authors) {
        for (const auto& d : a.documents) docs.push_back({d.doc_id, tokenize(d.text)});
      }
      const Vocabulary vocab = build_vocabulary(docs, gcfg.min_count);
      const CooccurrenceStats stats = count_cooccurrence(docs, vocab, gcfg.window);
      const GraphInputs in{corpus, splits, docs, vocab, stats, words, sentences, word_dim};
      const HeteroGraph g =
          build_graph(in, gcfg, [](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
      serialize_graph(g, graph_out);
      man.output(graph_out);
      man.seed(gcfg.seed);
      std::printf("%s", format_counts(StructureCounts::of(g)).c_str());
      std::printf("users per split: train %zu  val %zu  test %zu\n", splits.count(Split::Train),
                  splits.count(Split::Val), splits.count(Split::Test));
      man.write();
    } else if (trn->parsed()) {
      Manifest man("train", trn, config_path);
      const HeteroGraph g = deserialize_graph(graph_in);
      man.input("graph", graph_in);
      const TrainConfig cfg = tf.config();
      const TrainResult r = train(g, cfg);
      save_checkpoint(r.model, ckpt_out);
      if (history_out.empty()) history_out = ckpt_out.string() + ".history.csv";
      write_file_atomic(history_out, r.history.to_csv());
      man.output(ckpt_out);
      man.output(history_out);
      man.seed(cfg.seed);
      const auto& last = r.history.epochs.back();
      std::printf("epochs %zu  final train loss %.6f\n", last.epoch, last.train_loss);
      print_metrics("train", evaluate(r.model, g, Split::Train));
      if (has_split(g, Split::Val)) print_metrics("val", evaluate(r.model, g, Split::Val));
      if (has_split(g, Split::Test)) print_metrics("test", evaluate(r.model, g, Split::Test));
      man.write();
    } else if (ev->parsed()) {
      const HeteroGraph g = deserialize_graph(ev_graph);
      const NodeClassifier model = load_checkpoint(ev_ckpt);
      json out = json::object();
      for (Split s : {Split::Train, Split::Val, Split::Test}) {
        const std::string name(to_string(s));
        if (ev_split != "all" && ev_split != name) continue;
        if (ev_split == "all" && !has_split(g, s)) continue;
        const Metrics m = evaluate(model, g, s);
        print_metrics(name.c_str(), m);
        out[name] = {{"accuracy", m.accuracy}, {"f1", m.f1}, {"loss", m.loss}, {"count", m.count}};
      }
      if (!ev_json.empty()) {
        Manifest man("evaluate", ev, config_path);
        man.input("graph", ev_graph);
        man.input("checkpoint", ev_ckpt);
        write_file_atomic(ev_json, out.dump(2) + "\n");
        man.output(ev_json);
        man.write();
      }
    } else if (abl->parsed()) {
      Manifest man("ablate", abl, config_path);
      const HeteroGraph g = deserialize_graph(abl_graph);
      man.input("graph", abl_graph);
      const TrainConfig cfg = af.config();
      man.seed(cfg.seed);
      const StructureCounts full = StructureCounts::of(g);
      std::printf("input graph\n%s", format_counts(full).c_str());
      const auto rows = run_ablation(g, cfg);
      for (const auto& r : rows) {
        std::printf("%-14s nodes %zu/%zu/%zu  edges user-doc %zu doc-word %zu word-word %zu doc-doc %zu  %s\n",
                    std::string(to_string(r.variant)).c_str(), r.counts.nodes[0], r.counts.nodes[1],
                    r.counts.nodes[2], r.counts.edges[0], r.counts.edges[1], r.counts.edges[2],
                    r.counts.edges[3], r.counts_match ? "matches variant contract" : "MISMATCH");
      }
      std::printf("\n%s", format_ablation(rows).c_str());
      const double all_acc = rows.front().test.accuracy;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (all_acc < rows[i].test.accuracy - 0.05) {
          std::printf("note: variant all trails %s by %.4f test accuracy\n",
                      std::string(to_string(rows[i].variant)).c_str(),
                      rows[i].test.accuracy - all_acc);
        }
      }
      if (!abl_out.empty()) {
        write_file_atomic(abl_out, ablation_csv(rows));
        man.output(abl_out);
        man.write();
      }
      const bool ok = std::all_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.counts_match; });
      if (!ok) throw std::runtime_error("variant structure does not match its contract");
    } else if (grd->parsed()) {
      Manifest man("grid", grd, config_path);
      const HeteroGraph g = deserialize_graph(grid_graph);
      man.input("graph", grid_graph);
      GridSpec spec_grid{parse_list<double>(lrs, "learning rate"),
                         parse_list<double>(wds, "weight decay"),
                         parse_list<std::size_t>(epoch_grid, "epoch")};
      const TrainConfig base = gf.config();
      man.seed(base.seed);
      const GridReport rep = grid_search(g, spec_grid, base);
      std::size_t failed = 0;
      for (const auto& r : rep.rows) failed += r.error.empty() ? 0 : 1;
      std::printf("%zu cells, %zu failed\n%s", rep.rows.size(), failed,
                  format_best_config(rep).c_str());
      if (rep.best) {
        const auto& b = rep.rows[*rep.best];
        if (b.val) print_metrics("val", *b.val);
        if (b.test) print_metrics("test", *b.test);
      }
      if (!grid_out.empty()) {
        write_file_atomic(grid_out, rep.to_csv());
        man.output(grid_out);
        man.write();
      }
      if (!rep.best) return 1;
    } else if (syn->parsed()) {
      const SyntheticData data = make_synthetic(spec);
      fs::create_directories(syn_dir);
      write_jsonl_corpus(data.corpus, syn_dir / "corpus.jsonl");
      write_word_vectors(data.word_vectors, syn_dir / "words.txt");
      std::vector<std::string> order;
      for (const auto& a : data.corpus.authors) {
        for (const auto& d : a.documents) order.push_back(d.doc_id);
      }
      write_sentence_embeddings(data.sentence_vectors, order, syn_dir / "sentences.jsonl");
      std::printf("wrote %zu users, %zu documents to %s\n", data.corpus.authors.size(), order.size(),
                  syn_dir.string().c_str());
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
