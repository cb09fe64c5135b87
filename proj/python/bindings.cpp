#include "hgnn/gnn.hpp"
#include "hgnn/hetgraph.hpp"
#include "hgnn/synthetic.hpp"
#include "hgnn/textstats.hpp"
#include "hgnn/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace hgnn;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

NodeType parse_node_type(const std::string& name) {
  if (name == "user") return NodeType::User;
  if (name == "doc") return NodeType::Doc;
  if (name == "word") return NodeType::Word;
  throw py::value_error("node type must be user, doc or word, got '" + name + "'");
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw py::value_error("split must be train, val or test, got '" + name + "'");
}

std::vector<TokenizedDoc> as_docs(const std::vector<std::vector<std::string>>& tokens) {
  std::vector<TokenizedDoc> docs;
  for (std::size_t i = 0; i < tokens.size(); ++i) docs.push_back({std::to_string(i), tokens[i]});
  return docs;
}

py::dict counts_dict(const HeteroGraph& g) {
  const StructureCounts c = StructureCounts::of(g);
  py::dict d;
  d["user_nodes"] = c.nodes[0];
  d["doc_nodes"] = c.nodes[1];
  d["word_nodes"] = c.nodes[2];
  d["user_doc"] = c.edges[static_cast<std::size_t>(Relation::UserDoc)];
  d["doc_word"] = c.edges[static_cast<std::size_t>(Relation::DocWord)];
  d["word_word"] = c.edges[static_cast<std::size_t>(Relation::WordWord)];
  d["doc_doc"] = c.edges[static_cast<std::size_t>(Relation::DocDoc)];
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["f1"] = m.f1;
  d["loss"] = m.loss;
  d["count"] = m.count;
  return d;
}

std::tuple<std::vector<Index>, std::vector<Index>, std::vector<double>> edge_tuple(const EdgeList& e) {
  return {e.src, e.dst, e.weight};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Heterogeneous user/document/word graphs and node classifiers";

  m.def("tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"));

  m.def(
      "pmi_edges",
      [](const std::vector<std::vector<std::string>>& tokens, std::size_t min_count, std::size_t window) {
        const auto docs = as_docs(tokens);
        const Vocabulary v = build_vocabulary(docs, min_count);
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (const auto& e : compute_pmi(docs, v, window)) out.emplace_back(v.words[e.a], v.words[e.b], e.pmi);
        return out;
      },
      py::arg("docs"), py::arg("min_count") = 15, py::arg("window") = 20,
      "Word pairs with positive PMI over sliding windows, as (word, word, pmi).");

  m.def(
      "tfidf",
      [](const std::vector<std::vector<std::string>>& tokens, std::size_t min_count) {
        const auto docs = as_docs(tokens);
        const Vocabulary v = build_vocabulary(docs, min_count);
        std::vector<std::map<std::string, double>> out;
        for (const auto& d : docs) {
          std::map<std::string, double> w;
          for (const auto& [id, x] : compute_tfidf(d, v, docs.size())) w[v.words[id]] = x;
          out.push_back(std::move(w));
        }
        return out;
      },
      py::arg("docs"), py::arg("min_count") = 15, "Per-document word weights.");

  m.def(
      "knn_doc_edges",
      [](const RowMatrix& embeddings, std::size_t k) { return edge_tuple(knn_doc_edges(embeddings, k)); },
      py::arg("embeddings"), py::arg("k"), "Directed top-k cosine edges as (src, dst, weight).");

  m.def(
      "segment_softmax",
      [](const RowMatrix& scores, const std::vector<Index>& dst, std::size_t n_dst) {
        Tape t;
        return RowMatrix(t.value(ops::segment_softmax(t, t.constant(scores), dst, n_dst)));
      },
      py::arg("scores"), py::arg("dst"), py::arg("n_dst"));

  py::class_<HeteroGraph>(m, "Graph")
      .def_static("load", &deserialize_graph, py::arg("path"))
      .def_static(
          "synthetic",
          [](std::size_t users, std::size_t docs_per_user, std::uint64_t seed, std::size_t knn) {
            SyntheticSpec spec;
            spec.users = users;
            spec.docs_per_user = docs_per_user;
            spec.seed = seed;
            const SyntheticData data = make_synthetic(spec);
            GraphConfig cfg;
            cfg.knn = knn;
            cfg.seed = seed;
            return build_graph_from_corpus(data.corpus, split_corpus(data.corpus, {}, seed), data.word_vectors,
                                           data.sentence_vectors, cfg);
          },
          py::arg("users") = 20, py::arg("docs_per_user") = 10, py::arg("seed") = 7, py::arg("knn") = 3,
          "Graph of the small separable synthetic corpus.")
      .def("save", [](const HeteroGraph& g, const std::filesystem::path& p) { serialize_graph(g, p); },
           py::arg("path"))
      .def("node_count", [](const HeteroGraph& g, const std::string& t) { return g.node_count(parse_node_type(t)); },
           py::arg("node_type"))
      .def("features", [](const HeteroGraph& g, const std::string& t) { return RowMatrix(g.x(parse_node_type(t))); },
           py::arg("node_type"))
      .def("edges", [](const HeteroGraph& g, const std::string& rel) {
             const auto r = parse_relation(rel);
             if (!r) throw py::value_error("unknown relation '" + rel + "'");
             return edge_tuple(message_edges(g, *r));
           }, py::arg("relation"), "Message-passing edges of one relation as (src, dst, weight).")
      .def("apply_variant", [](const HeteroGraph& g, const std::string& v) { return apply_variant(g, parse_variant(v)); },
           py::arg("variant"))
      .def_property_readonly("counts", &counts_dict)
      .def_property_readonly("labels", [](const HeteroGraph& g) { return g.labels; })
      .def_property_readonly("splits", [](const HeteroGraph& g) {
        std::vector<std::string> out;
        for (Split s : g.splits) out.emplace_back(to_string(s));
        return out;
      })
      .def_property_readonly("user_ids", [](const HeteroGraph& g) { return g.user_ids; })
      .def("__eq__", [](const HeteroGraph& a, const HeteroGraph& b) { return a == b; });

  py::class_<NodeClassifier>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const NodeClassifier& n, const std::filesystem::path& p) { save_checkpoint(n, p); },
           py::arg("path"))
      .def_property_readonly("kind", [](const NodeClassifier& n) { return std::string(to_string(n.kind)); })
      .def_property_readonly("variant", [](const NodeClassifier& n) { return std::string(to_string(n.variant)); })
      .def_property_readonly("parameter_count", &NodeClassifier::parameter_count)
      .def("logits", [](const NodeClassifier& n, const HeteroGraph& g) {
             return RowMatrix(forward(n, apply_variant(g, n.variant)));
           }, py::arg("graph"))
      .def("evaluate", [](const NodeClassifier& n, const HeteroGraph& g, const std::string& split) {
             return metrics_dict(evaluate(n, g, parse_split(split)));
           }, py::arg("graph"), py::arg("split") = "test");

  m.def(
      "train",
      [](const HeteroGraph& g, const std::string& model, const std::string& variant, double lr, double wd,
         std::size_t epochs, std::size_t hidden, std::uint64_t seed) {
        TrainConfig c;
        c.kind = parse_conv_kind(model);
        c.variant = parse_variant(variant);
        c.learning_rate = lr;
        c.weight_decay = wd;
        c.epochs = epochs;
        c.hidden = hidden;
        c.seed = seed;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(g, c);
        }
        py::list history;
        for (const auto& e : r.history.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train_loss;
          d["train_acc"] = e.train_accuracy;
          d["val_acc"] = e.val_accuracy;
          history.append(d);
        }
        return py::make_tuple(std::move(r.model), history);
      },
      py::arg("graph"), py::arg("model") = "sage", py::arg("variant") = "all", py::arg("lr") = 0.01,
      py::arg("wd") = 0.0005, py::arg("epochs") = 50, py::arg("hidden") = 64, py::arg("seed") = 0,
      "Train one classifier; returns (model, per-epoch history).");
}
