#include "hgnn/report.hpp"

#include <cstdio>

namespace hgnn {

namespace {

std::string line(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::size_t edges_of(const StructureCounts& c, Relation r) {
  return c.edges[static_cast<std::size_t>(r)];
}

}  // namespace

std::string format_counts(const StructureCounts& c) {
  std::string out;
  out += line("%-24s%zu\n", "User nodes", c.nodes[0]);
  out += line("%-24s%zu\n", "Document nodes", c.nodes[1]);
  out += line("%-24s%zu\n", "Word nodes", c.nodes[2]);
  out += line("%-24s%zu\n", "Total nodes", c.total_nodes());
  out += line("%-24s%zu\n", "User-document edges", edges_of(c, Relation::UserDoc));
  out += line("%-24s%zu\n", "Document-document edges", edges_of(c, Relation::DocDoc));
  out += line("%-24s%zu\n", "Document-word edges", edges_of(c, Relation::DocWord));
  out += line("%-24s%zu\n", "Word-word edges", edges_of(c, Relation::WordWord));
  out += line("%-24s%zu\n", "Total edges", c.total_edges());
  return out;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::string out = line("%-14s %9s %9s %9s %9s %9s %9s  %s\n", "variant", "train_acc", "val_acc",
                         "val_f1", "test_acc", "test_f1", "edges", "counts");
  for (const auto& r : rows) {
    out += line("%-14s %9.4f %9.4f %9.4f %9.4f %9.4f %9zu  %s\n",
                std::string(to_string(r.variant)).c_str(), r.train.accuracy, r.val.accuracy,
                r.val.f1, r.test.accuracy, r.test.f1, r.counts.total_edges(),
                r.counts_match ? "ok" : "MISMATCH");
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "variant,user_nodes,doc_nodes,word_nodes,user_doc,doc_word,word_word,doc_doc,counts_match,"
      "train_acc,val_acc,val_f1,test_acc,test_f1\n";
  for (const auto& r : rows) {
    out += line("%s,%zu,%zu,%zu,%zu,%zu,%zu,%zu,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                std::string(to_string(r.variant)).c_str(), r.counts.nodes[0], r.counts.nodes[1],
                r.counts.nodes[2], r.counts.edges[0], r.counts.edges[1], r.counts.edges[2],
                r.counts.edges[3], r.counts_match ? 1 : 0, r.train.accuracy, r.val.accuracy,
                r.val.f1, r.test.accuracy, r.test.f1);
  }
  return out;
}

std::string format_best_config(const GridReport& report) {
  if (!report.best) return "no grid cell completed\n";
  const auto& row = report.rows[*report.best];
  std::string out = line("%-12s %14s %14s %8s\n", "model", "learning_rate", "weight_decay", "epochs");
  out += line("%-12s %14g %14g %8zu\n", std::string(to_string(row.config.kind)).c_str(),
              row.config.learning_rate, row.config.weight_decay, row.config.epochs);
  return out;
}

}  // namespace hgnn
