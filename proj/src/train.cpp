#include "hgnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace hgnn {

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::size_t masked_count(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(const Matrix& logits, std::span<const std::uint8_t> labels,
                  const std::vector<bool>& mask) {
  if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != labels.size() ||
      labels.size() != mask.size()) {
    throw ShapeError("logits, labels and mask must have matching lengths");
  }
  if (masked_count(mask) == 0) throw TrainError("mask selects no nodes");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw TrainError("learning rate must be positive");
  if (weight_decay < 0.0) throw TrainError("weight decay must be non-negative");
  if (epochs < 1) throw TrainError("epochs must be at least 1");
  if (hidden < 1) throw TrainError("hidden dimension must be at least 1");
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,val_acc\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.train_accuracy) + "," +
           num(e.val_accuracy) + "\n";
  }
  return out;
}

double bce_with_logits(const Matrix& logits, std::span<const std::uint8_t> labels,
                       const std::vector<bool>& mask) {
  check_labels(logits, labels, mask);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask[i]) total += softplus(logits(i, 0)) - labels[i] * logits(i, 0);
  }
  return total / static_cast<double>(masked_count(mask));
}

Var bce_with_logits(Tape& t, Var logits, std::span<const std::uint8_t> labels,
                    const std::vector<bool>& mask) {
  Matrix loss(1, 1);
  loss(0, 0) = bce_with_logits(t.value(logits), labels, mask);
  std::vector<std::uint8_t> y(labels.begin(), labels.end());
  return t.record(std::move(loss), {logits},
                  [logits, y = std::move(y), mask](Tape& tp, std::size_t self) {
                    const double g = tp.output_grad(self)(0, 0) / static_cast<double>(masked_count(mask));
                    const Matrix& z = tp.value(logits);
                    Matrix& dz = tp.grad_slot(logits);
                    for (std::size_t i = 0; i < y.size(); ++i) {
                      if (mask[i]) dz(i, 0) += g * (sigmoid(z(i, 0)) - y[i]);
                    }
                  });
}

Metrics compute_metrics(const Matrix& logits, std::span<const std::uint8_t> labels,
                        const std::vector<bool>& mask) {
  check_labels(logits, labels, mask);
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0, n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    const bool pred = logits(i, 0) > 0.0;
    const bool truth = labels[i] == 1;
    correct += pred == truth ? 1 : 0;
    tp += pred && truth ? 1 : 0;
    fp += pred && !truth ? 1 : 0;
    fn += !pred && truth ? 1 : 0;
  }
  Metrics m;
  m.count = n;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  m.f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  m.loss = bce_with_logits(logits, labels, mask);
  return m;
}

void adamw_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamWState& state,
                const AdamWOptions& opt) {
  if (params.size() != grads.size()) throw TrainError("adamw_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw TrainError("adamw_step: optimiser state does not match");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() ||
        state.m[i].cols() != p.cols()) {
      throw ShapeError("adamw_step: shape mismatch for parameter " + std::to_string(i));
    }
    double* pd = p.data();
    double* md = state.m[i].data();
    double* vd = state.v[i].data();
    const double* gd = g.data();
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      md[k] = opt.beta1 * md[k] + (1.0 - opt.beta1) * gd[k];
      vd[k] = opt.beta2 * vd[k] + (1.0 - opt.beta2) * gd[k] * gd[k];
      const double m_hat = md[k] / bc1;
      const double v_hat = vd[k] / bc2;
      pd[k] -= opt.learning_rate * (m_hat / (std::sqrt(v_hat) + opt.eps) + opt.weight_decay * pd[k]);
    }
  }
}

TrainResult train(const HeteroGraph& full, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const HeteroGraph g = apply_variant(full, config.variant);
  const auto train_mask = g.mask(Split::Train);
  const auto val_mask = g.mask(Split::Val);
  bool has_class[2] = {false, false};
  for (std::size_t i = 0; i < train_mask.size(); ++i) {
    if (train_mask[i]) has_class[g.labels[i]] = true;
  }
  if (!has_class[0] || !has_class[1]) throw TrainError("training split must contain both classes");
  const bool has_val = masked_count(val_mask) > 0;

  TrainResult result;
  result.model = init_params(config.kind, g, config.hidden, config.seed);
  result.model.variant = config.variant;
  const MessageGraph mg = MessageGraph::from(g);
  const AdamWOptions opt{config.learning_rate, config.weight_decay};
  AdamWState state;
  std::vector<Matrix> grads;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Tape tape;
    const BoundParams params = bind(tape, result.model);
    const Var logits = forward(tape, result.model, params, mg, g);
    const Var loss = bce_with_logits(tape, logits, g.labels, train_mask);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) {
      throw TrainError("non-finite training loss at epoch " + std::to_string(epoch) + " (model " +
                       std::string(to_string(config.kind)) + ", lr " + num(config.learning_rate) + ")");
    }
    const Matrix& z = tape.value(logits);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_value;
    rec.train_accuracy = compute_metrics(z, g.labels, train_mask).accuracy;
    rec.val_accuracy = has_val ? compute_metrics(z, g.labels, val_mask).accuracy
                               : std::numeric_limits<double>::quiet_NaN();
    result.history.epochs.push_back(rec);

    tape.backward(loss);
    grads.clear();
    for (Var v : params.all) grads.push_back(tape.grad(v));
    const auto ptrs = result.model.parameters();
    adamw_step(ptrs, grads, state, opt);
    if (on_epoch) on_epoch(epoch, result.model);
  }
  return result;
}

Metrics evaluate(const NodeClassifier& model, const HeteroGraph& full, Split split) {
  const HeteroGraph g = apply_variant(full, model.variant);
  const auto mask = g.mask(split);
  if (masked_count(mask) == 0) {
    throw TrainError("split " + std::string(to_string(split)) + " has no users");
  }
  return compute_metrics(forward(model, g), g.labels, mask);
}

GridSpec default_grid() {
  return {{0.01, 0.001, 0.0001, 0.00001}, {0.05, 0.005, 0.0005, 0.00005}, {50, 100, 250, 500}};
}

std::string GridReport::to_csv() const {
  std::string out =
      "index,model,variant,learning_rate,weight_decay,epochs,train_acc,val_acc,val_f1,test_acc,"
      "test_f1,best,status\n";
  auto opt = [](const std::optional<Metrics>& m, bool f1) {
    return m ? num(f1 ? m->f1 : m->accuracy) : std::string();
  };
  for (const auto& r : rows) {
    out += std::to_string(r.index) + "," + std::string(to_string(r.config.kind)) + "," +
           std::string(to_string(r.config.variant)) + "," + num(r.config.learning_rate) + "," +
           num(r.config.weight_decay) + "," + std::to_string(r.config.epochs) + "," +
           opt(r.train, false) + "," + opt(r.val, false) + "," + opt(r.val, true) + "," +
           opt(r.test, false) + "," + opt(r.test, true) + "," +
           (best && *best == r.index ? "1" : "0") + "," +
           (r.error.empty() ? std::string("ok") : "\"error: " + r.error + "\"") + "\n";
  }
  return out;
}

GridReport grid_search(const HeteroGraph& g, const GridSpec& grid, const TrainConfig& base) {
  if (grid.size() == 0) throw TrainError("grid is empty");
  GridReport report;
  for (double lr : grid.learning_rates) {
    for (double wd : grid.weight_decays) {
      for (std::size_t ep : grid.epochs) {
        GridRow row;
        row.index = report.rows.size();
        row.config = base;
        row.config.learning_rate = lr;
        row.config.weight_decay = wd;
        row.config.epochs = ep;
        report.rows.push_back(row);
      }
    }
  }

  const auto has_split = [&](Split s) {
    return std::any_of(g.splits.begin(), g.splits.end(), [s](Split x) { return x == s; });
  };
  const bool has_val = has_split(Split::Val);
  const bool has_test = has_split(Split::Test);

  // Rows sharing (lr, wd) differ only in epoch count: train once to the
  // largest count and evaluate at each requested epoch.
  const std::size_t per_pair = grid.epochs.size();
  for (std::size_t first = 0; first < report.rows.size(); first += per_pair) {
    std::map<std::size_t, std::vector<std::size_t>> at_epoch;
    std::size_t max_epochs = 0;
    for (std::size_t k = first; k < first + per_pair; ++k) {
      at_epoch[report.rows[k].config.epochs].push_back(k);
      max_epochs = std::max(max_epochs, report.rows[k].config.epochs);
    }
    TrainConfig cfg = report.rows[first].config;
    cfg.epochs = max_epochs;
    try {
      train(g, cfg, [&](std::size_t epoch, const NodeClassifier& model) {
        auto it = at_epoch.find(epoch);
        if (it == at_epoch.end()) return;
        const Metrics tr = evaluate(model, g, Split::Train);
        const auto va = has_val ? std::optional<Metrics>(evaluate(model, g, Split::Val)) : std::nullopt;
        const auto te = has_test ? std::optional<Metrics>(evaluate(model, g, Split::Test)) : std::nullopt;
        for (std::size_t k : it->second) {
          report.rows[k].train = tr;
          report.rows[k].val = va;
          report.rows[k].test = te;
        }
      });
    } catch (const std::exception& e) {
      for (std::size_t k = first; k < first + per_pair; ++k) {
        if (!report.rows[k].train) report.rows[k].error = e.what();
      }
    }
    for (std::size_t k = first; k < first + per_pair; ++k) {
      if (!report.rows[k].train && report.rows[k].error.empty()) {
        report.rows[k].error = "configuration rejected";
      }
    }
  }

  for (const auto& r : report.rows) {
    if (!r.error.empty() || !r.train) continue;
    const double score = r.val ? r.val->accuracy : r.train->accuracy;
    if (!report.best) {
      report.best = r.index;
      continue;
    }
    const auto& b = report.rows[*report.best];
    const double best_score = b.val ? b.val->accuracy : b.train->accuracy;
    const bool better =
        score > best_score ||
        (score == best_score &&
         (r.config.epochs < b.config.epochs ||
          (r.config.epochs == b.config.epochs && r.config.learning_rate < b.config.learning_rate)));
    if (better) report.best = r.index;
  }
  return report;
}

StructureCounts StructureCounts::of(const HeteroGraph& g) {
  StructureCounts c;
  for (std::size_t t = 0; t < kNodeTypeCount; ++t) c.nodes[t] = g.node_count(static_cast<NodeType>(t));
  for (std::size_t r = 0; r < kStoredRelationCount; ++r) c.edges[r] = g.edges[r].size();
  return c;
}

std::size_t StructureCounts::total_nodes() const { return nodes[0] + nodes[1] + nodes[2]; }

std::size_t StructureCounts::total_edges() const {
  std::size_t n = 0;
  for (auto e : edges) n += e;
  return n;
}

StructureCounts expected_counts(const StructureCounts& full, GraphVariant v) {
  StructureCounts c = full;
  const auto rel = [](Relation r) { return static_cast<std::size_t>(r); };
  switch (v) {
    case GraphVariant::All: break;
    case GraphVariant::NoWordWord: c.edges[rel(Relation::WordWord)] = 0; break;
    case GraphVariant::NoWord:
      c.nodes[static_cast<std::size_t>(NodeType::Word)] = 0;
      c.edges[rel(Relation::DocWord)] = 0;
      c.edges[rel(Relation::WordWord)] = 0;
      break;
    case GraphVariant::NoDocDoc: c.edges[rel(Relation::DocDoc)] = 0; break;
  }
  return c;
}

std::vector<AblationRow> run_ablation(const HeteroGraph& g, const TrainConfig& config) {
  const StructureCounts full = StructureCounts::of(g);
  const bool has_val = std::find(g.splits.begin(), g.splits.end(), Split::Val) != g.splits.end();
  const bool has_test = std::find(g.splits.begin(), g.splits.end(), Split::Test) != g.splits.end();
  std::vector<AblationRow> rows;
  for (GraphVariant v : all_variants()) {
    AblationRow row;
    row.variant = v;
    row.counts = StructureCounts::of(apply_variant(g, v));
    row.counts_match = row.counts == expected_counts(full, v);
    TrainConfig cfg = config;
    cfg.variant = v;
    const TrainResult result = train(g, cfg);
    row.train = evaluate(result.model, g, Split::Train);
    if (has_val) row.val = evaluate(result.model, g, Split::Val);
    if (has_test) row.test = evaluate(result.model, g, Split::Test);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace hgnn
