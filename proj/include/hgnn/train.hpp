#pragma once

#include "hgnn/gnn.hpp"
#include "hgnn/hetgraph.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hgnn {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  ConvKind kind = ConvKind::Sage;
  GraphVariant variant = GraphVariant::All;
  double learning_rate = 0.01;
  double weight_decay = 0.0005;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::size_t hidden = 64;

  void validate() const;
};

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // positive class
  double loss = 0.0;
  std::size_t count = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  // Header `epoch,train_loss,train_acc,val_acc`; values printed with 17
  // significant digits.
  std::string to_csv() const;
};

// Mean over masked rows of softplus(z) - y z. Throws when the mask is empty.
Var bce_with_logits(Tape& t, Var logits, std::span<const std::uint8_t> labels,
                    const std::vector<bool>& mask);
double bce_with_logits(const Matrix& logits, std::span<const std::uint8_t> labels,
                       const std::vector<bool>& mask);

// Prediction is logit > 0. f1 is 0 when there are no true positives.
Metrics compute_metrics(const Matrix& logits, std::span<const std::uint8_t> labels,
                        const std::vector<bool>& mask);

struct AdamWOptions {
  double learning_rate = 0.001;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
// theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
void adamw_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamWState& state,
                const AdamWOptions& opt);

struct TrainResult {
  NodeClassifier model;
  TrainHistory history;
};

// Called after each optimiser step with the 1-based epoch number.
using EpochCallback = std::function<void(std::size_t epoch, const NodeClassifier& model)>;

// Full-graph training on apply_variant(g, config.variant). Each epoch runs
// one forward pass, the loss on train-masked users, one backward pass and one
// AdamW step.
TrainResult train(const HeteroGraph& g, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Evaluates on apply_variant(g, model.variant).
Metrics evaluate(const NodeClassifier& model, const HeteroGraph& g, Split split);

struct GridSpec {
  std::vector<double> learning_rates;
  std::vector<double> weight_decays;
  std::vector<std::size_t> epochs;

  std::size_t size() const {
    return learning_rates.size() * weight_decays.size() * epochs.size();
  }
};

// {0.01, 0.001, 0.0001, 0.00001} x {0.05, 0.005, 0.0005, 0.00005} x {50, 100, 250, 500}
GridSpec default_grid();

struct GridRow {
  std::size_t index = 0;
  TrainConfig config;
  std::optional<Metrics> train, val, test;
  std::string error;
};

struct GridReport {
  std::vector<GridRow> rows;  // grid order: lr, then wd, then epochs
  std::optional<std::size_t> best;

  std::string to_csv() const;
};

// One model per combination; best = max validation accuracy, ties to fewer
// epochs, then lower learning rate, then grid order. Failed cells are
// recorded with their error message.
GridReport grid_search(const HeteroGraph& g, const GridSpec& grid, const TrainConfig& base);

struct StructureCounts {
  std::array<std::size_t, kNodeTypeCount> nodes{};
  std::array<std::size_t, kStoredRelationCount> edges{};

  static StructureCounts of(const HeteroGraph& g);
  std::size_t total_nodes() const;
  std::size_t total_edges() const;
  bool operator==(const StructureCounts&) const = default;
};

// Expected counts after apply_variant, derived from the variant contract
// alone (independent of apply_variant's implementation).
StructureCounts expected_counts(const StructureCounts& full, GraphVariant v);

struct AblationRow {
  GraphVariant variant = GraphVariant::All;
  StructureCounts counts;
  bool counts_match = false;  // counts == expected_counts(full, variant)
  Metrics train, val, test;
};

// Trains one model per variant (all, no-word-word, no-word, no-doc-doc) with
// identical hyperparameters and seed.
std::vector<AblationRow> run_ablation(const HeteroGraph& g, const TrainConfig& config);

}  // namespace hgnn
