#pragma once

#include "hgnn/train.hpp"

#include <string>
#include <vector>

namespace hgnn {

// Node and edge counts, one `label<TAB>count` line each: user, document and
// word nodes, their total, then user-document, document-document,
// document-word and word-word edges and their total.
std::string format_counts(const StructureCounts& c);

// One row per variant: variant, accuracy and F1 per split, plus whether the
// structural counts matched the variant contract.
std::string format_ablation(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Best grid cell as `model  learning_rate  weight_decay  epochs`.
std::string format_best_config(const GridReport& report);

}  // namespace hgnn
