#pragma once

#include "hiertraj/numerics/tensor.hpp"
#include "hiertraj/scene/dia.hpp"

#include <vector>

namespace hiertraj {

// Nodes are the DIAs present at the last step of the window, ordered as
// extracted. Per step k (oldest first): absolute[k] and relative[k] are
// nodes x 5, mask(i, k) = 1 when node i exists at step k (zero-filled
// otherwise). Relative features subtract the reference node's absolute
// features at the same step.
struct SemanticGraph {
  std::vector<int> node_ids;
  std::size_t reference = 0;  // index into node_ids
  std::vector<Tensor> absolute;
  std::vector<Tensor> relative;
  Tensor mask;

  Index node_count() const { return static_cast<Index>(node_ids.size()); }
  Index steps() const { return static_cast<Index>(absolute.size()); }
  Index index_of(int node_id) const;  // -1 if absent
};

// `window` holds T_h + 1 DIA lists, oldest first. Throws ConfigError if the
// reference node is missing at any step.
SemanticGraph build_semantic_graph(const std::vector<std::vector<DynamicInsertionArea>>& window,
                                   int reference_id);

}  // namespace hiertraj
