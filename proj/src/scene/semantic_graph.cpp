#include "hiertraj/scene/semantic_graph.hpp"

#include "hiertraj/error.hpp"

#include <string>

namespace hiertraj {

Index SemanticGraph::index_of(int node_id) const {
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    if (node_ids[i] == node_id) return static_cast<Index>(i);
  }
  return -1;
}

SemanticGraph build_semantic_graph(const std::vector<std::vector<DynamicInsertionArea>>& window,
                                   int reference_id) {
  if (window.empty()) throw ConfigError("semantic graph needs at least one step");
  SemanticGraph g;
  for (const auto& d : window.back()) g.node_ids.push_back(d.id);
  const Index ref = g.index_of(reference_id);
  if (ref < 0) throw ConfigError("reference node " + std::to_string(reference_id) + " absent at the last step");
  g.reference = static_cast<std::size_t>(ref);

  const Index n = g.node_count();
  const Index steps = static_cast<Index>(window.size());
  g.mask = Tensor::Zero(n, steps);
  for (Index k = 0; k < steps; ++k) {
    Tensor abs = Tensor::Zero(n, kDiaFeatures);
    const DynamicInsertionArea* ref_dia = nullptr;
    for (const auto& d : window[static_cast<std::size_t>(k)]) {
      if (d.id == reference_id) ref_dia = &d;
      const Index i = g.index_of(d.id);
      if (i < 0) continue;
      const auto f = d.features();
      for (Index c = 0; c < kDiaFeatures; ++c) abs(i, c) = f[static_cast<std::size_t>(c)];
      g.mask(i, k) = 1.0;
    }
    if (ref_dia == nullptr) {
      throw ConfigError("reference node " + std::to_string(reference_id) + " absent at step " +
                        std::to_string(k));
    }
    Tensor rel = Tensor::Zero(n, kDiaFeatures);
    for (Index i = 0; i < n; ++i) {
      if (g.mask(i, k) == 0.0) continue;
      rel.row(i) = abs.row(i) - abs.row(ref);
    }
    g.absolute.push_back(std::move(abs));
    g.relative.push_back(std::move(rel));
  }
  return g;
}

}  // namespace hiertraj
