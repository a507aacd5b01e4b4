#pragma once

#include <vector>

#include "kgfuse/encoder.hpp"
#include "kgfuse/features.hpp"
#include "kgfuse/graph.hpp"
#include "kgfuse/rng.hpp"

namespace kgfuse::testing {

// Six entities: a path 0-1-2-3 with a branch 1-4, and 5 isolated. Entity 3
// lacks text, entity 4 lacks an image.
inline KnowledgeGraph six_node_graph() {
  return KnowledgeGraph(6, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {1, 2, 4}});
}

inline FeatureStore six_node_features(std::uint64_t seed, std::size_t text_dim = 3,
                                      std::size_t image_dim = 4) {
  Rng rng(seed);
  FeatureStore fs;
  fs.set_text_dim(text_dim);
  fs.set_image_dim(image_dim);
  auto vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
  };
  for (EntityId e = 0; e < 6; ++e) {
    if (e != 3) {
      for (std::uint32_t s = 0; s <= e % 3; ++s) fs.add_attribute(e, s, vec(text_dim));
    }
    if (e != 4) fs.set_image(e, vec(image_dim));
  }
  return fs;
}

inline EncoderConfig small_config(FusionStrategy fusion = FusionStrategy::kGated) {
  EncoderConfig c;
  c.dim = 4;
  c.heads = 2;
  c.layers = 2;
  c.dropout = 0.0;
  c.fusion = fusion;
  c.hops = 2;
  c.fanout = 3;
  return c;
}

}  // namespace kgfuse::testing
