#pragma once

// Demo episodes and chunk extraction.

#include <string>
#include <vector>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"

namespace qdd {

struct Episode {
  std::vector<Vec> observations;  // one state vector per step
  std::vector<Vec> actions;       // one action vector per step
  int task_id = 0;
};

inline void validate_episode(const Episode& ep) {
  require(!ep.actions.empty(), "invalid-argument", "episode has no actions");
  require(ep.observations.size() == ep.actions.size(), "shape-mismatch",
          "episode has " + std::to_string(ep.observations.size()) + " observations but " +
              std::to_string(ep.actions.size()) + " actions");
  for (const auto& a : ep.actions)
    require(a.size() == ep.actions.front().size(), "shape-mismatch",
            "episode actions disagree on dimension");
  for (const auto& o : ep.observations)
    require(o.size() == ep.observations.front().size(), "shape-mismatch",
            "episode observations disagree on dimension");
}

inline int dataset_task_count(const std::vector<Episode>& episodes) {
  int n = 1;
  for (const auto& ep : episodes) {
    require(ep.task_id >= 0, "invalid-argument", "negative task id");
    n = std::max(n, ep.task_id + 1);
  }
  return n;
}

// Action chunk starting at step t; steps past the end repeat the final
// action so every timestep of the episode yields a training chunk.
inline ActionChunk chunk_at(const Episode& ep, const ChunkLayout& layout, int t) {
  require(t >= 0 && t < static_cast<int>(ep.actions.size()), "invalid-argument",
          "chunk start outside episode");
  require(static_cast<int>(ep.actions.front().size()) == layout.action_dim, "shape-mismatch",
          "episode action dim does not match chunk layout");
  ActionChunk chunk = make_chunk(layout);
  const int last = static_cast<int>(ep.actions.size()) - 1;
  for (int h = 0; h < layout.horizon; ++h) {
    const Vec& row = ep.actions[static_cast<std::size_t>(std::min(t + h, last))];
    for (int d = 0; d < layout.action_dim; ++d) chunk.at(h, d) = row[static_cast<std::size_t>(d)];
  }
  return chunk;
}

inline std::vector<ActionChunk> all_chunks(const std::vector<Episode>& episodes,
                                           const ChunkLayout& layout) {
  std::vector<ActionChunk> chunks;
  for (const auto& ep : episodes) {
    validate_episode(ep);
    for (int t = 0; t < static_cast<int>(ep.actions.size()); ++t)
      chunks.push_back(chunk_at(ep, layout, t));
  }
  require(!chunks.empty(), "invalid-argument", "dataset produced no chunks");
  return chunks;
}

}  // namespace qdd
