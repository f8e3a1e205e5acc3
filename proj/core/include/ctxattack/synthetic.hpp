#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxattack/corpus.hpp"

namespace ctxattack {

// Seeded corpus generator. Labels get power-law popularity and are grouped
// into overlapping themes; each scene draws all its objects from one theme,
// so cross-theme label pairs rarely co-occur and the derived context graph
// stays meaningfully sparse.
struct SyntheticConfig {
  int num_labels = 20;
  int num_scenes = 500;
  std::uint64_t seed = 1;
  int min_objects = 2;
  int max_objects = 6;
  int num_themes = 0;  // 0: one theme per ~4 labels
  double zipf_exponent = 0.8;
  double extra_theme_prob = 0.35;
  double canvas_width = 640;
  double canvas_height = 480;
};

Corpus generate_corpus(const SyntheticConfig& cfg);

// The usual 20 detection class names when n == 20, otherwise generated
// placeholder names.
std::vector<std::string> default_label_names(int n);

}  // namespace ctxattack
