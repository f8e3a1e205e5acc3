#include "ctxattack/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ctxattack/rng.hpp"

namespace ctxattack {

std::vector<std::string> default_label_names(int n) {
  static const std::vector<std::string> voc = {
      "aeroplane", "bicycle", "bird",  "boat",      "bottle", "bus",    "car",
      "cat",       "chair",   "cow",   "diningtable", "dog",  "horse",  "motorbike",
      "person",    "pottedplant", "sheep", "sofa",  "train",  "tvmonitor"};
  if (n == static_cast<int>(voc.size())) return voc;
  std::vector<std::string> names;
  names.reserve(n);
  char buf[16];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "label%02d", i);
    names.emplace_back(buf);
  }
  return names;
}

namespace {

// draw an index from weights[first..last) proportional to weight
int weighted_index(const std::vector<double>& weights, const std::vector<int>& members,
                   Rng& rng) {
  double total = 0;
  for (int m : members) total += weights[m];
  double u = rng.uniform() * total;
  for (int m : members) {
    u -= weights[m];
    if (u < 0) return m;
  }
  return members.back();
}

}  // namespace

Corpus generate_corpus(const SyntheticConfig& cfg) {
  if (cfg.num_labels < 2) throw std::invalid_argument("generate_corpus: need >= 2 labels");
  if (cfg.num_scenes < 1) throw std::invalid_argument("generate_corpus: need >= 1 scene");
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects)
    throw std::invalid_argument("generate_corpus: bad object count range");

  Rng rng(derive_seed(cfg.seed, {"synthetic-corpus"}));

  const int n = cfg.num_labels;
  const int themes = cfg.num_themes > 0 ? cfg.num_themes : std::max(2, n / 4);

  // power-law popularity by label rank
  std::vector<double> weight(n);
  for (int i = 0; i < n; ++i)
    weight[i] = 1.0 / std::pow(static_cast<double>(i + 1), cfg.zipf_exponent);

  // overlapping theme membership; every label sits in at least one theme
  std::vector<std::vector<int>> theme_members(themes);
  for (int lbl = 0; lbl < n; ++lbl) {
    theme_members[lbl % themes].push_back(lbl);
    if (rng.uniform() < cfg.extra_theme_prob)
      theme_members[(lbl * 7 + 3) % themes].push_back(lbl);
  }
  for (auto& members : theme_members) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
  }

  // theme popularity follows its members' total weight
  std::vector<double> theme_weight(themes, 0.0);
  for (int t = 0; t < themes; ++t)
    for (int m : theme_members[t]) theme_weight[t] += weight[m];
  std::vector<int> theme_ids(themes);
  for (int t = 0; t < themes; ++t) theme_ids[t] = t;

  Corpus corpus;
  corpus.labels = LabelSet(default_label_names(n));

  char id_buf[24];
  const int span = cfg.max_objects - cfg.min_objects + 1;
  for (int s = 0; s < cfg.num_scenes; ++s) {
    std::snprintf(id_buf, sizeof id_buf, "s%05d", s);
    Scene scene;
    scene.scene_id = id_buf;
    scene.width = cfg.canvas_width;
    scene.height = cfg.canvas_height;

    const int theme = weighted_index(theme_weight, theme_ids, rng);
    const auto& members = theme_members[theme];
    const int count = cfg.min_objects + static_cast<int>(rng.index(span));

    for (int k = 0; k < count; ++k) {
      ObjectInstance obj;
      obj.label = weighted_index(weight, members, rng);
      const double w = rng.uniform(0.08, 0.45) * cfg.canvas_width;
      const double h = rng.uniform(0.08, 0.45) * cfg.canvas_height;
      const double x = rng.uniform(0.0, cfg.canvas_width - w);
      const double y = rng.uniform(0.0, cfg.canvas_height - h);
      obj.bbox = {x, y, x + w, y + h};
      obj.score = rng.uniform(0.5, 0.999);
      scene.objects.push_back(obj);
    }
    corpus.scenes.push_back(std::move(scene));
  }
  return corpus;
}

}  // namespace ctxattack
