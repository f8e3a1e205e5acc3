#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxattack {

struct BoundingBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool operator==(const BoundingBox&) const = default;
};

// Immutable universe of label names; index order is file order.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int i) const;
  int index(std::string_view name) const;  // throws on unknown name
  std::optional<int> find(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const LabelSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct ObjectInstance {
  int label = 0;
  BoundingBox bbox;
  double score = 1.0;

  bool operator==(const ObjectInstance&) const = default;
};

struct Scene {
  std::string scene_id;
  double width = 0, height = 0;
  std::vector<ObjectInstance> objects;

  int size() const { return static_cast<int>(objects.size()); }

  bool operator==(const Scene&) const = default;
};

struct Corpus {
  LabelSet labels;
  std::vector<Scene> scenes;
};

// JSON-Lines, one scene per line:
//   {"scene_id": "...", "width": W, "height": H,
//    "objects": [{"label": "...", "bbox": [x1,y1,x2,y2], "score": s}, ...]}
// Without an explicit label set the universe is accumulated in first-seen
// order; with one, unknown labels are an error.
Corpus load_corpus(const std::string& path);
Corpus load_corpus(const std::string& path, const LabelSet& labels);
void save_corpus(const std::string& path, const Corpus& corpus);

// JSON array of label names.
LabelSet load_label_file(const std::string& path);
void save_label_file(const std::string& path, const LabelSet& labels);

// Scenes whose object count lies in [min_objects, max_objects], input order.
std::vector<Scene> filter_scenes(const std::vector<Scene>& scenes,
                                 int min_objects, int max_objects);

}  // namespace ctxattack
