#include "ctxattack/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ctxattack {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2)
    throw std::invalid_argument("LabelSet: need at least 2 labels, got " +
                                std::to_string(names_.size()));
  for (int i = 0; i < static_cast<int>(names_.size()); ++i) {
    if (!index_.emplace(names_[i], i).second)
      throw std::invalid_argument("LabelSet: duplicate label '" + names_[i] + "'");
  }
}

const std::string& LabelSet::name(int i) const {
  if (i < 0 || i >= size())
    throw std::out_of_range("LabelSet: index " + std::to_string(i) + " out of range");
  return names_[i];
}

int LabelSet::index(std::string_view name) const {
  auto found = find(name);
  if (!found)
    throw std::invalid_argument("LabelSet: unknown label '" + std::string(name) + "'");
  return *found;
}

std::optional<int> LabelSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

[[noreturn]] void fail_line(const std::string& path, int line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

Scene parse_scene(const json& j, const std::string& path, int line_no,
                  std::vector<std::string>* growing,
                  std::unordered_map<std::string, int>* grown_index,
                  const LabelSet* fixed) {
  Scene scene;
  if (!j.is_object()) fail_line(path, line_no, "scene is not a JSON object");
  try {
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.width = j.at("width").get<double>();
    scene.height = j.at("height").get<double>();
  } catch (const json::exception& e) {
    fail_line(path, line_no, std::string("bad scene header: ") + e.what());
  }
  if (scene.width <= 0 || scene.height <= 0)
    fail_line(path, line_no, "scene dimensions must be positive");

  if (!j.contains("objects") || !j.at("objects").is_array())
    fail_line(path, line_no, "missing objects array");

  for (const auto& obj : j.at("objects")) {
    ObjectInstance inst;
    std::string label_name;
    try {
      label_name = obj.at("label").get<std::string>();
      const auto& bb = obj.at("bbox");
      if (!bb.is_array() || bb.size() != 4)
        fail_line(path, line_no, "bbox must be [x_min, y_min, x_max, y_max]");
      inst.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
                   bb[3].get<double>()};
      inst.score = obj.value("score", 1.0);
    } catch (const json::exception& e) {
      fail_line(path, line_no, std::string("bad object: ") + e.what());
    }
    if (!(inst.bbox.x_min < inst.bbox.x_max) || !(inst.bbox.y_min < inst.bbox.y_max))
      fail_line(path, line_no, "malformed bbox in scene '" + scene.scene_id +
                                   "': corners out of order");
    if (inst.bbox.x_min < 0 || inst.bbox.y_min < 0 || inst.bbox.x_max > scene.width ||
        inst.bbox.y_max > scene.height)
      fail_line(path, line_no, "malformed bbox in scene '" + scene.scene_id +
                                   "': outside scene bounds");
    if (inst.score < 0 || inst.score > 1)
      fail_line(path, line_no, "score outside [0,1] in scene '" + scene.scene_id + "'");

    if (fixed) {
      auto found = fixed->find(label_name);
      if (!found)
        fail_line(path, line_no, "unknown label '" + label_name + "' in scene '" +
                                     scene.scene_id + "'");
      inst.label = *found;
    } else {
      auto [it, inserted] =
          grown_index->emplace(label_name, static_cast<int>(growing->size()));
      if (inserted) growing->push_back(label_name);
      inst.label = it->second;
    }
    scene.objects.push_back(inst);
  }
  return scene;
}

Corpus load_corpus_impl(const std::string& path, const LabelSet* fixed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);

  Corpus corpus;
  std::vector<std::string> growing;
  std::unordered_map<std::string, int> grown_index;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_line(path, line_no, std::string("JSON parse error: ") + e.what());
    }
    corpus.scenes.push_back(
        parse_scene(j, path, line_no, &growing, &grown_index, fixed));
  }
  if (corpus.scenes.empty())
    throw std::runtime_error(path + ": no scenes");

  if (fixed) {
    corpus.labels = *fixed;
  } else {
    if (growing.size() < 2)
      throw std::runtime_error(path + ": corpus mentions fewer than 2 labels");
    corpus.labels = LabelSet(std::move(growing));
  }
  return corpus;
}

}  // namespace

Corpus load_corpus(const std::string& path) { return load_corpus_impl(path, nullptr); }

Corpus load_corpus(const std::string& path, const LabelSet& labels) {
  return load_corpus_impl(path, &labels);
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const Scene& scene : corpus.scenes) {
    json objs = json::array();
    for (const ObjectInstance& o : scene.objects) {
      objs.push_back({{"label", corpus.labels.name(o.label)},
                      {"bbox", {o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max}},
                      {"score", o.score}});
    }
    json j = {{"scene_id", scene.scene_id},
              {"width", scene.width},
              {"height", scene.height},
              {"objects", std::move(objs)}};
    out << j.dump() << '\n';
  }
}

LabelSet load_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": JSON parse error: " + e.what());
  }
  if (!j.is_array()) throw std::runtime_error(path + ": label file must be a JSON array");
  std::vector<std::string> names;
  for (const auto& item : j) names.push_back(item.get<std::string>());
  return LabelSet(std::move(names));
}

void save_label_file(const std::string& path, const LabelSet& labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write label file: " + path);
  out << json(labels.names()).dump(2) << '\n';
}

std::vector<Scene> filter_scenes(const std::vector<Scene>& scenes, int min_objects,
                                 int max_objects) {
  if (min_objects < 0 || max_objects < min_objects)
    throw std::invalid_argument("filter_scenes: need 0 <= min_objects <= max_objects");
  std::vector<Scene> kept;
  for (const Scene& s : scenes)
    if (s.size() >= min_objects && s.size() <= max_objects) kept.push_back(s);
  return kept;
}

}  // namespace ctxattack
