#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ctxattack/corpus.hpp"

namespace ctxtest {

// Self-cleaning scratch directory for round-trip and loader tests.
class TempDir {
 public:
  TempDir() {
    const auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto candidate = base / ("ctxattack-test-" + std::to_string(rd()));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: could not create scratch directory");
  }

  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ctxattack::BoundingBox box(double x, double y, double w, double h) {
  return {x, y, x + w, y + h};
}

// Scene on a 640x480 canvas; object k gets a disjoint box whose area
// shrinks with k, so helper_order equals scene order unless overridden.
inline ctxattack::Scene make_scene(const std::string& id, const std::vector<int>& labels) {
  ctxattack::Scene scene;
  scene.scene_id = id;
  scene.width = 640;
  scene.height = 480;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double side = 100.0 - 10.0 * static_cast<double>(k);
    ctxattack::ObjectInstance inst;
    inst.label = labels[k];
    inst.bbox = box(5.0 + 105.0 * static_cast<double>(k), 10.0, side, side);
    inst.score = 0.9;
    scene.objects.push_back(inst);
  }
  return scene;
}

}  // namespace ctxtest
