#include "voxmae/ply.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxmae::ply {

using pointcloud::Point;
using pointcloud::PointCloud;

void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f.get(), "ply\nformat ascii 1.0\nelement vertex %zu\n", cloud.size());
  std::fprintf(f.get(), "property float x\nproperty float y\nproperty float z\n");
  if (cloud.has_intensity) std::fprintf(f.get(), "property float intensity\n");
  std::fprintf(f.get(), "end_header\n");
  for (const auto& p : cloud.points) {
    if (cloud.has_intensity) {
      std::fprintf(f.get(), "%.9g %.9g %.9g %.9g\n", p.x, p.y, p.z, p.intensity);
    } else {
      std::fprintf(f.get(), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    }
  }
  if (std::ferror(f.get())) throw std::runtime_error("error writing " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto fail = [&](const std::string& what) { return std::runtime_error(path.string() + ": " + what); };

  std::string line;
  if (!std::getline(in, line) || line != "ply") throw fail("missing 'ply' magic");
  if (!std::getline(in, line) || line != "format ascii 1.0") throw fail("only 'format ascii 1.0' is supported");

  std::size_t vertices = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<std::string> props;
  while (true) {
    if (!std::getline(in, line)) throw fail("header has no end_header");
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment" || word == "obj_info" || word.empty()) continue;
    if (word == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      if (n < 0) throw fail("bad element line '" + line + "'");
      if (name == "vertex") {
        if (seen_vertex) throw fail("duplicate vertex element");
        vertices = static_cast<std::size_t>(n);
        in_vertex = seen_vertex = true;
      } else {
        if (!seen_vertex) throw fail("element '" + name + "' before vertex is not supported");
        in_vertex = false;
      }
    } else if (word == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw fail("list properties on vertices are not supported");
      props.push_back(name);
    } else {
      throw fail("unexpected header line '" + line + "'");
    }
  }
  if (!seen_vertex) throw fail("no vertex element");
  if (props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z")
    throw fail("vertex properties must start with x y z");
  int intensity_col = -1;
  for (std::size_t i = 3; i < props.size(); ++i)
    if (props[i] == "intensity") intensity_col = static_cast<int>(i);

  PointCloud cloud;
  cloud.has_intensity = intensity_col >= 0;
  cloud.source = path.string();
  cloud.points.reserve(vertices);
  std::vector<double> row(props.size());
  for (std::size_t v = 0; v < vertices; ++v) {
    if (!std::getline(in, line)) throw fail("expected " + std::to_string(vertices) + " vertices, got " + std::to_string(v));
    std::istringstream ls(line);
    for (auto& x : row) {
      if (!(ls >> x)) throw fail("malformed vertex " + std::to_string(v));
    }
    Point p;
    p.x = static_cast<float>(row[0]);
    p.y = static_cast<float>(row[1]);
    p.z = static_cast<float>(row[2]);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) throw fail("non-finite vertex " + std::to_string(v));
    if (intensity_col >= 0) p.intensity = static_cast<float>(row[static_cast<std::size_t>(intensity_col)]);
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace voxmae::ply
