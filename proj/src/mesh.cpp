#include "terrafill/mesh.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "terrafill/grid.hpp"

namespace terrafill::mesh {

TerrainMesh heightmap_to_mesh(const Heightmap& h, const Mask* m,
                              double vertical_exaggeration) {
  if (grid::has_nodata(h)) {
    throw ContainsNodata("heightmap_to_mesh: raster contains nodata (NaN) cells");
  }
  const int W = static_cast<int>(h.cols());
  const int H = static_cast<int>(h.rows());
  if (m && (m->rows() != H || m->cols() != W)) {
    throw ShapeMismatch("heightmap_to_mesh: mask dims do not match raster");
  }

  TerrainMesh mesh;
  mesh.grid_w = W;
  mesh.grid_h = H;
  mesh.vertices.reserve(static_cast<std::size_t>(W) * H);
  mesh.tags.reserve(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      mesh.vertices.push_back({static_cast<float>(x), static_cast<float>(y),
                               static_cast<float>(h(y, x) * vertical_exaggeration)});
      mesh.tags.push_back(m && (*m)(y, x) ? RegionTag::inpainted : RegionTag::valid);
    }
  }
  const auto idx = [W](int y, int x) { return static_cast<std::uint32_t>(y * W + x); };
  mesh.triangles.reserve(2u * (W - 1) * (H - 1));
  for (int y = 0; y + 1 < H; ++y) {
    for (int x = 0; x + 1 < W; ++x) {
      // both triangles share the (y, x+1) -- (y+1, x) diagonal; positive
      // signed area in the xy plane
      mesh.triangles.push_back({idx(y, x), idx(y, x + 1), idx(y + 1, x)});
      mesh.triangles.push_back({idx(y, x + 1), idx(y + 1, x + 1), idx(y + 1, x)});
    }
  }
  return mesh;
}

void write_obj(const TerrainMesh& mesh, const std::string& path) {
  std::string mtl_path = path;
  const auto dot = mtl_path.find_last_of('.');
  if (dot != std::string::npos) mtl_path.resize(dot);
  mtl_path += ".mtl";
  std::string mtl_name = mtl_path;
  const auto slash = mtl_name.find_last_of("/\\");
  if (slash != std::string::npos) mtl_name = mtl_name.substr(slash + 1);

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "mtllib " << mtl_name << "\n";
  char buf[96];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
    f << buf;
  }

  auto face_inpainted = [&](const std::array<std::uint32_t, 3>& t) {
    return mesh.tags[t[0]] == RegionTag::inpainted ||
           mesh.tags[t[1]] == RegionTag::inpainted || mesh.tags[t[2]] == RegionTag::inpainted;
  };
  f << "g valid\nusemtl mtl_valid\n";
  for (const auto& t : mesh.triangles) {
    if (!face_inpainted(t)) f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  f << "g inpainted\nusemtl mtl_inpainted\n";
  for (const auto& t : mesh.triangles) {
    if (face_inpainted(t)) f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  if (!f) throw IoError("short write to " + path);
  f.close();

  std::ofstream mtl(mtl_path, std::ios::trunc);
  if (!mtl) throw IoError("cannot open " + mtl_path + " for writing");
  mtl << "newmtl mtl_valid\nKd 0.62 0.55 0.45\n\n"
      << "newmtl mtl_inpainted\nKd 0.85 0.25 0.20\n";
}

ObjData read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  ObjData obj;
  std::string line, group = "default";
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "v") {
      TerrainMesh::Vertex v{};
      ss >> v.x >> v.y >> v.z;
      obj.vertices.push_back(v);
    } else if (tok == "g") {
      ss >> group;
    } else if (tok == "f") {
      std::array<std::uint32_t, 3> t{};
      for (int i = 0; i < 3; ++i) {
        std::string ref;
        ss >> ref;
        // accept v, v/vt, v//vn forms
        t[i] = static_cast<std::uint32_t>(std::stoul(ref)) - 1;
        if (t[i] >= obj.vertices.size()) {
          throw FormatError("face references nonexistent vertex in " + path);
        }
      }
      obj.triangles.push_back(t);
      obj.face_groups.push_back(group);
    }
  }
  return obj;
}

}  // namespace terrafill::mesh
