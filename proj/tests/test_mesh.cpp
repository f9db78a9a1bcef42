#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "terrafill/mesh.hpp"
#include "terrafill/rng.hpp"

using namespace terrafill;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("terrafill_mesh_" + name)).string();
}

double signed_area_xy(const mesh::TerrainMesh& m, const std::array<std::uint32_t, 3>& t) {
  const auto& a = m.vertices[t[0]];
  const auto& b = m.vertices[t[1]];
  const auto& c = m.vertices[t[2]];
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

}  // namespace

TEST_CASE("2x2 heightmap gives 4 vertices and 2 triangles") {
  Heightmap h(2, 2);
  h << 0.0f, 0.1f, 0.2f, 0.3f;
  const auto m = mesh::heightmap_to_mesh(h, nullptr, 1.0);
  CHECK(m.vertices.size() == 4);
  CHECK(m.triangles.size() == 2);
}

TEST_CASE("vertex/triangle counts follow the closed forms") {
  Rng rng(3);
  for (const auto [W, H] : {std::pair{2, 5}, {7, 3}, {16, 16}, {9, 2}}) {
    Heightmap h(H, W);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) h(y, x) = static_cast<float>(rng.uniform());
    }
    const auto m = mesh::heightmap_to_mesh(h, nullptr, 30.0);
    CHECK(m.vertices.size() == static_cast<std::size_t>(W) * H);
    CHECK(m.triangles.size() == 2u * (W - 1) * (H - 1));
    for (const auto& t : m.triangles) {
      for (const auto idx : t) CHECK(idx < m.vertices.size());
    }
  }
}

TEST_CASE("constant heightmap is planar with exaggerated z") {
  Heightmap h = Heightmap::Constant(4, 4, 0.5f);
  const auto m = mesh::heightmap_to_mesh(h, nullptr, 30.0);
  for (const auto& v : m.vertices) CHECK(v.z == doctest::Approx(15.0f));
}

TEST_CASE("winding is consistent (positive projected area)") {
  Rng rng(8);
  Heightmap h(6, 7);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 7; ++x) h(y, x) = static_cast<float>(rng.uniform());
  }
  const auto m = mesh::heightmap_to_mesh(h, nullptr, 30.0);
  for (const auto& t : m.triangles) CHECK(signed_area_xy(m, t) > 0.0);
}

TEST_CASE("masked pixels tag their vertices inpainted") {
  Heightmap h = Heightmap::Constant(3, 3, 0.1f);
  Mask mask = Mask::Constant(3, 3, false);
  mask(1, 1) = true;
  const auto m = mesh::heightmap_to_mesh(h, &mask, 1.0);
  int inpainted = 0;
  for (const auto tag : m.tags) inpainted += tag == mesh::RegionTag::inpainted;
  CHECK(inpainted == 1);
  CHECK(m.tags[4] == mesh::RegionTag::inpainted);
}

TEST_CASE("NaN heightmap is rejected") {
  Heightmap h = Heightmap::Constant(3, 3, 0.1f);
  h(0, 2) = std::nanf("");
  CHECK_THROWS_AS(mesh::heightmap_to_mesh(h, nullptr, 1.0), ContainsNodata);
}

TEST_CASE("OBJ emission: counts, groups, and re-parse") {
  Heightmap h(3, 4);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) h(y, x) = 0.1f * (y * 4 + x);
  }
  Mask mask = Mask::Constant(3, 4, false);
  mask(1, 1) = true;
  const auto m = mesh::heightmap_to_mesh(h, &mask, 30.0);
  const std::string path = temp_path("terrain.obj");
  mesh::write_obj(m, path);

  const auto obj = mesh::read_obj(path);
  CHECK(obj.vertices.size() == m.vertices.size());
  CHECK(obj.triangles.size() == m.triangles.size());

  // faces touching vertex (1,1) = index 5 must be in the inpainted group
  for (std::size_t f = 0; f < obj.triangles.size(); ++f) {
    const auto& t = obj.triangles[f];
    const bool touches = t[0] == 5 || t[1] == 5 || t[2] == 5;
    CHECK(obj.face_groups[f] == (touches ? "inpainted" : "valid"));
  }
  std::filesystem::remove(path);
  std::filesystem::remove(temp_path("terrain.mtl"));
}

TEST_CASE("2x2 OBJ has 4 v lines and 2 f lines") {
  Heightmap h(2, 2);
  h << 0.0f, 0.25f, 0.5f, 0.75f;
  const auto m = mesh::heightmap_to_mesh(h, nullptr, 1.0);
  const std::string path = temp_path("tiny.obj");
  mesh::write_obj(m, path);
  std::ifstream f(path);
  std::string line;
  int v_lines = 0, f_lines = 0;
  while (std::getline(f, line)) {
    if (line.rfind("v ", 0) == 0) ++v_lines;
    if (line.rfind("f ", 0) == 0) ++f_lines;
  }
  CHECK(v_lines == 4);
  CHECK(f_lines == 2);
  std::filesystem::remove(path);
  std::filesystem::remove(temp_path("tiny.mtl"));
}

TEST_CASE("fully masked heightmap puts all faces in the inpainted group") {
  Heightmap h = Heightmap::Constant(3, 3, 0.2f);
  Mask mask = Mask::Constant(3, 3, true);
  const auto m = mesh::heightmap_to_mesh(h, &mask, 1.0);
  const std::string path = temp_path("allmasked.obj");
  mesh::write_obj(m, path);
  const auto obj = mesh::read_obj(path);
  for (const auto& g : obj.face_groups) CHECK(g == "inpainted");
  std::filesystem::remove(path);
  std::filesystem::remove(temp_path("allmasked.mtl"));
}
