#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "terrafill/errors.hpp"
#include "terrafill/types.hpp"

namespace terrafill::mesh {

enum class RegionTag : std::uint8_t { valid, inpainted };

// Regular-grid triangulation of a heightmap: one vertex per pixel,
// two triangles per cell split along the same diagonal, counter-clockwise
// winding seen from +z.
struct TerrainMesh {
  struct Vertex {
    float x, y, z;
  };
  std::vector<Vertex> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<RegionTag> tags;  // one per vertex
  int grid_w = 0;
  int grid_h = 0;
};

// z = value * vertical_exaggeration, 1 unit per pixel horizontally. A vertex
// is tagged inpainted iff its pixel is masked. Throws ContainsNodata on NaN.
TerrainMesh heightmap_to_mesh(const Heightmap& h, const Mask* m,
                              double vertical_exaggeration = 30.0);

// Wavefront OBJ with groups `g valid` / `g inpainted` (materials mtl_valid /
// mtl_inpainted in a sidecar .mtl). A face goes to `inpainted` iff any of its
// vertices is tagged. Coordinates printed as 6-decimal fixed point.
void write_obj(const TerrainMesh& mesh, const std::string& path);

// Minimal OBJ reader for round-trip validation: vertices, triangle faces and
// their group assignment.
struct ObjData {
  std::vector<TerrainMesh::Vertex> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;  // 0-based
  std::vector<std::string> face_groups;                 // group active per face
};
ObjData read_obj(const std::string& path);

}  // namespace terrafill::mesh
