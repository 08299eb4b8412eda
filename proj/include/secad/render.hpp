#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "secad/sem.hpp"

namespace secad {

// Default resolutions: profile raster, assembly grid, renderability probe.
inline constexpr int kSketchRes = 128;
inline constexpr int kAssemblyRes = 64;
inline constexpr int kProbeRes = 16;

// Occupancy raster of a sketch over the normalized plane [0,1)^2.
struct Region2D {
  int resolution = 0;
  std::vector<uint8_t> mask;  // mask[y * resolution + x]

  bool at(int x, int y) const { return mask[y * resolution + x] != 0; }
  size_t occupied_count() const;
  double occupancy_fraction() const;
  bool empty() const { return occupied_count() == 0; }
};

// Voxel occupancy over the world cube [-1,1]^3, x fastest.
struct VoxelSolid {
  int resolution = 0;
  std::vector<uint8_t> occ;  // occ[(z * r + y) * r + x]

  bool at(int x, int y, int z) const {
    return occ[(static_cast<size_t>(z) * resolution + y) * resolution + x] != 0;
  }
  size_t occupied_count() const;
  bool empty() const { return occupied_count() == 0; }
  double voxel_size() const { return 2.0 / resolution; }
  double volume() const {
    const double v = voxel_size();
    return static_cast<double>(occupied_count()) * v * v * v;
  }
  Eigen::Vector3d voxel_center(int x, int y, int z) const {
    const double s = voxel_size();
    return {-1.0 + (x + 0.5) * s, -1.0 + (y + 0.5) * s, -1.0 + (z + 0.5) * s};
  }
};

// Exact set algebra on matching grids; mismatched resolutions throw.
VoxelSolid voxel_union(const VoxelSolid& a, const VoxelSolid& b);
VoxelSolid voxel_difference(const VoxelSolid& a, const VoxelSolid& b);
VoxelSolid voxel_intersection(const VoxelSolid& a, const VoxelSolid& b);
double voxel_iou(const VoxelSolid& a, const VoxelSolid& b);

// A point cloud is rows of xyz; free functions below operate on it.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct RenderError : std::runtime_error {
  IssueCode code;
  RenderError(IssueCode c, const std::string& what)
      : std::runtime_error(what), code(c) {}
};
struct EmptySolidError : RenderError {
  explicit EmptySolidError(const std::string& what)
      : RenderError(IssueCode::EmptySolid, what) {}
};

// Scanline even-odd rasterization per loop; within a face the first loop is
// the outer boundary and later loops subtract as holes; faces union.
// Geometry failures (degenerate arcs, circle fits) throw RenderError.
Region2D rasterize_sketch(const Sketch& sketch, int resolution = kSketchRes);

// Sweep the profile between the extrusion's two plane displacements, apply
// uniform profile scale about its center, then rotate and translate into the
// world cube. Empty profiles or zero height give an all-false solid.
VoxelSolid extrude(const Region2D& region, const Extrusion& ext,
                   int resolution = kAssemblyRes);

// Fold the model's pairs with their boolean ops. The first op must be `add`.
// The report carries EmptySolid warnings per empty pair and an EmptySolid
// error when the final solid is empty; `solid` is all-false in that case.
struct AssembleResult {
  VoxelSolid solid;
  ValidationReport report;
  bool ok() const { return report.is_valid(); }
};
AssembleResult assemble(const CadModel& model, int resolution = kAssemblyRes);

// n surface samples (voxels with an exposed 6-face), jittered inside their
// voxel, drawn without replacement until the surface is exhausted. With
// normalize, the cloud is centered to zero mean and scaled to max norm 1.
PointCloud sample_points(const VoxelSolid& solid, int n, uint64_t seed,
                         bool normalize = true);

// Cheap validity probe: full validation plus a low-resolution assembly.
ValidationReport is_renderable(const CadModel& model);

// --- exports ---------------------------------------------------------------

void write_xyz(const std::filesystem::path& p, const PointCloud& cloud);

// Run-length voxel blob: 16-byte header (magic "SVRL", u32 resolution,
// u32 run count, u32 reserved) then u32 run lengths alternating
// empty/occupied, starting with empty, in storage order.
std::vector<uint8_t> encode_voxels_rle(const VoxelSolid& solid);
VoxelSolid decode_voxels_rle(std::span<const uint8_t> bytes);
void write_voxels_rle(const std::filesystem::path& p, const VoxelSolid& solid);
VoxelSolid read_voxels_rle(const std::filesystem::path& p);

// Orthographic silhouette composite (views along x, y, z side by side) as a
// binary PGM; the payload handed to the image-scoring client.
std::vector<uint8_t> render_snapshot_pgm(const VoxelSolid& solid);
void write_snapshot_pgm(const std::filesystem::path& p,
                        const VoxelSolid& solid);

}  // namespace secad
