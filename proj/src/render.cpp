#include "secad/render.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "secad/io.hpp"
#include "secad/quant.hpp"
#include "secad/rng.hpp"

namespace secad {

size_t Region2D::occupied_count() const {
  size_t n = 0;
  for (uint8_t v : mask) n += v != 0;
  return n;
}

double Region2D::occupancy_fraction() const {
  if (mask.empty()) return 0.0;
  return static_cast<double>(occupied_count()) / mask.size();
}

size_t VoxelSolid::occupied_count() const {
  size_t n = 0;
  for (uint8_t v : occ) n += v != 0;
  return n;
}

namespace {

void check_same_grid(const VoxelSolid& a, const VoxelSolid& b) {
  if (a.resolution != b.resolution)
    throw std::invalid_argument("voxel grids differ: " +
                                std::to_string(a.resolution) + " vs " +
                                std::to_string(b.resolution));
}

}  // namespace

VoxelSolid voxel_union(const VoxelSolid& a, const VoxelSolid& b) {
  check_same_grid(a, b);
  VoxelSolid out = a;
  for (size_t i = 0; i < out.occ.size(); ++i) out.occ[i] = a.occ[i] | b.occ[i];
  return out;
}

VoxelSolid voxel_difference(const VoxelSolid& a, const VoxelSolid& b) {
  check_same_grid(a, b);
  VoxelSolid out = a;
  for (size_t i = 0; i < out.occ.size(); ++i)
    out.occ[i] = static_cast<uint8_t>(a.occ[i] & ~b.occ[i] & 1);
  return out;
}

VoxelSolid voxel_intersection(const VoxelSolid& a, const VoxelSolid& b) {
  check_same_grid(a, b);
  VoxelSolid out = a;
  for (size_t i = 0; i < out.occ.size(); ++i) out.occ[i] = a.occ[i] & b.occ[i];
  return out;
}

double voxel_iou(const VoxelSolid& a, const VoxelSolid& b) {
  check_same_grid(a, b);
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.occ.size(); ++i) {
    inter += a.occ[i] & b.occ[i];
    uni += (a.occ[i] | b.occ[i]) != 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

namespace {

// Even-odd scanline fill of one polygon (normalized [0,1) coordinates) into a
// resolution^2 mask. Half-open edge rule keeps shared vertices unambiguous.
void fill_polygon(const std::vector<Eigen::Vector2d>& poly, int res,
                  std::vector<uint8_t>& mask) {
  const size_t n = poly.size();
  if (n < 3) return;
  std::vector<double> xs;
  for (int row = 0; row < res; ++row) {
    const double y = (row + 0.5) / res;
    xs.clear();
    for (size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& p = poly[i];
      const Eigen::Vector2d& q = poly[(i + 1) % n];
      const double y0 = p.y(), y1 = q.y();
      if ((y0 <= y && y < y1) || (y1 <= y && y < y0))
        xs.push_back(p.x() + (y - y0) * (q.x() - p.x()) / (y1 - y0));
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      // pixel centers (c+0.5)/res in [xs[i], xs[i+1])
      int lo = static_cast<int>(std::ceil(xs[i] * res - 0.5));
      int hi = static_cast<int>(std::ceil(xs[i + 1] * res - 0.5));
      lo = std::max(lo, 0);
      hi = std::min(hi, res);
      for (int c = lo; c < hi; ++c) mask[row * res + c] = 1;
    }
  }
}

std::vector<Eigen::Vector2d> loop_polygon_normalized(const Loop& loop) {
  ValidationReport rep;
  std::vector<Eigen::Vector2d> poly = tessellate_loop(loop, &rep);
  if (!rep.is_valid()) {
    const Issue& first = rep.issues.front();
    throw RenderError(first.code, std::string(issue_code_name(first.code)) +
                                      ": " + first.message);
  }
  for (Eigen::Vector2d& p : poly) p /= kGrid;
  return poly;
}

}  // namespace

Region2D rasterize_sketch(const Sketch& sketch, int resolution) {
  Region2D out;
  out.resolution = resolution;
  out.mask.assign(static_cast<size_t>(resolution) * resolution, 0);

  std::vector<uint8_t> face_mask, loop_mask;
  for (const Face& face : sketch.faces) {
    face_mask.assign(out.mask.size(), 0);
    for (size_t li = 0; li < face.loops.size(); ++li) {
      const auto poly = loop_polygon_normalized(face.loops[li]);
      if (li == 0) {
        fill_polygon(poly, resolution, face_mask);
      } else {
        loop_mask.assign(out.mask.size(), 0);
        fill_polygon(poly, resolution, loop_mask);
        for (size_t i = 0; i < face_mask.size(); ++i)
          face_mask[i] = static_cast<uint8_t>(face_mask[i] & ~loop_mask[i] & 1);
      }
    }
    for (size_t i = 0; i < out.mask.size(); ++i) out.mask[i] |= face_mask[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Extrusion and assembly
// ---------------------------------------------------------------------------

VoxelSolid extrude(const Region2D& region, const Extrusion& ext,
                   int resolution) {
  VoxelSolid out;
  out.resolution = resolution;
  out.occ.assign(static_cast<size_t>(resolution) * resolution * resolution, 0);

  const double z_lo = std::min(ext.bottom(), ext.top());
  const double z_hi = std::max(ext.bottom(), ext.top());
  if (z_hi - z_lo <= 0.0 || region.empty()) return out;  // all-false

  const Eigen::Matrix3d rot = ext.rotation_matrix();
  const Eigen::Matrix3d inv = rot.transpose();  // orthonormal by contract
  const Eigen::Vector3d t = ext.translation_world();
  const Eigen::Vector2d c = ext.scale_center_uv();
  const double s = ext.scale_factor();
  const int rr = region.resolution;

  size_t idx = 0;
  for (int z = 0; z < resolution; ++z) {
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x, ++idx) {
        const Eigen::Vector3d world = out.voxel_center(x, y, z);
        const Eigen::Vector3d local = inv * (world - t);
        if (local.z() < z_lo || local.z() > z_hi) continue;
        // sketch plane: world xy in [-1,1] maps back to uv in [0,1)
        const double u_s = (local.x() + 1.0) * 0.5;
        const double v_s = (local.y() + 1.0) * 0.5;
        // undo the profile scale about the scale center
        const double u = c.x() + (u_s - c.x()) / s;
        const double v = c.y() + (v_s - c.y()) / s;
        if (u < 0.0 || u >= 1.0 || v < 0.0 || v >= 1.0) continue;
        const int px = std::min(static_cast<int>(u * rr), rr - 1);
        const int py = std::min(static_cast<int>(v * rr), rr - 1);
        out.occ[idx] = region.mask[static_cast<size_t>(py) * rr + px];
      }
    }
  }
  return out;
}

AssembleResult assemble(const CadModel& model, int resolution) {
  AssembleResult result;
  result.solid.resolution = resolution;
  result.solid.occ.assign(
      static_cast<size_t>(resolution) * resolution * resolution, 0);

  result.report = validate(model);
  if (!result.report.is_valid()) return result;

  if (model.pairs.front().extrusion.op != BooleanOp::Add) {
    result.report.add(IssueCode::FirstOpNotAdd, Severity::Error, "pair 0",
                      "model must start by adding material");
    return result;
  }

  for (size_t pi = 0; pi < model.pairs.size(); ++pi) {
    const CadPair& pair = model.pairs[pi];
    Region2D region;
    try {
      region = rasterize_sketch(pair.sketch, kSketchRes);
    } catch (const RenderError& e) {
      result.report.add(e.code, Severity::Error,
                        "pair " + std::to_string(pi), e.what());
      return result;
    }
    const VoxelSolid part = extrude(region, pair.extrusion, resolution);
    if (part.empty())
      result.report.add(IssueCode::EmptySolid, Severity::Warning,
                        "pair " + std::to_string(pi),
                        "extrusion produced no material");
    switch (pair.extrusion.op) {
      case BooleanOp::Add:
        result.solid = voxel_union(result.solid, part);
        break;
      case BooleanOp::Cut:
        result.solid = voxel_difference(result.solid, part);
        break;
      case BooleanOp::Intersect:
        result.solid = voxel_intersection(result.solid, part);
        break;
    }
  }

  if (result.solid.empty())
    result.report.add(IssueCode::EmptySolid, Severity::Error, "",
                      "assembled model is empty");
  return result;
}

ValidationReport is_renderable(const CadModel& model) {
  return assemble(model, kProbeRes).report;
}

// ---------------------------------------------------------------------------
// Point sampling
// ---------------------------------------------------------------------------

PointCloud sample_points(const VoxelSolid& solid, int n, uint64_t seed,
                         bool normalize) {
  if (n <= 0) throw std::invalid_argument("sample_points: n must be positive");
  const int r = solid.resolution;
  std::vector<std::array<int, 3>> surface;
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        if (!solid.at(x, y, z)) continue;
        const bool exposed =
            x == 0 || !solid.at(x - 1, y, z) || x == r - 1 ||
            !solid.at(x + 1, y, z) || y == 0 || !solid.at(x, y - 1, z) ||
            y == r - 1 || !solid.at(x, y + 1, z) || z == 0 ||
            !solid.at(x, y, z - 1) || z == r - 1 || !solid.at(x, y, z + 1);
        if (exposed) surface.push_back({x, y, z});
      }
  if (surface.empty()) throw EmptySolidError("no surface voxels to sample");

  Rng rng(seed);
  std::vector<size_t> picks;
  picks.reserve(n);
  if (static_cast<size_t>(n) <= surface.size()) {
    // partial Fisher-Yates: n distinct surface voxels
    std::vector<size_t> order(surface.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int i = 0; i < n; ++i) {
      const size_t j =
          i + static_cast<size_t>(rng.uniform() * (order.size() - i));
      std::swap(order[i], order[j]);
      picks.push_back(order[i]);
    }
  } else {
    for (int i = 0; i < n; ++i)
      picks.push_back(static_cast<size_t>(rng.uniform() * surface.size()));
  }

  PointCloud cloud(n, 3);
  const double vs = solid.voxel_size();
  for (int i = 0; i < n; ++i) {
    const auto& v = surface[picks[i]];
    const Eigen::Vector3d center =
        solid.voxel_center(v[0], v[1], v[2]);
    cloud.row(i) = center + Eigen::Vector3d(rng.uniform(-0.5, 0.5) * vs,
                                            rng.uniform(-0.5, 0.5) * vs,
                                            rng.uniform(-0.5, 0.5) * vs);
  }

  if (normalize) {
    const Eigen::RowVector3d mean = cloud.colwise().mean();
    cloud.rowwise() -= mean;
    const double scale = cloud.rowwise().norm().maxCoeff();
    if (scale > 0.0) cloud /= scale;
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

void write_xyz(const std::filesystem::path& p, const PointCloud& cloud) {
  std::string out;
  char line[96];
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    std::snprintf(line, sizeof line, "%.9f %.9f %.9f\n", cloud(i, 0),
                  cloud(i, 1), cloud(i, 2));
    out += line;
  }
  write_file(p, out);
}

namespace {

constexpr char kVoxelMagic[4] = {'S', 'V', 'R', 'L'};

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t read_u32(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
         (static_cast<uint32_t>(b[at + 2]) << 16) |
         (static_cast<uint32_t>(b[at + 3]) << 24);
}

}  // namespace

std::vector<uint8_t> encode_voxels_rle(const VoxelSolid& solid) {
  std::vector<uint32_t> runs;
  uint8_t current = 0;  // runs alternate starting with empty
  uint32_t length = 0;
  for (uint8_t v : solid.occ) {
    const uint8_t bit = v != 0;
    if (bit == current) {
      ++length;
    } else {
      runs.push_back(length);
      current = bit;
      length = 1;
    }
  }
  runs.push_back(length);

  std::vector<uint8_t> out;
  out.insert(out.end(), kVoxelMagic, kVoxelMagic + 4);
  push_u32(out, static_cast<uint32_t>(solid.resolution));
  push_u32(out, static_cast<uint32_t>(runs.size()));
  push_u32(out, 0);  // reserved
  for (uint32_t r : runs) push_u32(out, r);
  return out;
}

VoxelSolid decode_voxels_rle(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kVoxelMagic, 4) != 0)
    throw IoError("not a voxel RLE blob");
  VoxelSolid out;
  out.resolution = static_cast<int>(read_u32(bytes, 4));
  const uint32_t count = read_u32(bytes, 8);
  if (bytes.size() != 16 + static_cast<size_t>(count) * 4)
    throw IoError("voxel RLE blob has wrong length");
  const size_t total = static_cast<size_t>(out.resolution) * out.resolution *
                       out.resolution;
  out.occ.reserve(total);
  uint8_t current = 0;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = read_u32(bytes, 16 + i * 4);
    out.occ.insert(out.occ.end(), len, current);
    current ^= 1;
  }
  if (out.occ.size() != total) throw IoError("voxel RLE runs do not fill grid");
  return out;
}

void write_voxels_rle(const std::filesystem::path& p, const VoxelSolid& solid) {
  const std::vector<uint8_t> bytes = encode_voxels_rle(solid);
  write_file(p, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                 bytes.size()));
}

VoxelSolid read_voxels_rle(const std::filesystem::path& p) {
  const std::string blob = slurp_file(p);
  return decode_voxels_rle(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(blob.data()), blob.size()));
}

std::vector<uint8_t> render_snapshot_pgm(const VoxelSolid& solid) {
  const int r = solid.resolution;
  const int w = 3 * r, h = r;
  std::vector<uint8_t> img(static_cast<size_t>(w) * h, 0);
  // view along z (xy), along y (xz), along x (zy); rows flipped so the
  // second image axis points up in the picture
  for (int a = 0; a < r; ++a) {
    for (int b = 0; b < r; ++b) {
      bool xy = false, xz = false, zy = false;
      for (int c = 0; c < r; ++c) {
        xy |= solid.at(a, b, c);
        xz |= solid.at(a, c, b);
        zy |= solid.at(c, a, b);
      }
      const int row = h - 1 - b;
      if (xy) img[static_cast<size_t>(row) * w + a] = 255;
      if (xz) img[static_cast<size_t>(row) * w + r + a] = 255;
      if (zy) img[static_cast<size_t>(row) * w + 2 * r + a] = 255;
    }
  }
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) +
                       "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.begin(), img.end());
  return out;
}

void write_snapshot_pgm(const std::filesystem::path& p,
                        const VoxelSolid& solid) {
  const std::vector<uint8_t> bytes = render_snapshot_pgm(solid);
  write_file(p, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                 bytes.size()));
}

}  // namespace secad
