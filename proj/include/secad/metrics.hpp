// Geometry and sequence metrics for comparing generated models to references.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "secad/render.hpp"
#include "secad/sem.hpp"

namespace secad {

// --- primitive F1 -----------------------------------------------------------

struct PrimitiveCounts {
  int lines = 0, arcs = 0, circles = 0;
  std::array<int, 3> ops{};  // indexed by BooleanOp
};

PrimitiveCounts count_primitives(const CadModel& model);

// Macro F1 over curve kinds {line, arc, circle}. A kind absent from both
// models scores 1, absent from exactly one scores 0.
double f1_sketch(const CadModel& predicted, const CadModel& reference);

// Macro F1 over boolean ops {add, cut, intersect}, same conventions.
double f1_extrusion(const CadModel& predicted, const CadModel& reference);

// --- point-cloud metrics -----------------------------------------------------

// Symmetric Chamfer distance: mean-of-min squared distances, both directions,
// summed. Throws std::invalid_argument on an empty cloud.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// Pairwise Chamfer matrix, generated (rows) x reference (cols).
Eigen::MatrixXd chamfer_matrix(const std::vector<PointCloud>& generated,
                               const std::vector<PointCloud>& reference,
                               int threads = 0);

// Percentage of reference clouds that are the Chamfer-nearest neighbour of at
// least one generated cloud.
double coverage_pct(const Eigen::MatrixXd& cd);

// Mean over reference clouds of the minimum Chamfer distance to any generated
// cloud.
double minimum_matching_distance(const Eigen::MatrixXd& cd);

// Jensen-Shannon divergence (base 2) between occupancy distributions of the
// two cloud sets on a grid^3 lattice over [-1,1]^3.
double jsd_occupancy(const std::vector<PointCloud>& generated,
                     const std::vector<PointCloud>& reference, int grid = 28);

// --- corpus evaluation -------------------------------------------------------

struct EvalOptions {
  int points = 1024;        // samples per cloud
  int resolution = 64;      // assembly resolution
  std::uint64_t seed = 17;  // base sampling seed
  int threads = 0;          // 0 = hardware concurrency
};

struct EvalReport {
  int total = 0;            // generated sequences considered
  int invalid = 0;          // failed parse, validation, or rendering
  double invalidity_ratio = 0.0;  // percent
  double f1_sketch = 0.0;         // mean over parseable pairs
  double f1_extrusion = 0.0;
  double chamfer_mean = 0.0;          // mean paired CD, raw
  double chamfer_mean_x1000 = 0.0;    // same, scaled by 1e3
  double coverage = 0.0;              // percent
  double mmd = 0.0;                   // raw
  double mmd_x1000 = 0.0;
  double jsd = 0.0;
  int compared = 0;  // pairs that entered the geometric metrics
};

// Positional comparison of generated token sequences against reference ones.
// Invalid generations count toward the invalidity ratio and are excluded from
// the geometric metrics; an invalid reference drops the pair entirely.
EvalReport evaluate_corpus(const std::vector<std::string>& generated,
                           const std::vector<std::string>& reference,
                           const EvalOptions& options = {});

// Percentage of sequences that fail parsing, validation, or the render probe.
double invalidity_ratio_pct(const std::vector<std::string>& sequences);

std::string eval_report_to_json(const EvalReport& report);

}  // namespace secad
