#include "secad/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "secad/kdtree.hpp"
#include "secad/rng.hpp"

namespace secad {

namespace {

double f1_from_counts(int predicted, int reference) {
  if (predicted == 0 && reference == 0) return 1.0;
  if (predicted == 0 || reference == 0) return 0.0;
  const int tp = std::min(predicted, reference);
  const double precision = static_cast<double>(tp) / predicted;
  const double recall = static_cast<double>(tp) / reference;
  return 2.0 * precision * recall / (precision + recall);
}

// Runs fn(i) for i in [0,n) across a pool, joining before return. Results
// must be written to per-index slots so the outcome is thread-count
// independent.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

}  // namespace

PrimitiveCounts count_primitives(const CadModel& model) {
  PrimitiveCounts c;
  for (const CadPair& pair : model.pairs) {
    c.ops[static_cast<int>(pair.extrusion.op)] += 1;
    for (const Face& face : pair.sketch.faces)
      for (const Loop& loop : face.loops)
        for (const Curve& curve : loop.curves) switch (curve.kind) {
            case CurveKind::Line: c.lines += 1; break;
            case CurveKind::Arc: c.arcs += 1; break;
            case CurveKind::Circle: c.circles += 1; break;
          }
  }
  return c;
}

double f1_sketch(const CadModel& predicted, const CadModel& reference) {
  const PrimitiveCounts p = count_primitives(predicted);
  const PrimitiveCounts r = count_primitives(reference);
  return (f1_from_counts(p.lines, r.lines) + f1_from_counts(p.arcs, r.arcs) +
          f1_from_counts(p.circles, r.circles)) /
         3.0;
}

double f1_extrusion(const CadModel& predicted, const CadModel& reference) {
  const PrimitiveCounts p = count_primitives(predicted);
  const PrimitiveCounts r = count_primitives(reference);
  double sum = 0.0;
  for (int op = 0; op < 3; ++op) sum += f1_from_counts(p.ops[op], r.ops[op]);
  return sum / 3.0;
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.rows() == 0 || b.rows() == 0)
    throw std::invalid_argument("chamfer_distance: empty point cloud");
  const KdTree3<double> tree_a(a);
  const KdTree3<double> tree_b(b);
  double ab = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    ab += tree_b.nearest_sq(a.row(i).transpose());
  double ba = 0.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    ba += tree_a.nearest_sq(b.row(i).transpose());
  return ab / static_cast<double>(a.rows()) + ba / static_cast<double>(b.rows());
}

Eigen::MatrixXd chamfer_matrix(const std::vector<PointCloud>& generated,
                               const std::vector<PointCloud>& reference,
                               int threads) {
  const int rows = static_cast<int>(generated.size());
  const int cols = static_cast<int>(reference.size());
  Eigen::MatrixXd cd(rows, cols);
  if (rows == 0 || cols == 0) return cd;

  std::vector<KdTree3<double>> gen_trees, ref_trees;
  gen_trees.reserve(generated.size());
  ref_trees.reserve(reference.size());
  for (const PointCloud& c : generated) gen_trees.emplace_back(c);
  for (const PointCloud& c : reference) ref_trees.emplace_back(c);

  parallel_for(rows * cols, threads, [&](int flat) {
    const int i = flat / cols;
    const int j = flat % cols;
    const PointCloud& a = generated[static_cast<size_t>(i)];
    const PointCloud& b = reference[static_cast<size_t>(j)];
    double ab = 0.0;
    for (Eigen::Index k = 0; k < a.rows(); ++k)
      ab += ref_trees[static_cast<size_t>(j)].nearest_sq(a.row(k).transpose());
    double ba = 0.0;
    for (Eigen::Index k = 0; k < b.rows(); ++k)
      ba += gen_trees[static_cast<size_t>(i)].nearest_sq(b.row(k).transpose());
    cd(i, j) = ab / static_cast<double>(a.rows()) +
               ba / static_cast<double>(b.rows());
  });
  return cd;
}

double coverage_pct(const Eigen::MatrixXd& cd) {
  if (cd.rows() == 0 || cd.cols() == 0) return 0.0;
  std::vector<char> hit(static_cast<size_t>(cd.cols()), 0);
  for (Eigen::Index i = 0; i < cd.rows(); ++i) {
    Eigen::Index best = 0;
    cd.row(i).minCoeff(&best);
    hit[static_cast<size_t>(best)] = 1;
  }
  int covered = 0;
  for (char h : hit) covered += h;
  return 100.0 * covered / static_cast<double>(cd.cols());
}

double minimum_matching_distance(const Eigen::MatrixXd& cd) {
  if (cd.rows() == 0 || cd.cols() == 0)
    return std::numeric_limits<double>::quiet_NaN();
  return cd.colwise().minCoeff().mean();
}

namespace {

std::vector<double> occupancy_histogram(const std::vector<PointCloud>& clouds,
                                        int grid) {
  std::vector<double> counts(static_cast<size_t>(grid) * grid * grid, 0.0);
  std::vector<char> seen(counts.size());
  for (const PointCloud& cloud : clouds) {
    std::fill(seen.begin(), seen.end(), 0);
    for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
      size_t idx = 0;
      for (int axis = 0; axis < 3; ++axis) {
        int bin = static_cast<int>((cloud(i, axis) + 1.0) * 0.5 * grid);
        bin = std::clamp(bin, 0, grid - 1);
        idx = idx * static_cast<size_t>(grid) + static_cast<size_t>(bin);
      }
      seen[idx] = 1;
    }
    for (size_t b = 0; b < counts.size(); ++b) counts[b] += seen[b];
  }
  double total = 0.0;
  for (double c : counts) total += c;
  if (total > 0.0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace

double jsd_occupancy(const std::vector<PointCloud>& generated,
                     const std::vector<PointCloud>& reference, int grid) {
  if (generated.empty() || reference.empty()) return 1.0;
  const std::vector<double> p = occupancy_histogram(generated, grid);
  const std::vector<double> q = occupancy_histogram(reference, grid);
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) acc += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) acc += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return acc;
}

double invalidity_ratio_pct(const std::vector<std::string>& sequences) {
  if (sequences.empty()) return 0.0;
  int invalid = 0;
  for (const std::string& seq : sequences) {
    const ParseResult parsed = parse_sequence(seq);
    if (!parsed.ok() || !is_renderable(*parsed.model).is_valid()) invalid += 1;
  }
  return 100.0 * invalid / static_cast<double>(sequences.size());
}

EvalReport evaluate_corpus(const std::vector<std::string>& generated,
                           const std::vector<std::string>& reference,
                           const EvalOptions& options) {
  const int n = static_cast<int>(std::min(generated.size(), reference.size()));

  struct Slot {
    bool ref_ok = false;
    bool gen_parses = false;
    bool gen_valid = false;  // parses, validates, and renders
    double f1s = 0.0, f1e = 0.0, cd = 0.0;
    std::optional<PointCloud> gen_cloud, ref_cloud;
  };
  std::vector<Slot> slots(static_cast<size_t>(n));

  parallel_for(n, options.threads, [&](int i) {
    Slot& slot = slots[static_cast<size_t>(i)];
    const ParseResult ref = parse_sequence(reference[static_cast<size_t>(i)]);
    if (!ref.ok()) return;
    const AssembleResult ref_solid = assemble(*ref.model, options.resolution);
    if (!ref_solid.ok()) return;
    slot.ref_ok = true;
    slot.ref_cloud = sample_points(ref_solid.solid, options.points,
                                   Rng::mix(options.seed, 2ull * i));

    const ParseResult gen = parse_sequence(generated[static_cast<size_t>(i)]);
    if (!gen.ok()) return;
    slot.gen_parses = true;
    slot.f1s = f1_sketch(*gen.model, *ref.model);
    slot.f1e = f1_extrusion(*gen.model, *ref.model);

    if (!validate(*gen.model).is_valid()) return;
    // An exact model match has distance zero by definition; reusing the
    // reference cloud keeps sampling noise out of self-evaluation.
    if (*gen.model == *ref.model) {
      slot.gen_valid = true;
      slot.gen_cloud = slot.ref_cloud;
      slot.cd = 0.0;
      return;
    }
    const AssembleResult gen_solid = assemble(*gen.model, options.resolution);
    if (!gen_solid.ok()) return;
    slot.gen_valid = true;
    slot.gen_cloud = sample_points(gen_solid.solid, options.points,
                                   Rng::mix(options.seed, 2ull * i + 1));
    slot.cd = chamfer_distance(*slot.gen_cloud, *slot.ref_cloud);
  });

  EvalReport report;
  double f1s_sum = 0.0, f1e_sum = 0.0, cd_sum = 0.0;
  int parsed = 0;
  std::vector<PointCloud> gen_clouds, ref_clouds;
  for (const Slot& slot : slots) {
    if (!slot.ref_ok) continue;
    report.total += 1;
    ref_clouds.push_back(*slot.ref_cloud);
    if (slot.gen_parses) {
      parsed += 1;
      f1s_sum += slot.f1s;
      f1e_sum += slot.f1e;
    }
    if (slot.gen_valid) {
      report.compared += 1;
      cd_sum += slot.cd;
      gen_clouds.push_back(*slot.gen_cloud);
    } else {
      report.invalid += 1;
    }
  }

  if (report.total > 0)
    report.invalidity_ratio = 100.0 * report.invalid / report.total;
  if (parsed > 0) {
    report.f1_sketch = f1s_sum / parsed;
    report.f1_extrusion = f1e_sum / parsed;
  }
  if (report.compared > 0) {
    report.chamfer_mean = cd_sum / report.compared;
    report.chamfer_mean_x1000 = report.chamfer_mean * 1e3;
    const Eigen::MatrixXd cd =
        chamfer_matrix(gen_clouds, ref_clouds, options.threads);
    report.coverage = coverage_pct(cd);
    report.mmd = minimum_matching_distance(cd);
    report.mmd_x1000 = report.mmd * 1e3;
    report.jsd = jsd_occupancy(gen_clouds, ref_clouds);
  } else {
    report.jsd = 1.0;
  }
  return report;
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["total"] = r.total;
  j["invalid"] = r.invalid;
  j["invalidity_ratio_pct"] = r.invalidity_ratio;
  j["f1_sketch"] = r.f1_sketch;
  j["f1_extrusion"] = r.f1_extrusion;
  j["chamfer_mean"] = r.chamfer_mean;
  j["chamfer_mean_x1000"] = r.chamfer_mean_x1000;
  j["coverage_pct"] = r.coverage;
  j["mmd"] = r.mmd;
  j["mmd_x1000"] = r.mmd_x1000;
  j["jsd"] = r.jsd;
  j["compared"] = r.compared;
  return j.dump(2);
}

}  // namespace secad
