#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "secad/quant.hpp"

namespace secad {

// ---------------------------------------------------------------------------
// Sketch-extrude domain model. Sketches are faces of loops of quantized
// curves; each sketch is paired with an 18-field extrusion record; a model is
// an ordered list of such pairs combined with boolean ops.
// ---------------------------------------------------------------------------

struct Point2D {
  int x = 0;
  int y = 0;
  bool operator==(const Point2D&) const = default;
};

enum class CurveKind { Line, Arc, Circle };

// Point counts are fixed per kind: a curve's end point is implicit (the next
// curve's first point; the loop's last curve closes to the first).
constexpr int curve_point_count(CurveKind k) {
  switch (k) {
    case CurveKind::Line: return 1;
    case CurveKind::Arc: return 2;
    case CurveKind::Circle: return 4;
  }
  return 0;
}

struct Curve {
  CurveKind kind = CurveKind::Line;
  std::vector<Point2D> points;
  bool operator==(const Curve&) const = default;
};

inline Curve make_line(Point2D p) { return {CurveKind::Line, {p}}; }
inline Curve make_arc(Point2D start, Point2D mid) {
  return {CurveKind::Arc, {start, mid}};
}
inline Curve make_circle(Point2D a, Point2D b, Point2D c, Point2D d) {
  return {CurveKind::Circle, {a, b, c, d}};
}

struct Loop {
  std::vector<Curve> curves;
  bool operator==(const Loop&) const = default;
};

// First loop is the outer boundary; later loops are holes.
struct Face {
  std::vector<Loop> loops;
  bool operator==(const Face&) const = default;
};

struct Sketch {
  std::vector<Face> faces;
  bool operator==(const Sketch&) const = default;
};

enum class BooleanOp { Add, Cut, Intersect };

std::string_view boolean_op_name(BooleanOp op);
std::optional<BooleanOp> boolean_op_from_name(std::string_view name);

// 18-field record: op word, extent_top, extent_bottom, translation xyz,
// row-major 3x3 rotation, uniform scale, 2D scale center. All numeric fields
// are stored quantized (see quant.hpp for the dequantization maps).
struct Extrusion {
  BooleanOp op = BooleanOp::Add;
  int extent_top = 0;
  int extent_bottom = 0;
  std::array<int, 3> translation{};
  std::array<int, 9> rotation{};
  int scale = 0;
  std::array<int, 2> scale_center{};

  double top() const { return dequant_signed(extent_top); }
  double bottom() const { return dequant_signed(extent_bottom); }
  Eigen::Vector3d translation_world() const {
    return {dequant_signed(translation[0]), dequant_signed(translation[1]),
            dequant_signed(translation[2])};
  }
  Eigen::Matrix3d rotation_matrix() const {
    Eigen::Matrix3d r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = dequant_signed(rotation[i * 3 + j]);
    return r;
  }
  double scale_factor() const { return dequant_scale(scale); }
  Eigen::Vector2d scale_center_uv() const {
    return {dequant_coord(scale_center[0]), dequant_coord(scale_center[1])};
  }

  bool operator==(const Extrusion&) const = default;
};

// Identity placement: zero extents/translation, identity rotation, scale 1.
Extrusion identity_extrusion();

struct CadPair {
  Sketch sketch;
  Extrusion extrusion;
  bool operator==(const CadPair&) const = default;
};

struct CadModel {
  std::vector<CadPair> pairs;
  bool operator==(const CadModel&) const = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Severity { Warning, Error };

enum class IssueCode {
  UnknownToken,
  TruncatedSequence,
  BadArity,
  BadExtrusionRecord,
  EmptyLoop,
  EmptyFace,
  EmptySketch,
  EmptyModel,
  CoordOutOfRange,
  CircleNotAlone,
  RotationNotOrthonormal,
  DegenerateLoop,
  DegenerateArc,
  CircleFitFailure,
  FirstOpNotAdd,
  EmptySolid,
  SkipOverrun,
  UnknownCommand,
  BadArrayLength,
};

std::string_view issue_code_name(IssueCode code);

struct Issue {
  IssueCode code;
  Severity severity = Severity::Error;
  std::string location;  // e.g. "pair 0 / face 1 / loop 2"
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> issues;

  // Valid iff no error-severity issue; warnings don't invalidate.
  bool is_valid() const {
    for (const Issue& i : issues)
      if (i.severity == Severity::Error) return false;
    return true;
  }
  bool has(IssueCode code) const {
    for (const Issue& i : issues)
      if (i.code == code) return true;
    return false;
  }
  void add(IssueCode code, Severity sev, std::string location,
           std::string message) {
    issues.push_back({code, sev, std::move(location), std::move(message)});
  }
  void merge(const ValidationReport& other) {
    issues.insert(issues.end(), other.issues.begin(), other.issues.end());
  }
  std::string to_string() const;
};

// Serializer precondition failures (structurally broken models).
struct InvariantViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Structural + geometric validation: arities, loop closure feasibility,
// rotation orthonormality (1e-3 after dequantization), circle-fit residual
// (2 grid units), zero-area loops.
ValidationReport validate(const CadModel& model);

inline constexpr double kOrthonormalTol = 1e-3;
inline constexpr double kCircleFitTol = 2.0;       // grid units
inline constexpr double kArcRadiusLimit = 1e4;     // grid units; beyond = line

// Least-squares-free circle fit: center = centroid, radius = mean distance.
struct CircleFit {
  Eigen::Vector2d center{0, 0};
  double radius = 0.0;
  double residual = 0.0;  // max |dist - radius| over the points, grid units
};
CircleFit fit_circle(std::span<const Point2D> pts);

// Tessellate a loop into a closed polygon in grid units. Curve end points are
// implicit: each curve ends where the next one starts, the last closes to the
// first. Arcs pass through their mid point; a circumradius beyond
// kArcRadiusLimit degrades the arc to a straight segment. Geometry issues
// (degenerate arc chords, circle-fit failures) are appended to `report` when
// given; on error an empty polygon is returned.
std::vector<Eigen::Vector2d> tessellate_loop(const Loop& loop,
                                             ValidationReport* report = nullptr,
                                             const std::string& location = {});

// Signed shoelace area of a closed polygon (grid units squared).
double polygon_area(std::span<const Eigen::Vector2d> poly);

// ---------------------------------------------------------------------------
// Token codec
// ---------------------------------------------------------------------------

struct ParseResult {
  std::optional<CadModel> model;
  ValidationReport report;
  bool ok() const { return model.has_value() && report.is_valid(); }
};

// Whitespace-splitting tokenizer shared by the parser and the vocabulary.
std::vector<std::string> tokenize(std::string_view text);

// Parse a token sequence into a model and validate it. Parse failures and
// validation failures land in the same report (both count toward invalidity).
ParseResult parse_sequence(std::string_view text);

// Deterministic canonical serialization (single-space join). Throws
// InvariantViolation if the model breaks a type invariant.
std::string serialize(const CadModel& model);

// ---------------------------------------------------------------------------
// Command-array decoding
// ---------------------------------------------------------------------------

// Flat command/coordinate/extrusion arrays. Commands drive a skip-count
// grammar over se_xy (footprints 5/3/2/1/1/1 for commands 5/4/3/2/1/0); each
// command 0 closes a sketch and consumes one 18-field record from se_ext.
struct CommandArrays {
  std::vector<int> se_cmd;
  std::vector<Point2D> se_xy;
  std::vector<int> se_ext;
};

struct DecodeResult {
  std::optional<CadModel> model;
  ValidationReport report;
  bool ok() const { return model.has_value() && report.is_valid(); }
};

inline constexpr int kExtrusionRecordLen = 18;

// pad_offset is subtracted from every se_xy coordinate and from the 17
// numeric extrusion fields (the boolean op code is never padded).
DecodeResult decode_command_arrays(const CommandArrays& arrays,
                                   int pad_offset = 0);

}  // namespace secad
