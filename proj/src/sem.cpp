#include "secad/sem.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace secad {

namespace {

constexpr std::string_view kCurveEnd = "<curve_end>";
constexpr std::string_view kLoopEnd = "<loop_end>";
constexpr std::string_view kFaceEnd = "<face_end>";
constexpr std::string_view kSketchEnd = "<sketch_end>";

std::string_view curve_kind_name(CurveKind k) {
  switch (k) {
    case CurveKind::Line: return "line";
    case CurveKind::Arc: return "arc";
    case CurveKind::Circle: return "circle";
  }
  return "?";
}

std::optional<CurveKind> curve_kind_from_name(std::string_view name) {
  if (name == "line") return CurveKind::Line;
  if (name == "arc") return CurveKind::Arc;
  if (name == "circle") return CurveKind::Circle;
  return std::nullopt;
}

// Coordinate tokens are bare integers on the grid; anything else is unknown.
std::optional<int> parse_coord_token(std::string_view tok) {
  if (tok.empty() || tok.size() > 2) return std::nullopt;
  int v = 0;
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + (c - '0');
  }
  if (v >= kGrid) return std::nullopt;
  return v;
}

std::string pair_loc(size_t pair) { return "pair " + std::to_string(pair); }

std::string loop_loc(size_t pair, size_t face, size_t loop) {
  return "pair " + std::to_string(pair) + " / face " + std::to_string(face) +
         " / loop " + std::to_string(loop);
}

}  // namespace

std::string_view boolean_op_name(BooleanOp op) {
  switch (op) {
    case BooleanOp::Add: return "add";
    case BooleanOp::Cut: return "cut";
    case BooleanOp::Intersect: return "intersect";
  }
  return "?";
}

std::optional<BooleanOp> boolean_op_from_name(std::string_view name) {
  if (name == "add") return BooleanOp::Add;
  if (name == "cut") return BooleanOp::Cut;
  if (name == "intersect") return BooleanOp::Intersect;
  return std::nullopt;
}

Extrusion identity_extrusion() {
  Extrusion e;
  e.op = BooleanOp::Add;
  e.extent_top = quant_signed(0.0);
  e.extent_bottom = quant_signed(0.0);
  e.translation = {quant_signed(0.0), quant_signed(0.0), quant_signed(0.0)};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      e.rotation[i * 3 + j] = quant_signed(i == j ? 1.0 : 0.0);
  e.scale = quant_scale(1.0);
  e.scale_center = {kGrid / 2, kGrid / 2};
  return e;
}

std::string_view issue_code_name(IssueCode code) {
  switch (code) {
    case IssueCode::UnknownToken: return "UnknownToken";
    case IssueCode::TruncatedSequence: return "TruncatedSequence";
    case IssueCode::BadArity: return "BadArity";
    case IssueCode::BadExtrusionRecord: return "BadExtrusionRecord";
    case IssueCode::EmptyLoop: return "EmptyLoop";
    case IssueCode::EmptyFace: return "EmptyFace";
    case IssueCode::EmptySketch: return "EmptySketch";
    case IssueCode::EmptyModel: return "EmptyModel";
    case IssueCode::CoordOutOfRange: return "CoordOutOfRange";
    case IssueCode::CircleNotAlone: return "CircleNotAlone";
    case IssueCode::RotationNotOrthonormal: return "RotationNotOrthonormal";
    case IssueCode::DegenerateLoop: return "DegenerateLoop";
    case IssueCode::DegenerateArc: return "DegenerateArc";
    case IssueCode::CircleFitFailure: return "CircleFitFailure";
    case IssueCode::FirstOpNotAdd: return "FirstOpNotAdd";
    case IssueCode::EmptySolid: return "EmptySolid";
    case IssueCode::SkipOverrun: return "SkipOverrun";
    case IssueCode::UnknownCommand: return "UnknownCommand";
    case IssueCode::BadArrayLength: return "BadArrayLength";
  }
  return "?";
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const Issue& i : issues) {
    out << (i.severity == Severity::Error ? "error" : "warning") << ": "
        << issue_code_name(i.code);
    if (!i.location.empty()) out << " at " << i.location;
    if (!i.message.empty()) out << ": " << i.message;
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])))
      ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser: a single pass over the token stream, building pairs as it goes.
// Errors are recorded with positions; the model is only returned when the
// whole stream parses.
// ---------------------------------------------------------------------------

ParseResult parse_sequence(std::string_view text) {
  ParseResult result;
  const std::vector<std::string> toks = tokenize(text);

  CadModel model;
  Sketch sketch;
  Face face;
  Loop loop;
  size_t pos = 0;

  auto loc = [&](size_t at) { return "token " + std::to_string(at); };
  auto fail = [&](IssueCode code, size_t at, std::string msg) {
    result.report.add(code, Severity::Error, loc(at), std::move(msg));
  };

  while (pos < toks.size()) {
    const std::string& tok = toks[pos];

    if (auto kind = curve_kind_from_name(tok)) {
      const int want = curve_point_count(*kind);
      Curve curve;
      curve.kind = *kind;
      ++pos;
      for (int p = 0; p < want; ++p) {
        for (int c = 0; c < 2; ++c) {
          if (pos >= toks.size()) {
            fail(IssueCode::TruncatedSequence, pos,
                 "sequence ends inside a " + std::string(tok) + " curve");
            return result;
          }
          auto v = parse_coord_token(toks[pos]);
          if (!v) {
            // A structural/keyword token here means the coordinate list was
            // cut short; a garbage token is simply unknown.
            const bool known =
                toks[pos] == kCurveEnd || toks[pos] == kLoopEnd ||
                toks[pos] == kFaceEnd || toks[pos] == kSketchEnd ||
                curve_kind_from_name(toks[pos]).has_value() ||
                boolean_op_from_name(toks[pos]).has_value();
            fail(known ? IssueCode::BadArity : IssueCode::UnknownToken, pos,
                 known ? std::string(tok) + " needs " + std::to_string(want) +
                             " points, got " + std::to_string(p)
                       : "unexpected token '" + toks[pos] + "'");
            return result;
          }
          if (c == 0)
            curve.points.push_back({*v, 0});
          else
            curve.points.back().y = *v;
          ++pos;
        }
      }
      if (pos >= toks.size()) {
        fail(IssueCode::TruncatedSequence, pos,
             "sequence ends before <curve_end>");
        return result;
      }
      if (toks[pos] != kCurveEnd) {
        const bool coord = parse_coord_token(toks[pos]).has_value();
        fail(coord ? IssueCode::BadArity : IssueCode::UnknownToken, pos,
             coord ? std::string(tok) + " carries extra coordinates"
                   : "expected <curve_end>, got '" + toks[pos] + "'");
        return result;
      }
      ++pos;
      loop.curves.push_back(std::move(curve));
      continue;
    }

    if (tok == kLoopEnd) {
      if (loop.curves.empty()) {
        fail(IssueCode::EmptyLoop, pos, "<loop_end> with no curves");
        return result;
      }
      face.loops.push_back(std::move(loop));
      loop = Loop{};
      ++pos;
      continue;
    }

    if (tok == kFaceEnd) {
      if (!loop.curves.empty()) {
        fail(IssueCode::BadArity, pos, "<face_end> inside an open loop");
        return result;
      }
      if (face.loops.empty()) {
        fail(IssueCode::EmptyFace, pos, "<face_end> with no loops");
        return result;
      }
      sketch.faces.push_back(std::move(face));
      face = Face{};
      ++pos;
      continue;
    }

    if (tok == kSketchEnd) {
      if (!loop.curves.empty() || !face.loops.empty()) {
        fail(IssueCode::BadArity, pos, "<sketch_end> inside an open face");
        return result;
      }
      if (sketch.faces.empty()) {
        fail(IssueCode::EmptySketch, pos, "<sketch_end> with no faces");
        return result;
      }
      ++pos;

      // An extrusion record must follow: boolean word + 17 numeric tokens.
      if (pos >= toks.size()) {
        fail(IssueCode::TruncatedSequence, pos,
             "sketch has no extrusion record");
        return result;
      }
      auto op = boolean_op_from_name(toks[pos]);
      if (!op) {
        fail(IssueCode::BadExtrusionRecord, pos,
             "expected boolean op, got '" + toks[pos] + "'");
        return result;
      }
      ++pos;
      std::array<int, kExtrusionRecordLen - 1> fields{};
      for (int f = 0; f < kExtrusionRecordLen - 1; ++f) {
        if (pos >= toks.size()) {
          fail(IssueCode::BadExtrusionRecord, pos,
               "extrusion record has " + std::to_string(f + 1) +
                   " of 18 fields");
          return result;
        }
        auto v = parse_coord_token(toks[pos]);
        if (!v) {
          fail(IssueCode::BadExtrusionRecord, pos,
               "extrusion record has " + std::to_string(f + 1) +
                   " of 18 fields (hit '" + toks[pos] + "')");
          return result;
        }
        fields[f] = *v;
        ++pos;
      }

      Extrusion ext;
      ext.op = *op;
      ext.extent_top = fields[0];
      ext.extent_bottom = fields[1];
      ext.translation = {fields[2], fields[3], fields[4]};
      for (int i = 0; i < 9; ++i) ext.rotation[i] = fields[5 + i];
      ext.scale = fields[14];
      ext.scale_center = {fields[15], fields[16]};

      model.pairs.push_back({std::move(sketch), ext});
      sketch = Sketch{};
      continue;
    }

    if (boolean_op_from_name(tok)) {
      fail(IssueCode::BadExtrusionRecord, pos,
           "boolean op outside an extrusion record");
      return result;
    }
    if (parse_coord_token(tok)) {
      fail(IssueCode::BadArity, pos, "coordinate outside a curve");
      return result;
    }
    fail(IssueCode::UnknownToken, pos, "unknown token '" + tok + "'");
    return result;
  }

  if (!loop.curves.empty() || !face.loops.empty() || !sketch.faces.empty()) {
    fail(IssueCode::TruncatedSequence, pos, "sequence ends inside a sketch");
    return result;
  }
  if (model.pairs.empty()) {
    fail(IssueCode::EmptyModel, pos, "no sketch-extrusion pairs");
    return result;
  }

  result.report.merge(validate(model));
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Serializer
// ---------------------------------------------------------------------------

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw InvariantViolation(what);
}

void append_coord(std::string& out, int v) {
  require(v >= 0 && v < kGrid, "coordinate out of range: " + std::to_string(v));
  out += ' ';
  out += std::to_string(v);
}

}  // namespace

std::string serialize(const CadModel& model) {
  require(!model.pairs.empty(), "model has no pairs");
  std::string out;
  for (const CadPair& pair : model.pairs) {
    require(!pair.sketch.faces.empty(), "sketch has no faces");
    for (const Face& face : pair.sketch.faces) {
      require(!face.loops.empty(), "face has no loops");
      for (const Loop& loop : face.loops) {
        require(!loop.curves.empty(), "loop has no curves");
        for (const Curve& curve : loop.curves) {
          require(static_cast<int>(curve.points.size()) ==
                      curve_point_count(curve.kind),
                  "curve has wrong point count");
          if (!out.empty()) out += ' ';
          out += curve_kind_name(curve.kind);
          for (const Point2D& p : curve.points) {
            append_coord(out, p.x);
            append_coord(out, p.y);
          }
          out += ' ';
          out += kCurveEnd;
        }
        out += ' ';
        out += kLoopEnd;
      }
      out += ' ';
      out += kFaceEnd;
    }
    out += ' ';
    out += kSketchEnd;

    const Extrusion& e = pair.extrusion;
    out += ' ';
    out += boolean_op_name(e.op);
    append_coord(out, e.extent_top);
    append_coord(out, e.extent_bottom);
    for (int t : e.translation) append_coord(out, t);
    for (int r : e.rotation) append_coord(out, r);
    append_coord(out, e.scale);
    for (int o : e.scale_center) append_coord(out, o);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry helpers shared by validation and rasterization
// ---------------------------------------------------------------------------

CircleFit fit_circle(std::span<const Point2D> pts) {
  CircleFit fit;
  if (pts.empty()) return fit;
  Eigen::Vector2d c(0, 0);
  for (const Point2D& p : pts) c += Eigen::Vector2d(p.x, p.y);
  c /= static_cast<double>(pts.size());
  double r = 0.0;
  for (const Point2D& p : pts) r += (Eigen::Vector2d(p.x, p.y) - c).norm();
  r /= static_cast<double>(pts.size());
  double resid = 0.0;
  for (const Point2D& p : pts)
    resid = std::max(resid,
                     std::abs((Eigen::Vector2d(p.x, p.y) - c).norm() - r));
  fit.center = c;
  fit.radius = r;
  fit.residual = resid;
  return fit;
}

double polygon_area(std::span<const Eigen::Vector2d> poly) {
  double a = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

namespace {

constexpr int kArcSegments = 32;
constexpr int kCircleSegments = 64;

// Append points of the arc from `a` to `b` through `m` (excluding `b`; the
// next curve supplies it). Collinear or huge-radius arcs degrade to segments.
bool append_arc(std::vector<Eigen::Vector2d>& poly, Eigen::Vector2d a,
                Eigen::Vector2d m, Eigen::Vector2d b,
                ValidationReport* report, const std::string& location) {
  if ((b - a).norm() < 1e-12) {
    if (report)
      report->add(IssueCode::DegenerateArc, Severity::Error, location,
                  "arc chord has zero length");
    return false;
  }
  // Circumcenter from the perpendicular-bisector system.
  const double d = 2.0 * (a.x() * (m.y() - b.y()) + m.x() * (b.y() - a.y()) +
                          b.x() * (a.y() - m.y()));
  if (std::abs(d) < 1e-12) {
    poly.push_back(a);  // collinear: straight segment
    return true;
  }
  const double a2 = a.squaredNorm(), m2 = m.squaredNorm(), b2 = b.squaredNorm();
  Eigen::Vector2d c((a2 * (m.y() - b.y()) + m2 * (b.y() - a.y()) +
                     b2 * (a.y() - m.y())) / d,
                    (a2 * (b.x() - m.x()) + m2 * (a.x() - b.x()) +
                     b2 * (m.x() - a.x())) / d);
  const double radius = (a - c).norm();
  if (radius > kArcRadiusLimit) {
    poly.push_back(a);  // nearly straight: degrade to a segment
    return true;
  }
  const double ta = std::atan2(a.y() - c.y(), a.x() - c.x());
  double tm = std::atan2(m.y() - c.y(), m.x() - c.x());
  double tb = std::atan2(b.y() - c.y(), b.x() - c.x());
  // Walk counter-clockwise from a; flip to clockwise if m is not on the way.
  auto ccw = [&](double t) {
    double s = t - ta;
    while (s < 0) s += 2 * M_PI;
    return s;
  };
  const bool forward = ccw(tm) <= ccw(tb);
  const double sweep = forward ? ccw(tb) : ccw(tb) - 2 * M_PI;
  for (int i = 0; i < kArcSegments; ++i) {
    const double t = ta + sweep * i / kArcSegments;
    poly.emplace_back(c.x() + radius * std::cos(t),
                      c.y() + radius * std::sin(t));
  }
  return true;
}

}  // namespace

std::vector<Eigen::Vector2d> tessellate_loop(const Loop& loop,
                                             ValidationReport* report,
                                             const std::string& location) {
  std::vector<Eigen::Vector2d> poly;
  if (loop.curves.empty()) return poly;

  // A circle is a closed loop on its own.
  if (loop.curves.size() == 1 && loop.curves[0].kind == CurveKind::Circle) {
    const CircleFit fit = fit_circle(loop.curves[0].points);
    if (fit.residual > kCircleFitTol) {
      if (report)
        report->add(IssueCode::CircleFitFailure, Severity::Error, location,
                    "circle points deviate " + std::to_string(fit.residual) +
                        " grid units from the fit");
      return {};
    }
    for (int i = 0; i < kCircleSegments; ++i) {
      const double t = 2 * M_PI * i / kCircleSegments;
      poly.emplace_back(fit.center.x() + fit.radius * std::cos(t),
                        fit.center.y() + fit.radius * std::sin(t));
    }
    return poly;
  }

  const size_t n = loop.curves.size();
  for (size_t i = 0; i < n; ++i) {
    const Curve& cur = loop.curves[i];
    if (cur.kind == CurveKind::Circle) {
      if (report)
        report->add(IssueCode::CircleNotAlone, Severity::Error, location,
                    "circle mixed with other curves in a loop");
      return {};
    }
    const Point2D s = cur.points.front();
    const Point2D e = loop.curves[(i + 1) % n].points.front();
    const Eigen::Vector2d a(s.x, s.y), b(e.x, e.y);
    if (cur.kind == CurveKind::Line) {
      poly.push_back(a);
    } else {  // Arc
      const Eigen::Vector2d m(cur.points[1].x, cur.points[1].y);
      if (!append_arc(poly, a, m, b, report, location)) return {};
    }
  }
  return poly;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

constexpr double kMinLoopArea = 0.5;  // grid units squared

void validate_loop(const Loop& loop, const std::string& location,
                   ValidationReport& report) {
  if (loop.curves.empty()) {
    report.add(IssueCode::EmptyLoop, Severity::Error, location, "no curves");
    return;
  }
  for (const Curve& c : loop.curves) {
    if (static_cast<int>(c.points.size()) != curve_point_count(c.kind)) {
      report.add(IssueCode::BadArity, Severity::Error, location,
                 "curve point count mismatch");
      return;
    }
    for (const Point2D& p : c.points) {
      if (p.x < 0 || p.x >= kGrid || p.y < 0 || p.y >= kGrid) {
        report.add(IssueCode::CoordOutOfRange, Severity::Error, location,
                   "coordinate off the grid");
        return;
      }
    }
  }
  // A lone line can never close into area; report it as degenerate before
  // tessellation ever runs.
  if (loop.curves.size() == 1 && loop.curves[0].kind == CurveKind::Line) {
    report.add(IssueCode::DegenerateLoop, Severity::Error, location,
               "single line cannot close a loop");
    return;
  }
  ValidationReport geo;
  const std::vector<Eigen::Vector2d> poly = tessellate_loop(loop, &geo, location);
  report.merge(geo);
  if (!geo.is_valid()) return;
  if (std::abs(polygon_area(poly)) < kMinLoopArea) {
    report.add(IssueCode::DegenerateLoop, Severity::Error, location,
               "loop encloses no area");
  }
}

}  // namespace

ValidationReport validate(const CadModel& model) {
  ValidationReport report;
  if (model.pairs.empty()) {
    report.add(IssueCode::EmptyModel, Severity::Error, "", "no pairs");
    return report;
  }
  for (size_t pi = 0; pi < model.pairs.size(); ++pi) {
    const CadPair& pair = model.pairs[pi];
    if (pair.sketch.faces.empty()) {
      report.add(IssueCode::EmptySketch, Severity::Error, pair_loc(pi),
                 "sketch has no faces");
      continue;
    }
    for (size_t fi = 0; fi < pair.sketch.faces.size(); ++fi) {
      const Face& face = pair.sketch.faces[fi];
      if (face.loops.empty()) {
        report.add(IssueCode::EmptyFace, Severity::Error,
                   pair_loc(pi) + " / face " + std::to_string(fi), "no loops");
        continue;
      }
      for (size_t li = 0; li < face.loops.size(); ++li)
        validate_loop(face.loops[li], loop_loc(pi, fi, li), report);
    }

    const Extrusion& e = pair.extrusion;
    for (int field : {e.extent_top, e.extent_bottom, e.translation[0],
                      e.translation[1], e.translation[2], e.scale,
                      e.scale_center[0], e.scale_center[1]}) {
      if (field < 0 || field >= kGrid) {
        report.add(IssueCode::CoordOutOfRange, Severity::Error, pair_loc(pi),
                   "extrusion field off the grid");
        break;
      }
    }
    const Eigen::Matrix3d r = e.rotation_matrix();
    const double err =
        (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err > kOrthonormalTol) {
      report.add(IssueCode::RotationNotOrthonormal, Severity::Error,
                 pair_loc(pi),
                 "R^T R deviates from I by " + std::to_string(err));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Command-array decoder
// ---------------------------------------------------------------------------

DecodeResult decode_command_arrays(const CommandArrays& arrays,
                                   int pad_offset) {
  DecodeResult result;
  ValidationReport& report = result.report;

  if (arrays.se_ext.size() % kExtrusionRecordLen != 0) {
    report.add(IssueCode::BadArrayLength, Severity::Error, "se_ext",
               "length " + std::to_string(arrays.se_ext.size()) +
                   " is not a multiple of 18");
    return result;
  }

  CadModel model;
  Sketch sketch;
  Face face;
  Loop loop;
  size_t xy = 0;      // cursor into se_xy
  size_t ext = 0;     // cursor into se_ext (records)
  auto cmd_loc = [](size_t i) { return "se_cmd " + std::to_string(i); };

  auto take_points = [&](size_t at, int used, int footprint,
                         std::vector<Point2D>& out) -> bool {
    if (xy + footprint > arrays.se_xy.size()) {
      report.add(IssueCode::SkipOverrun, Severity::Error, cmd_loc(at),
                 "command needs " + std::to_string(footprint) +
                     " positions, " +
                     std::to_string(arrays.se_xy.size() - xy) + " remain");
      return false;
    }
    for (int i = 0; i < used; ++i) {
      const Point2D& raw = arrays.se_xy[xy + i];
      out.push_back({raw.x - pad_offset, raw.y - pad_offset});
    }
    xy += footprint;
    return true;
  };

  for (size_t i = 0; i < arrays.se_cmd.size(); ++i) {
    const int cmd = arrays.se_cmd[i];
    switch (cmd) {
      case 5: {  // circle: 4 points, footprint 5
        Curve c;
        c.kind = CurveKind::Circle;
        if (!take_points(i, 4, 5, c.points)) return result;
        loop.curves.push_back(std::move(c));
        break;
      }
      case 4: {  // arc: 2 points, footprint 3
        Curve c;
        c.kind = CurveKind::Arc;
        if (!take_points(i, 2, 3, c.points)) return result;
        loop.curves.push_back(std::move(c));
        break;
      }
      case 3: {  // line: 1 point, footprint 2
        Curve c;
        c.kind = CurveKind::Line;
        if (!take_points(i, 1, 2, c.points)) return result;
        loop.curves.push_back(std::move(c));
        break;
      }
      case 2: {  // loop end, footprint 1
        std::vector<Point2D> none;
        if (!take_points(i, 0, 1, none)) return result;
        if (loop.curves.empty()) {
          report.add(IssueCode::EmptyLoop, Severity::Error, cmd_loc(i),
                     "loop closed with no curves");
          return result;
        }
        face.loops.push_back(std::move(loop));
        loop = Loop{};
        break;
      }
      case 1: {  // face end, footprint 1
        std::vector<Point2D> none;
        if (!take_points(i, 0, 1, none)) return result;
        if (face.loops.empty()) {
          report.add(IssueCode::EmptyFace, Severity::Error, cmd_loc(i),
                     "face closed with no loops");
          return result;
        }
        sketch.faces.push_back(std::move(face));
        face = Face{};
        break;
      }
      case 0: {  // sketch end, footprint 1; consumes one extrusion record
        std::vector<Point2D> none;
        if (!take_points(i, 0, 1, none)) return result;
        if (sketch.faces.empty()) {
          report.add(IssueCode::EmptySketch, Severity::Error, cmd_loc(i),
                     "sketch closed with no faces");
          return result;
        }
        if ((ext + 1) * kExtrusionRecordLen > arrays.se_ext.size()) {
          report.add(IssueCode::BadExtrusionRecord, Severity::Error,
                     cmd_loc(i), "no extrusion record left for this sketch");
          return result;
        }
        const int* rec = arrays.se_ext.data() + ext * kExtrusionRecordLen;
        ++ext;
        Extrusion e;
        switch (rec[0]) {
          case 0: e.op = BooleanOp::Add; break;
          case 1: e.op = BooleanOp::Cut; break;
          case 2: e.op = BooleanOp::Intersect; break;
          default:
            report.add(IssueCode::BadExtrusionRecord, Severity::Error,
                       cmd_loc(i),
                       "boolean code " + std::to_string(rec[0]) +
                           " is not 0/1/2");
            return result;
        }
        auto unpad = [&](int v) { return v - pad_offset; };
        e.extent_top = unpad(rec[1]);
        e.extent_bottom = unpad(rec[2]);
        e.translation = {unpad(rec[3]), unpad(rec[4]), unpad(rec[5])};
        for (int r = 0; r < 9; ++r) e.rotation[r] = unpad(rec[6 + r]);
        e.scale = unpad(rec[15]);
        e.scale_center = {unpad(rec[16]), unpad(rec[17])};
        model.pairs.push_back({std::move(sketch), e});
        sketch = Sketch{};
        break;
      }
      default:
        report.add(IssueCode::UnknownCommand, Severity::Error, cmd_loc(i),
                   "command " + std::to_string(cmd) + " is not 0..5");
        return result;
    }
  }

  if (!loop.curves.empty() || !face.loops.empty() || !sketch.faces.empty()) {
    report.add(IssueCode::TruncatedSequence, Severity::Error, "se_cmd",
               "command stream ends inside a sketch");
    return result;
  }
  if (model.pairs.empty()) {
    report.add(IssueCode::EmptyModel, Severity::Error, "se_cmd", "no pairs");
    return result;
  }
  if (xy != arrays.se_xy.size()) {
    report.add(IssueCode::BadArrayLength, Severity::Error, "se_xy",
               "grammar consumed " + std::to_string(xy) + " of " +
                   std::to_string(arrays.se_xy.size()) + " positions");
    return result;
  }
  if (ext * kExtrusionRecordLen != arrays.se_ext.size()) {
    report.add(IssueCode::BadArrayLength, Severity::Error, "se_ext",
               "unconsumed extrusion records");
    return result;
  }

  report.merge(validate(model));
  result.model = std::move(model);
  return result;
}

}  // namespace secad
