#include <fstream>
#include <sstream>

#include "doctest.h"
#include "secad/io.hpp"
#include "secad/sem.hpp"
#include "test_util.hpp"

using namespace secad;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "missing fixture " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string canonical(const std::string& text) {
  std::string out;
  for (const std::string& t : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

int count_token(const std::string& text, const std::string& needle) {
  int n = 0;
  for (const std::string& t : tokenize(text))
    if (t == needle) ++n;
  return n;
}

}  // namespace

TEST_CASE("quantization maps hit their anchor points exactly") {
  CHECK(dequant_signed(quant_signed(0.0)) == 0.0);
  CHECK(dequant_signed(quant_signed(1.0)) == 1.0);
  CHECK(dequant_signed(quant_signed(-1.0)) == -1.0);
  CHECK(dequant_scale(quant_scale(1.0)) == 1.0);
  CHECK(quant_signed(0.0) == 32);
  CHECK(quant_signed(1.0) == 63);
  CHECK(quant_signed(-1.0) == 1);
  // round trips stay within half a grid step
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    CHECK(std::abs(dequant_signed(quant_signed(x)) - x) <= 0.5 / 31 + 1e-12);
    const double u = rng.uniform(0.0, 0.984);
    CHECK(std::abs(dequant_coord(quant_coord(u)) - u) <= 0.5 / 64 + 1e-12);
    const double s = rng.uniform(0.04, 2.0);
    CHECK(std::abs(dequant_scale(quant_scale(s)) - s) <= 0.5 / 32 + 1e-12);
  }
}

TEST_CASE("minimal square model parses into one face, one loop, four lines") {
  const std::string seq = serialize(test::square_prism());
  ParseResult r = parse_sequence(seq);
  REQUIRE(r.ok());
  REQUIRE(r.model->pairs.size() == 1);
  const Sketch& sk = r.model->pairs[0].sketch;
  REQUIRE(sk.faces.size() == 1);
  REQUIRE(sk.faces[0].loops.size() == 1);
  const Loop& loop = sk.faces[0].loops[0];
  REQUIRE(loop.curves.size() == 4);
  for (const Curve& c : loop.curves) CHECK(c.kind == CurveKind::Line);
  CHECK(loop.curves[0].points[0] == Point2D{8, 8});
  CHECK(r.model->pairs[0].extrusion.op == BooleanOp::Add);
}

TEST_CASE("serialization is deterministic and canonical") {
  const CadModel m = test::square_prism();
  const std::string a = serialize(m);
  const std::string b = serialize(m);
  CHECK(a == b);

  // Whitespace variants parse to the same model; canonical form is the
  // single-space join of the token stream.
  std::string spaced;
  for (char c : a) {
    spaced += c;
    if (c == ' ') spaced += "  \n\t";
  }
  ParseResult r = parse_sequence(spaced);
  REQUIRE(r.ok());
  CHECK(serialize(*r.model) == a);
  CHECK(canonical(spaced) == a);
  // serialize(parse(s)) is a fixed point
  CHECK(serialize(*parse_sequence(a).model) == a);
}

TEST_CASE("multi-pair models serialize one sketch block per pair") {
  CadModel m = test::square_prism();
  CadPair cut;
  cut.sketch.faces.push_back({{test::circle_loop(32, 32, 10)}});
  cut.extrusion = test::simple_extrusion(BooleanOp::Cut, -0.8, 0.8);
  m.pairs.push_back(cut);

  const std::string seq = serialize(m);
  CHECK(count_token(seq, "<sketch_end>") == 2);
  CHECK(count_token(seq, "add") + count_token(seq, "cut") +
            count_token(seq, "intersect") ==
        2);

  ParseResult r = parse_sequence(seq);
  REQUIRE(r.ok());
  REQUIRE(r.model->pairs.size() == 2);
  CHECK(r.model->pairs[1].extrusion.op == BooleanOp::Cut);
  CHECK(*r.model == m);
}

TEST_CASE("random valid models round-trip byte-identically") {
  Rng rng(20260819);
  for (int i = 0; i < 200; ++i) {
    const CadModel m = test::random_valid_model(rng);
    REQUIRE(validate(m).is_valid());
    const std::string s1 = serialize(m);
    ParseResult r = parse_sequence(s1);
    REQUIRE_MESSAGE(r.ok(), r.report.to_string());
    CHECK(*r.model == m);
    CHECK(serialize(*r.model) == s1);
  }
}

TEST_CASE("golden fixtures parse, match expected structures, round-trip") {
  int seen = 0;
  for (const auto& entry :
       std::filesystem::directory_iterator(test::fixture_dir() / "golden")) {
    if (entry.path().extension() != ".sem") continue;
    ++seen;
    const std::string text = slurp(entry.path());
    ParseResult r = parse_sequence(text);
    REQUIRE_MESSAGE(r.ok(), entry.path().filename().string() << ": "
                                                             << r.report.to_string());
    CHECK(serialize(*r.model) == canonical(text));

    std::filesystem::path expected = entry.path();
    expected.replace_extension(".json");
    const auto want = nlohmann::json::parse(slurp(expected));
    const auto got = nlohmann::json(model_to_json(*r.model));
    CHECK_MESSAGE(got == want, entry.path().filename().string()
                                   << " structure diverges from expectation");
  }
  CHECK(seen >= 6);
}

TEST_CASE("a 17-field extrusion record is a BadExtrusionRecord") {
  std::string seq = serialize(test::square_prism());
  seq.resize(seq.find_last_of(' '));  // drop the final field
  ParseResult r = parse_sequence(seq);
  CHECK(!r.ok());
  CHECK(r.report.has(IssueCode::BadExtrusionRecord));

  // Mid-sequence shortfall (the next pair's tokens arrive too early) is the
  // same error, not a truncation.
  CadModel two = test::square_prism();
  two.pairs.push_back(two.pairs[0]);
  std::vector<std::string> toks = tokenize(serialize(two));
  const size_t half = toks.size() / 2;  // last field of pair 0's record
  toks.erase(toks.begin() + half - 1);
  std::string mid;
  for (const std::string& t : toks) {
    if (!mid.empty()) mid += ' ';
    mid += t;
  }
  ParseResult r2 = parse_sequence(mid);
  CHECK(!r2.ok());
  CHECK(r2.report.has(IssueCode::BadExtrusionRecord));
}

TEST_CASE("every parser error variant is reachable") {
  auto code_of = [](const std::string& seq) {
    ParseResult r = parse_sequence(seq);
    REQUIRE(!r.ok());
    REQUIRE(!r.report.issues.empty());
    return r.report.issues.front().code;
  };
  const std::string square = serialize(test::square_prism());

  CHECK(code_of("line 8 8 <curve_end> banana") == IssueCode::UnknownToken);
  CHECK(code_of("line 64 8 <curve_end>") == IssueCode::UnknownToken);
  CHECK(code_of("line -3 8 <curve_end>") == IssueCode::UnknownToken);
  CHECK(code_of("line 8 8 <curve_end> <loop_end> <face_end>") ==
        IssueCode::TruncatedSequence);
  CHECK(code_of("line 8") == IssueCode::TruncatedSequence);
  CHECK(code_of("arc 8 8 <curve_end> <loop_end>") == IssueCode::BadArity);
  CHECK(code_of("line 8 8 9 9 <curve_end>") == IssueCode::BadArity);
  CHECK(code_of("<loop_end>") == IssueCode::EmptyLoop);
  CHECK(code_of("line 8 8 <curve_end> <loop_end> <face_end> <face_end>") ==
        IssueCode::EmptyFace);
  CHECK(code_of("<sketch_end>") == IssueCode::EmptySketch);
  CHECK(code_of("") == IssueCode::EmptyModel);
  CHECK(code_of(square + " cut") == IssueCode::BadExtrusionRecord);

  // Unknown-token examples from mangled keywords
  CHECK(code_of("lien 8 8 <curve_end>") == IssueCode::UnknownToken);
}

TEST_CASE("validate flags bad rotations and degenerate loops") {
  CadModel good = test::square_prism();
  CHECK(validate(good).is_valid());

  // Perturb one rotation entry by ~0.1: orthonormality breaks.
  CadModel bent = good;
  bent.pairs[0].extrusion.rotation[0] = quant_signed(1.0 - 0.1);
  ValidationReport vr = validate(bent);
  CHECK(!vr.is_valid());
  CHECK(vr.has(IssueCode::RotationNotOrthonormal));

  // A loop made of a single line cannot close.
  CadModel degen = good;
  degen.pairs[0].sketch.faces[0].loops[0].curves = {make_line({5, 5})};
  ValidationReport dr = validate(degen);
  CHECK(!dr.is_valid());
  CHECK(dr.has(IssueCode::DegenerateLoop));

  // Zero-area rectangle collapses too.
  CadModel flat = good;
  flat.pairs[0].sketch.faces[0].loops[0] = test::rect_loop(8, 8, 8, 8);
  CHECK(validate(flat).has(IssueCode::DegenerateLoop));

  // A circle sharing a loop with other curves is structural nonsense.
  CadModel mixed = good;
  mixed.pairs[0].sketch.faces[0].loops[0].curves.push_back(
      make_circle({40, 32}, {32, 40}, {24, 32}, {32, 24}));
  CHECK(validate(mixed).has(IssueCode::CircleNotAlone));

  // Coordinates straight off the grid (built directly, not parsed).
  CadModel off = good;
  off.pairs[0].sketch.faces[0].loops[0].curves[0].points[0].x = 99;
  CHECK(validate(off).has(IssueCode::CoordOutOfRange));
}

TEST_CASE("circle fitting: exact cardinal points, loud residual failures") {
  const Loop exact = test::circle_loop(32, 32, 30);
  const CircleFit fit = fit_circle(exact.curves[0].points);
  CHECK(fit.radius == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(fit.residual == doctest::Approx(0.0).epsilon(1e-12));

  // Push one point well off the circle: residual beyond 2 grid units.
  CadModel m;
  Sketch sk;
  Loop bad = exact;
  bad.curves[0].points[0] = {62, 50};
  sk.faces.push_back({{bad}});
  m.pairs.push_back({sk, identity_extrusion()});
  ValidationReport vr = validate(m);
  CHECK(!vr.is_valid());
  CHECK(vr.has(IssueCode::CircleFitFailure));
}

TEST_CASE("arc tessellation respects the mid point and degrades gracefully") {
  // Half disc: the arc sweeps through its apex.
  const Loop half = test::half_disc_loop(12, 52, 20, 20);
  ValidationReport rep;
  const auto poly = tessellate_loop(half, &rep);
  REQUIRE(rep.is_valid());
  REQUIRE(!poly.empty());
  double max_y = 0;
  for (const auto& p : poly) max_y = std::max(max_y, p.y());
  CHECK(max_y == doctest::Approx(40.0).epsilon(0.01));  // apex reached
  // Area ~ half of the disc pi*r^2/2 with r=20
  CHECK(std::abs(polygon_area(poly)) ==
        doctest::Approx(M_PI * 20 * 20 / 2).epsilon(0.02));

  // Collinear arc points: degrades to a straight segment, no error.
  Loop collinear;
  collinear.curves = {make_line({10, 10}), make_line({30, 10}),
                      make_arc({30, 30}, {20, 20})};
  ValidationReport rep2;
  const auto poly2 = tessellate_loop(collinear, &rep2);
  CHECK(rep2.is_valid());
  CHECK(std::abs(polygon_area(poly2)) == doctest::Approx(200.0).epsilon(1e-9));

  // Zero chord: arc from a point back to itself is degenerate.
  Loop zero;
  zero.curves = {make_arc({10, 10}, {20, 20})};
  ValidationReport rep3;
  tessellate_loop(zero, &rep3);
  CHECK(rep3.has(IssueCode::DegenerateArc));
}

TEST_CASE("serializer rejects structurally broken models") {
  CHECK_THROWS_AS(serialize(CadModel{}), InvariantViolation);

  CadModel no_pts = test::square_prism();
  no_pts.pairs[0].sketch.faces[0].loops[0].curves[0].points.clear();
  CHECK_THROWS_AS(serialize(no_pts), InvariantViolation);

  CadModel bad_coord = test::square_prism();
  bad_coord.pairs[0].extrusion.scale = 200;
  CHECK_THROWS_AS(serialize(bad_coord), InvariantViolation);
}
