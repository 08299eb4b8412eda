#include "secad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace secad {

namespace {

const char* kSizes[] = {"thin", "tall", "flat", "long"};
const char* kShapes[] = {"plate", "block", "cylinder", "disc"};
const char* kCounts[] = {"one", "two", "three", "four"};

Loop rect_loop(int x0, int y0, int x1, int y1) {
  Loop loop;
  loop.curves = {make_line({x0, y0}), make_line({x1, y0}), make_line({x1, y1}),
                 make_line({x0, y1})};
  return loop;
}

Loop circle_loop(int cx, int cy, int r) {
  Loop loop;
  loop.curves = {make_circle({cx + r, cy}, {cx, cy + r}, {cx - r, cy},
                             {cx, cy - r})};
  return loop;
}

struct SizeSpec {
  int top, bottom;       // extent tokens
  bool stretch = false;  // widen rectangular profiles
};

SizeSpec size_spec(const std::string& size) {
  if (size == "thin") return {38, 26};
  if (size == "tall") return {56, 8};
  if (size == "flat") return {36, 28};
  if (size == "long") return {44, 20, true};
  throw std::invalid_argument("toy grammar: unknown size '" + size + "'");
}

// Hole centres, grid units. Rect shapes take a row along y=32; round shapes
// take a centre hole or a ring of radius 8.
std::vector<Point2D> hole_centers(bool round_shape, int count) {
  std::vector<Point2D> out;
  if (!round_shape) {
    for (int i = 0; i < count; ++i)
      out.push_back({32 + 10 * i - 5 * (count - 1), 32});
    return out;
  }
  if (count == 1) return {{32, 32}};
  for (int i = 0; i < count; ++i) {
    const double angle = 2.0 * M_PI * i / count;
    out.push_back({32 + static_cast<int>(std::lround(8 * std::cos(angle))),
                   32 + static_cast<int>(std::lround(8 * std::sin(angle)))});
  }
  return out;
}

}  // namespace

std::vector<std::string> toy_prompts() {
  std::vector<std::string> out;
  for (const char* size : kSizes)
    for (const char* shape : kShapes) {
      out.push_back(std::string("a ") + size + " " + shape);
      for (int holes = 1; holes <= 4; ++holes)
        out.push_back(std::string("a ") + size + " " + shape + " with " +
                      kCounts[holes - 1] + (holes == 1 ? " hole" : " holes"));
    }
  return out;
}

CadModel toy_ground_truth(const std::string& text) {
  std::istringstream in(text);
  std::string a, size, shape, with_word, count_word, feature;
  in >> a >> size >> shape;
  if (a != "a" || shape.empty())
    throw std::invalid_argument("toy grammar: cannot parse '" + text + "'");
  int holes = 0;
  if (in >> with_word) {
    in >> count_word >> feature;
    if (with_word != "with" || feature.substr(0, 4) != "hole")
      throw std::invalid_argument("toy grammar: cannot parse '" + text + "'");
    for (int i = 0; i < 4; ++i)
      if (count_word == kCounts[i]) holes = i + 1;
    if (holes == 0)
      throw std::invalid_argument("toy grammar: unknown count '" + count_word +
                                  "'");
  }

  const SizeSpec spec = size_spec(size);
  const bool round_shape = shape == "cylinder" || shape == "disc";

  Sketch base;
  if (shape == "plate") {
    base.faces.push_back(
        {{spec.stretch ? rect_loop(4, 24, 60, 40) : rect_loop(8, 16, 56, 48)}});
  } else if (shape == "block") {
    base.faces.push_back(
        {{spec.stretch ? rect_loop(6, 22, 58, 42) : rect_loop(12, 12, 52, 52)}});
  } else if (shape == "cylinder") {
    base.faces.push_back({{circle_loop(32, 32, spec.stretch ? 14 : 20)}});
  } else if (shape == "disc") {
    base.faces.push_back({{circle_loop(32, 32, spec.stretch ? 14 : 24)}});
  } else {
    throw std::invalid_argument("toy grammar: unknown shape '" + shape + "'");
  }

  Extrusion body = identity_extrusion();
  body.op = BooleanOp::Add;
  body.extent_top = spec.top;
  body.extent_bottom = spec.bottom;

  CadModel model;
  model.pairs.push_back({std::move(base), body});

  if (holes > 0) {
    Sketch drill;
    const int r = round_shape ? (holes == 1 ? 3 : 2) : 3;
    for (const Point2D& c : hole_centers(round_shape, holes))
      drill.faces.push_back({{circle_loop(c.x, c.y, r)}});
    Extrusion cut = body;
    cut.op = BooleanOp::Cut;
    model.pairs.push_back({std::move(drill), cut});
  }
  return model;
}

std::vector<DatasetRecord> toy_corpus() {
  std::vector<DatasetRecord> out;
  for (const std::string& prompt : toy_prompts())
    out.push_back({prompt, serialize(toy_ground_truth(prompt))});
  return out;
}

std::vector<DatasetRecord> toy_training_set(int copies, std::uint64_t seed) {
  const std::vector<DatasetRecord> base = toy_corpus();
  std::vector<DatasetRecord> out;
  out.reserve(base.size() * static_cast<size_t>(copies));
  for (int c = 0; c < copies; ++c)
    out.insert(out.end(), base.begin(), base.end());
  Rng rng(seed);
  for (size_t i = out.size(); i > 1; --i)
    std::swap(out[i - 1], out[static_cast<size_t>(
                              rng.uniform_int(0, static_cast<int>(i) - 1))]);
  return out;
}

std::vector<std::string> perturb_candidates(const CadModel& reference, int k,
                                            Rng& rng) {
  std::vector<std::string> menu;
  menu.push_back(serialize(reference));  // the reference itself

  {  // mild: nudge the whole solid along x
    CadModel m = reference;
    for (CadPair& pair : m.pairs)
      pair.extrusion.translation[0] =
          clamp_token(pair.extrusion.translation[0] + 2);
    menu.push_back(serialize(m));
  }
  {  // mild: shave the extrusion extents
    CadModel m = reference;
    for (CadPair& pair : m.pairs) {
      if (pair.extrusion.extent_top - pair.extrusion.extent_bottom > 14) {
        pair.extrusion.extent_top -= 4;
        pair.extrusion.extent_bottom += 4;
      }
    }
    menu.push_back(serialize(m));
  }
  {  // medium: drag the profile sideways
    CadModel m = reference;
    for (CadPair& pair : m.pairs)
      for (Face& face : pair.sketch.faces)
        for (Loop& loop : face.loops)
          for (Curve& curve : loop.curves)
            for (Point2D& pt : curve.points) pt.x = clamp_token(pt.x + 8);
    menu.push_back(serialize(m));
  }
  {  // medium-severe: drop the last pair, or inflate the scale
    CadModel m = reference;
    if (m.pairs.size() > 1) {
      m.pairs.pop_back();
    } else {
      m.pairs[0].extrusion.scale = 47;  // x1.5
    }
    menu.push_back(serialize(m));
  }
  {  // invalid: truncate the tail mid-record
    const std::string full = serialize(reference);
    const size_t cut = full.rfind(' ');
    menu.push_back(full.substr(0, cut == std::string::npos ? 1 : cut));
  }
  {  // invalid: structurally broken but tokenizable
    menu.push_back("line 8 8 <loop_end> <face_end> cut 1 2 3");
  }

  // the reference stays in most draws; the rest is sampled without
  // replacement from the corruption menu
  std::vector<std::string> out;
  std::vector<size_t> rest = {1, 2, 3, 4, 5, 6};
  for (size_t i = rest.size(); i > 1; --i)
    std::swap(rest[i - 1],
              rest[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  const bool with_reference = rng.uniform() < 0.7;
  if (with_reference) out.push_back(menu[0]);
  for (size_t i = 0; out.size() < static_cast<size_t>(k) && i < rest.size(); ++i)
    out.push_back(menu[rest[i]]);
  while (out.size() < static_cast<size_t>(k)) out.push_back(menu[0]);

  // shuffle so rank order carries no positional signal
  for (size_t i = out.size(); i > 1; --i)
    std::swap(out[i - 1], out[static_cast<size_t>(
                              rng.uniform_int(0, static_cast<int>(i) - 1))]);
  return out;
}

}  // namespace secad
