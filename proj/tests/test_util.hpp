#pragma once

// Shared builders for tests: deterministic random valid models, canonical
// little fixtures, fixture-directory lookup.

#include <cstdlib>
#include <filesystem>
#include <string>

#include "secad/quant.hpp"
#include "secad/rng.hpp"
#include "secad/sem.hpp"

namespace secad::test {

inline std::filesystem::path fixture_dir() {
  if (const char* env = std::getenv("SECAD_FIXTURES")) return env;
  return std::filesystem::path(__FILE__).parent_path() / "fixtures";
}

// Axis-aligned rectangle as four lines, counter-clockwise from (x0, y0).
inline Loop rect_loop(int x0, int y0, int x1, int y1) {
  Loop loop;
  loop.curves = {make_line({x0, y0}), make_line({x1, y0}),
                 make_line({x1, y1}), make_line({x0, y1})};
  return loop;
}

// Circle through its four cardinal points (all exactly on the circle).
inline Loop circle_loop(int cx, int cy, int r) {
  Loop loop;
  loop.curves = {make_circle({cx + r, cy}, {cx, cy + r}, {cx - r, cy},
                             {cx, cy - r})};
  return loop;
}

// Half-disc: base line plus an arc over it.
inline Loop half_disc_loop(int x0, int x1, int y, int h) {
  Loop loop;
  loop.curves = {make_line({x0, y}),
                 make_arc({x1, y}, {(x0 + x1) / 2, y + h})};
  return loop;
}

inline Extrusion simple_extrusion(BooleanOp op = BooleanOp::Add,
                                  double bottom = -0.5, double top = 0.5) {
  Extrusion e = identity_extrusion();
  e.op = op;
  e.extent_bottom = quant_signed(bottom);
  e.extent_top = quant_signed(top);
  return e;
}

// The canonical one-pair test model: a centered square prism.
inline CadModel square_prism(int lo = 8, int hi = 56, double half_height = 0.5) {
  CadModel m;
  Sketch s;
  s.faces.push_back({{rect_loop(lo, lo, hi, hi)}});
  m.pairs.push_back({s, simple_extrusion(BooleanOp::Add, -half_height,
                                         half_height)});
  return m;
}

// One of the 48 signed permutation matrices; the only rotations that stay
// orthonormal within 1e-3 on the 6-bit grid.
inline std::array<int, 9> random_signed_permutation(Rng& rng) {
  int perm[3] = {0, 1, 2};
  for (int i = 2; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  std::array<int, 9> rot{};
  for (int i = 0; i < 3; ++i) {
    const double sign = rng.uniform_int(0, 1) ? 1.0 : -1.0;
    for (int j = 0; j < 3; ++j)
      rot[i * 3 + j] = quant_signed(j == perm[i] ? sign : 0.0);
  }
  return rot;
}

inline Loop random_loop(Rng& rng) {
  switch (rng.uniform_int(0, 2)) {
    case 0: {
      const int x0 = rng.uniform_int(2, 40), y0 = rng.uniform_int(2, 40);
      const int w = rng.uniform_int(6, 20), h = rng.uniform_int(6, 20);
      return rect_loop(x0, y0, x0 + w, y0 + h);
    }
    case 1: {
      const int r = rng.uniform_int(4, 14);
      const int cx = rng.uniform_int(r + 1, 62 - r);
      const int cy = rng.uniform_int(r + 1, 62 - r);
      return circle_loop(cx, cy, r);
    }
    default: {
      const int x0 = 2 * rng.uniform_int(1, 15);
      const int x1 = x0 + 2 * rng.uniform_int(4, 12);
      const int y = rng.uniform_int(2, 30);
      return half_disc_loop(x0, x1, y, rng.uniform_int(4, 16));
    }
  }
}

inline Extrusion random_extrusion(Rng& rng, bool force_add) {
  Extrusion e;
  const int op = force_add ? 0 : rng.uniform_int(0, 2);
  e.op = op == 0 ? BooleanOp::Add : (op == 1 ? BooleanOp::Cut
                                             : BooleanOp::Intersect);
  int top = rng.uniform_int(33, 55);
  int bottom = rng.uniform_int(9, 31);
  e.extent_top = top;
  e.extent_bottom = bottom;
  e.translation = {rng.uniform_int(24, 40), rng.uniform_int(24, 40),
                   rng.uniform_int(24, 40)};
  e.rotation = random_signed_permutation(rng);
  e.scale = rng.uniform_int(15, 47);
  e.scale_center = {rng.uniform_int(0, 63), rng.uniform_int(0, 63)};
  return e;
}

// Random model that always satisfies validate(); see quant.hpp for why the
// rotations are restricted to signed permutations.
inline CadModel random_valid_model(Rng& rng) {
  CadModel m;
  const int pairs = rng.uniform_int(1, 3);
  for (int p = 0; p < pairs; ++p) {
    Sketch sk;
    const int faces = rng.uniform_int(1, 2);
    for (int f = 0; f < faces; ++f) {
      Face face;
      face.loops.push_back(random_loop(rng));
      // A contained hole, when the outer loop is a rectangle with room.
      if (face.loops[0].curves.size() == 4 && rng.uniform_int(0, 1)) {
        const Loop& outer = face.loops[0];
        const int x0 = outer.curves[0].points[0].x;
        const int y0 = outer.curves[0].points[0].y;
        const int x1 = outer.curves[2].points[0].x;
        const int y1 = outer.curves[2].points[0].y;
        const int r = std::min((x1 - x0) / 2, (y1 - y0) / 2) - 2;
        if (r >= 2)
          face.loops.push_back(circle_loop((x0 + x1) / 2, (y0 + y1) / 2, r));
      }
      sk.faces.push_back(std::move(face));
    }
    m.pairs.push_back({std::move(sk), random_extrusion(rng, p == 0)});
  }
  return m;
}

// Random model that also assembles to a non-empty solid at resolution >= 32:
// thick extents, adds plus at most one contained circular cut, unit scale.
inline CadModel random_renderable_model(Rng& rng) {
  CadModel m;
  const int x0 = rng.uniform_int(4, 20), y0 = rng.uniform_int(4, 20);
  const int x1 = x0 + rng.uniform_int(20, 38), y1 = y0 + rng.uniform_int(20, 38);

  Extrusion base = simple_extrusion(BooleanOp::Add);
  base.extent_top = rng.uniform_int(40, 55);      // >= 0.26 world
  base.extent_bottom = rng.uniform_int(9, 24);    // <= -0.26 world
  base.translation = {rng.uniform_int(28, 36), rng.uniform_int(28, 36),
                      rng.uniform_int(28, 36)};
  base.rotation = random_signed_permutation(rng);

  Sketch sk;
  sk.faces.push_back({{rect_loop(x0, y0, std::min(x1, 60), std::min(y1, 60))}});
  m.pairs.push_back({sk, base});

  if (rng.uniform_int(0, 1)) {  // second block merged in
    Extrusion more = base;
    more.extent_top = rng.uniform_int(40, 50);
    Sketch sk2;
    const int w = rng.uniform_int(10, 24);
    const int ax = rng.uniform_int(4, 60 - w), ay = rng.uniform_int(4, 60 - w);
    sk2.faces.push_back({{rect_loop(ax, ay, ax + w, ay + w)}});
    m.pairs.push_back({sk2, more});
  }
  if (rng.uniform_int(0, 1)) {  // through-hole in the first block
    const int r =
        std::min({(std::min(x1, 60) - x0) / 2 - 3, (std::min(y1, 60) - y0) / 2 - 3, 10});
    if (r >= 3) {
      Extrusion hole = base;
      hole.op = BooleanOp::Cut;
      Sketch sk3;
      sk3.faces.push_back(
          {{circle_loop((x0 + std::min(x1, 60)) / 2, (y0 + std::min(y1, 60)) / 2, r)}});
      m.pairs.push_back({sk3, hole});
    }
  }
  return m;
}

}  // namespace secad::test
