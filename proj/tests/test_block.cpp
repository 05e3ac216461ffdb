// Building-block suite: support geometry, speed, gradients, streamline clock.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "advdiff/block.hpp"

using namespace advdiff;

namespace {
// central-difference velocity from the stream function, used as the
// independent oracle for the analytic field
Vec2 fd_vel(const BuildingBlock& b, Vec2 p, double h) {
    double sx = (b.stream({p.x, p.y + h}) - b.stream({p.x, p.y - h})) / (2 * h);
    double sy = (b.stream({p.x + h, p.y}) - b.stream({p.x - h, p.y})) / (2 * h);
    return {-sx, sy};
}
}  // namespace

TEST_CASE("block: support is the annulus a <= d < 2a and |w| = v on it") {
    BuildingBlock b(0.8, 0.5, 0.05, 3.0, {0.2, -0.1});
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> ux(-0.35, 0.75), uy(-0.5, 0.3);
    int on_band = 0;
    for (int i = 0; i < 20000; ++i) {
        Vec2 p{ux(rng), uy(rng)};
        auto f = b.feature(p);
        Vec2 w = b.eval(p);
        if (f.d >= 0.05 && f.d < 0.10) {
            ++on_band;
            CHECK(std::abs(norm(w) - 3.0) < 1e-9);  // exact speed on the band
        } else {
            CHECK(norm(w) == 0.0);
        }
    }
    CHECK(on_band > 1000);
}

TEST_CASE("block: counterclockwise orientation on each straight segment") {
    BuildingBlock b(0.4, 0.4, 0.02, 1.0, {0.0, 0.0});
    double mid = 0.18 + 0.03;  // hx + 1.5a
    Vec2 wl = b.eval({-mid, 0.0});
    Vec2 wr = b.eval({mid, 0.0});
    Vec2 wb = b.eval({0.0, -mid});
    Vec2 wt = b.eval({0.0, mid});
    CHECK(wl.x == 0.0); CHECK(wl.y == doctest::Approx(-1.0));
    CHECK(wr.x == 0.0); CHECK(wr.y == doctest::Approx(1.0));
    CHECK(wb.y == 0.0); CHECK(wb.x == doctest::Approx(1.0));
    CHECK(wt.y == 0.0); CHECK(wt.x == doctest::Approx(-1.0));
}

TEST_CASE("block: velocity matches the stream function everywhere") {
    BuildingBlock b(0.6, 0.9, 0.04, 2.5, {-0.1, 0.05});
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-0.7, 0.7);
    for (int i = 0; i < 3000; ++i) {
        Vec2 p{-0.1 + u(rng), 0.05 + u(rng)};
        auto f = b.feature(p);
        // keep away from the kink lines where the FD stencil straddles zones
        double da = std::min(std::abs(f.d - 0.04), std::abs(f.d - 0.08));
        if (da < 1e-5) continue;
        Vec2 w = b.eval(p);
        Vec2 wf = fd_vel(b, p, 1e-7);
        CHECK(norm(w - wf) < 1e-5);
    }
}

TEST_CASE("block: gradient bound v/a attained on corners, zero on straights") {
    double a = 0.03, v = 4.0;
    BuildingBlock b(0.5, 0.5, a, v, {0.0, 0.0});
    double hfd = 1e-8 * a;

    // corner cell, mid-band: |grad w| ~ v/a
    Vec2 c{0.22 + 1.5 * a / std::sqrt(2.0), 0.22 + 1.5 * a / std::sqrt(2.0)};
    auto dwx = (1.0 / (2 * hfd)) * (b.eval({c.x + hfd, c.y}) - b.eval({c.x - hfd, c.y}));
    auto dwy = (1.0 / (2 * hfd)) * (b.eval({c.x, c.y + hfd}) - b.eval({c.x, c.y - hfd}));
    double gn = std::sqrt(dot(dwx, dwx) + dot(dwy, dwy));
    // rotational field: |Dw|_F = v/r at radius r = 1.5a; the band supremum
    // (r -> a at the inner edge) is the advertised bound v/a
    CHECK(gn == doctest::Approx(v / (1.5 * a)).epsilon(1e-6));
    CHECK(gn <= v / a + 1e-6);

    // straight cell: locally constant field
    Vec2 s{0.0, -(0.22 + 1.5 * a)};
    auto dsx = (1.0 / (2 * hfd)) * (b.eval({s.x + hfd, s.y}) - b.eval({s.x - hfd, s.y}));
    auto dsy = (1.0 / (2 * hfd)) * (b.eval({s.x, s.y + hfd}) - b.eval({s.x, s.y - hfd}));
    CHECK(norm(dsx) < 1e-6 * v / a);
    CHECK(norm(dsy) < 1e-6 * v / a);

    CHECK(b.grad_bound() == doctest::Approx(v / a));
}

TEST_CASE("block: arc-length clock inverts and the period formula holds") {
    BuildingBlock b(0.7, 0.4, 0.05, 2.0, {0.1, 0.3});
    double d = 0.07;
    double P = b.perimeter(d);
    CHECK(P == doctest::Approx(4 * 0.3 + 4 * 0.15 + 2 * M_PI * d).epsilon(1e-14));
    for (int i = 0; i < 200; ++i) {
        double s = P * (i + 0.3) / 200.0;
        Vec2 p = b.point_at(d, s);
        CHECK(b.feature(p).d == doctest::Approx(d).epsilon(1e-12));
        CHECK(b.arc_coord(p) == doctest::Approx(s).epsilon(1e-10));
    }
    // the streamline period is the total time bound (2l + 2lb + 4 pi a)/v
    Vec2 p = b.point_at(d, 0.1);
    CHECK(b.period(p) == doctest::Approx(P / 2.0));
    double bound = (2 * 0.7 + 2 * 0.4 + 4 * M_PI * 0.05) / 2.0;
    CHECK(b.period(p) <= bound);
}

TEST_CASE("block: transit time is arclength over speed, counterclockwise") {
    BuildingBlock b(0.6, 0.6, 0.04, 5.0, {0.0, 0.0});
    double d = 0.06;
    Vec2 p1 = b.point_at(d, 0.05);
    Vec2 p2 = b.point_at(d, 0.35);
    CHECK(b.transit_time(p1, p2) == doctest::Approx(0.3 / 5.0).epsilon(1e-12));
    double P = b.perimeter(d);
    CHECK(b.transit_time(p2, p1) == doctest::Approx((P - 0.3) / 5.0).epsilon(1e-12));
    CHECK_THROWS(b.transit_time(p1, b.point_at(0.07, 0.0)));
}

TEST_CASE("block: half-open band convention at the edges") {
    // dyadic dimensions so the edge coordinates are exact in binary
    double a = 0.0625;
    BuildingBlock b(0.5, 0.5, a, 1.0, {0.0, 0.0});
    // bottom straight: depth exactly a (inner edge) is in the band,
    // depth exactly 2a (outer edge) is out
    CHECK(norm(b.eval({0.0, -(0.1875 + a)})) == doctest::Approx(1.0));
    CHECK(norm(b.eval({0.0, -(0.1875 + 2 * a)})) == 0.0);
}

TEST_CASE("block: rejects degenerate dimensions") {
    CHECK_THROWS(BuildingBlock(0.1, 0.5, 0.05, 1.0, {0, 0}));   // l/2 == a
    CHECK_THROWS(BuildingBlock(0.5, 0.08, 0.05, 1.0, {0, 0}));  // lb/2 < a
    CHECK_THROWS(BuildingBlock(0.5, 0.5, -0.01, 1.0, {0, 0}));
    CHECK_THROWS(BuildingBlock(0.5, 0.5, 0.05, 0.0, {0, 0}));
}
