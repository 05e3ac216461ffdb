#pragma once
// Rounded-rectangle pipe building block.
//
// The block is the divergence-free unit everything else is assembled from:
// take the core rectangle R with halfwidths (l/2 - a, lb/2 - a) centred at O,
// let d(p) = dist(p, R) and H = clamp(d - a, 0, a); the velocity is
// w = v * perp(grad H).  |w| = v exactly on the annular band a <= d < 2a,
// zero elsewhere; circulation is counterclockwise.

#include <stdexcept>
#include "advdiff/geometry.hpp"

namespace advdiff {

struct BlockFeature {
    int sx = 0, sy = 0;   // which of the 9 cells around R: -1/0/+1 per axis
    double d = 0.0;       // distance to the core rectangle R
    int zone = 0;         // 0: d < a (hole/plateau), 1: band a<=d<2a, 2: d>=2a
    Vec2 grad{};          // unit gradient of d (zero only at the exact centre)
    Vec2 corner{};        // corner centre, valid when sx != 0 && sy != 0
};

class BuildingBlock {
public:
    BuildingBlock() = default;
    BuildingBlock(double l, double lb, double a, double v, Vec2 O);

    BlockFeature feature(Vec2 p) const;          // p in world coordinates
    Vec2 eval(Vec2 p) const;                     // velocity at p
    double stream(Vec2 p) const;                 // v * H(p); w = perp(grad stream)
    double grad_bound() const { return v_ / a_; }

    // Streamline parametrisation at band depth d (a <= d < 2a): arc length
    // measured counterclockwise from the start of the bottom straight.
    double perimeter(double d) const;
    double arc_coord(Vec2 p) const;              // requires band point
    Vec2 point_at(double d, double s) const;
    // Counterclockwise travel time from -> to along a common streamline.
    double transit_time(Vec2 from, Vec2 to) const;
    double period(Vec2 p) const;                 // perimeter(d(p)) / v

    double a() const { return a_; }
    double v() const { return v_; }
    double l() const { return l_; }
    double lb() const { return lb_; }
    Vec2 O() const { return O_; }
    double hx() const { return hx_; }
    double hy() const { return hy_; }
    // Bounding half-extents of the support (outer offset 2a).
    double ext_x() const { return hx_ + 2.0 * a_; }
    double ext_y() const { return hy_ + 2.0 * a_; }

private:
    double l_ = 0, lb_ = 0, a_ = 0, v_ = 0;
    double hx_ = 0, hy_ = 0;
    Vec2 O_{};
};

}  // namespace advdiff
