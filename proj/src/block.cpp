#include "advdiff/block.hpp"

#include <cmath>

namespace advdiff {

BuildingBlock::BuildingBlock(double l, double lb, double a, double v, Vec2 O)
    : l_(l), lb_(lb), a_(a), v_(v), O_(O) {
    if (!(a > 0.0) || !(v > 0.0))
        throw std::invalid_argument("building block: a and v must be positive");
    hx_ = 0.5 * l - a;
    hy_ = 0.5 * lb - a;
    if (!(hx_ > 0.0) || !(hy_ > 0.0))
        throw std::invalid_argument("building block: need l/2 > a and lb/2 > a");
}

BlockFeature BuildingBlock::feature(Vec2 p) const {
    Vec2 q = p - O_;
    BlockFeature f;
    f.sx = (q.x < -hx_) ? -1 : (q.x >= hx_ ? 1 : 0);
    f.sy = (q.y < -hy_) ? -1 : (q.y >= hy_ ? 1 : 0);
    if (f.sx != 0 && f.sy != 0) {
        f.corner = O_ + Vec2{f.sx * hx_, f.sy * hy_};
        Vec2 r = p - f.corner;
        f.d = norm(r);
        f.grad = (f.d > 0.0) ? (1.0 / f.d) * r : Vec2{double(f.sx), 0.0};
    } else if (f.sx != 0) {
        f.d = std::abs(q.x) - hx_;
        f.grad = {double(f.sx), 0.0};
    } else if (f.sy != 0) {
        f.d = std::abs(q.y) - hy_;
        f.grad = {0.0, double(f.sy)};
    } else {
        // inside the core rectangle: distance to its boundary, pointing in
        double dx = hx_ - std::abs(q.x), dy = hy_ - std::abs(q.y);
        f.d = -std::min(dx, dy);
        f.grad = (dx < dy) ? Vec2{q.x >= 0 ? 1.0 : -1.0, 0.0}
                           : Vec2{0.0, q.y >= 0 ? 1.0 : -1.0};
    }
    // half-open band: inner edge included, outer edge excluded
    f.zone = (f.d < a_) ? 0 : (f.d < 2.0 * a_ ? 1 : 2);
    return f;
}

Vec2 BuildingBlock::eval(Vec2 p) const {
    BlockFeature f = feature(p);
    if (f.zone != 1) return {0.0, 0.0};
    return v_ * perp(f.grad);
}

double BuildingBlock::stream(Vec2 p) const {
    BlockFeature f = feature(p);
    double H = std::clamp(f.d - a_, 0.0, a_);
    return v_ * H;
}

double BuildingBlock::perimeter(double d) const {
    return 4.0 * hx_ + 4.0 * hy_ + 2.0 * M_PI * d;
}

// Arc-length origin: the left end of the bottom straight, (O.x - hx, O.y - hy - d),
// increasing counterclockwise (bottom -> right -> top -> left).
double BuildingBlock::arc_coord(Vec2 p) const {
    BlockFeature f = feature(p);
    double d = f.d;
    double qd = 0.5 * M_PI * d;  // quarter-arc length
    Vec2 q = p - O_;
    if (f.sx == 0 && f.sy == -1) return q.x + hx_;                           // bottom
    double s = 2.0 * hx_;
    if (f.sx == 1 && f.sy == -1) {                                           // BR corner
        double th = std::atan2(q.y + hy_, q.x - hx_);                        // in [-pi/2, 0]
        return s + (th + 0.5 * M_PI) * d;
    }
    s += qd;
    if (f.sx == 1 && f.sy == 0) return s + (q.y + hy_);                      // right
    s += 2.0 * hy_;
    if (f.sx == 1 && f.sy == 1) {                                            // TR corner
        double th = std::atan2(q.y - hy_, q.x - hx_);                        // in [0, pi/2]
        return s + th * d;
    }
    s += qd;
    if (f.sx == 0 && f.sy == 1) return s + (hx_ - q.x);                      // top
    s += 2.0 * hx_;
    if (f.sx == -1 && f.sy == 1) {                                           // TL corner
        double th = std::atan2(q.y - hy_, q.x + hx_);                        // [pi/2, pi]
        return s + (th - 0.5 * M_PI) * d;
    }
    s += qd;
    if (f.sx == -1 && f.sy == 0) return s + (hy_ - q.y);                     // left
    s += 2.0 * hy_;
    {                                                                        // BL corner
        double th = std::atan2(q.y + hy_, q.x + hx_);                        // [-pi, -pi/2]
        return s + (th + M_PI) * d;
    }
}

Vec2 BuildingBlock::point_at(double d, double s) const {
    double P = perimeter(d);
    s = std::fmod(s, P);
    if (s < 0) s += P;
    double qd = 0.5 * M_PI * d;
    if (s < 2.0 * hx_) return O_ + Vec2{-hx_ + s, -hy_ - d};
    s -= 2.0 * hx_;
    if (s < qd) {
        double th = -0.5 * M_PI + s / d;
        return O_ + Vec2{hx_ + d * std::cos(th), -hy_ + d * std::sin(th)};
    }
    s -= qd;
    if (s < 2.0 * hy_) return O_ + Vec2{hx_ + d, -hy_ + s};
    s -= 2.0 * hy_;
    if (s < qd) {
        double th = s / d;
        return O_ + Vec2{hx_ + d * std::cos(th), hy_ + d * std::sin(th)};
    }
    s -= qd;
    if (s < 2.0 * hx_) return O_ + Vec2{hx_ - s, hy_ + d};
    s -= 2.0 * hx_;
    if (s < qd) {
        double th = 0.5 * M_PI + s / d;
        return O_ + Vec2{-hx_ + d * std::cos(th), hy_ + d * std::sin(th)};
    }
    s -= qd;
    if (s < 2.0 * hy_) return O_ + Vec2{-hx_ - d, hy_ - s};
    s -= 2.0 * hy_;
    double th = M_PI + s / d;
    return O_ + Vec2{-hx_ + d * std::cos(th), -hy_ + d * std::sin(th)};
}

double BuildingBlock::transit_time(Vec2 from, Vec2 to) const {
    double d1 = feature(from).d, d2 = feature(to).d;
    if (std::abs(d1 - d2) > 1e-9 * a_)
        throw std::invalid_argument("transit_time: points on different streamlines");
    double P = perimeter(d1);
    double ds = std::fmod(arc_coord(to) - arc_coord(from), P);
    if (ds < 0) ds += P;
    return ds / v_;
}

double BuildingBlock::period(Vec2 p) const { return perimeter(feature(p).d) / v_; }

}  // namespace advdiff
