#pragma once
// Small planar geometry helpers shared by every module.

#include <cmath>
#include <algorithm>

namespace advdiff {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
// 90 degree counterclockwise rotation (the "perp" of a gradient).
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

// Axis reflections used when assembling the four quadrant copies of a field.
// 0: identity, 1: (x,y)->(-x,y), 2: (x,y)->(-x,-y), 3: (x,y)->(x,-y)
inline Vec2 reflect(int code, Vec2 p) {
    switch (code) {
        case 1: return {-p.x, p.y};
        case 2: return {-p.x, -p.y};
        case 3: return {p.x, -p.y};
        default: return p;
    }
}
// Velocity transforms paired with the point reflections above so that the
// composed field stays divergence free:  w'(x) = S_k w(R_k x).
inline Vec2 reflect_vel(int code, Vec2 w) {
    switch (code) {
        case 1: return {w.x, -w.y};
        case 2: return {-w.x, -w.y};
        case 3: return {-w.x, w.y};
        default: return w;
    }
}

// Wrap a coordinate into the fundamental domain [-1/2, 1/2) of the unit torus.
inline double wrap_unit(double t) {
    double r = t - std::floor(t + 0.5);
    if (r >= 0.5) r -= 1.0;  // guards the floor rounding edge case
    return r;
}
inline Vec2 wrap_torus(Vec2 p) { return {wrap_unit(p.x), wrap_unit(p.y)}; }

struct Rect {  // axis-aligned, closed-left/bottom open-right/top by convention
    Vec2 lo, hi;
    bool contains(Vec2 p) const {
        return p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y;
    }
    Vec2 center() const { return {0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)}; }
    double width() const { return hi.x - lo.x; }
    double height() const { return hi.y - lo.y; }
    double area() const { return width() * height(); }
    // Shrink by margin m on every side (restriction "Z[m]" sets).
    Rect shrunk(double m) const { return {{lo.x + m, lo.y + m}, {hi.x - m, hi.y - m}}; }
    bool empty() const { return hi.x <= lo.x || hi.y <= lo.y; }
    double inradius() const { return 0.5 * std::min(width(), height()); }
};

}  // namespace advdiff
