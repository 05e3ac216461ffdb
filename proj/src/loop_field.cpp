#include "advdiff/fields.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advdiff {

TimeWindows TimeWindows::periodic(double offset, double period, double width) {
    if (!(period > 0.0) || !(width > 0.0))
        throw std::runtime_error("TimeWindows: period and width must be positive");
    TimeWindows w;
    if (width >= period) return w;  // merged, always on
    w.offset = offset;
    w.period = period;
    w.width = width;
    w.always_on = false;
    return w;
}

bool TimeWindows::active(double t) const {
    if (always_on) return true;
    double s = t - offset;
    double r = s - period * std::floor(s / period);
    return r < width;
}

double TimeWindows::next_edge(double t) const {
    if (always_on) return std::numeric_limits<double>::infinity();
    double s = t - offset;
    double j = std::floor(s / period);
    double r = s - period * j;
    double edge = (r < width) ? offset + j * period + width
                              : offset + (j + 1.0) * period;
    // guard against landing exactly on t through rounding
    if (edge <= t) edge = offset + (j + 1.0) * period + (r < width ? 0.0 : width);
    return edge;
}

// ---------------------------------------------------------------------------

namespace {

// Velocity transform attached to each point reflection (see geometry.hpp);
// pipes in reflected quadrants carry the co-transformed velocity so the
// assembled stream function is the plain sum of the local ones.
Vec2 co_vel(int code, Vec2 w) { return reflect_vel(code, w); }

}  // namespace

LoopField::LoopField(const BuildingBlock& b, double horizon) : n_(0) {
    Tn_ = horizon;
    copies_.push_back(LoopCopy{b, TimeWindows::always(), 0, false, 0, false});
}

LoopField::LoopField(const LoopSchedule& s, int n) : n_(n) {
    if (n < 0 || n > s.n)
        throw std::runtime_error("LoopField: level outside schedule range");
    Tn_ = s.T_n[static_cast<size_t>(n)];

    for (int q = 0; q <= n; ++q) {
        const auto qi = static_cast<size_t>(q);
        BuildingBlock blk(s.l[qi], s.l[qi], s.a[qi], s.v[qi], s.O[qi]);
        TimeWindows win =
            (q == 0) ? TimeWindows::always()
                     : TimeWindows::periodic(
                           s.t_cum[qi - 1], s.tau[qi],
                           (s.t_cum[qi] - s.t_cum[qi - 1]) + s.a[qi - 1] / s.v[qi]);
        for (int code = 0; code < 4; ++code) {
            LoopCopy c{blk, win, code, code != 0, q, false};
            copies_.push_back(c);
        }
    }
    const auto ni = static_cast<size_t>(n);
    BuildingBlock glue(s.glue_l[ni], s.glue_lb[ni], s.a[ni + 1], s.v[ni + 1],
                       s.glue_O[ni]);
    TimeWindows gwin =
        TimeWindows::periodic(s.t_cum[ni], s.tau[ni + 1], s.t_glue[ni]);
    copies_.push_back(LoopCopy{glue, gwin, 0, false, n + 1, true});

    if (max_support_overlap(192) > 2)
        throw std::runtime_error(
            "LoopField: more than two block supports overlap");
}

Vec2 LoopField::eval(double t, Vec2 x) const {
    Vec2 p = wrap_torus(x);
    Vec2 out{0.0, 0.0};
    for (const auto& c : copies_) {
        double tc = c.mirrored_time ? Tn_ - t : t;
        if (!c.windows.active(tc)) continue;
        Vec2 w = c.block.eval(reflect(c.reflection, p));
        if (w.x != 0.0 || w.y != 0.0) out = out + co_vel(c.reflection, w);
    }
    return out;
}

double LoopField::stream(double t, Vec2 x) const {
    Vec2 p = wrap_torus(x);
    double psi = 0.0;
    for (const auto& c : copies_) {
        double tc = c.mirrored_time ? Tn_ - t : t;
        if (!c.windows.active(tc)) continue;
        psi += c.block.stream(reflect(c.reflection, p));
    }
    return psi;
}

double LoopField::sup_speed(double t) const {
    double v = 0.0;
    for (const auto& c : copies_) {
        double tc = c.mirrored_time ? Tn_ - t : t;
        if (c.windows.active(tc)) v = std::max(v, c.block.v());
    }
    return v;
}

std::vector<int> LoopField::active_copies(double t) const {
    std::vector<int> out;
    for (size_t i = 0; i < copies_.size(); ++i) {
        double tc = copies_[i].mirrored_time ? Tn_ - t : t;
        if (copies_[i].windows.active(tc)) out.push_back(static_cast<int>(i));
    }
    return out;
}

int LoopField::max_support_overlap(int samples_per_axis) const {
    // Supports all live well inside the fundamental domain (the schedule
    // enforces extent <= 1/4), so a uniform sample over it suffices.
    int worst = 0;
    double h = 1.0 / samples_per_axis;
    for (int i = 0; i < samples_per_axis; ++i) {
        for (int j = 0; j < samples_per_axis; ++j) {
            Vec2 p{-0.5 + (i + 0.5) * h, -0.5 + (j + 0.5) * h};
            int hits = 0;
            for (const auto& c : copies_) {
                auto f = c.block.feature(reflect(c.reflection, p));
                if (f.zone == 1) ++hits;
            }
            worst = std::max(worst, hits);
        }
    }
    return worst;
}

double glue_time(const LoopSchedule& s, int n) {
    if (n < 0 || n > s.n)
        throw std::runtime_error("glue_time: level outside schedule range");
    return s.t_glue[static_cast<size_t>(n)];
}

// ---------------------------------------------------------------------------

double divergence_defect(const std::function<double(Vec2)>& stream, int cells) {
    if (cells < 2) throw std::runtime_error("divergence_defect: cells < 2");
    double h = 1.0 / cells;
    // psi at cell corners; the net outward flux of a cell is the oriented sum
    // of the four face fluxes, each exactly psi(end) - psi(start).
    std::vector<double> psi(static_cast<size_t>(cells + 1) *
                            static_cast<size_t>(cells + 1));
    for (int i = 0; i <= cells; ++i)
        for (int j = 0; j <= cells; ++j)
            psi[static_cast<size_t>(i) * (cells + 1) + j] =
                stream({-0.5 + i * h, -0.5 + j * h});
    auto P = [&](int i, int j) {
        return psi[static_cast<size_t>(i) * (cells + 1) + j];
    };
    double worst = 0.0;
    for (int i = 0; i < cells; ++i) {
        for (int j = 0; j < cells; ++j) {
            // counter-clockwise corner order: flux(face) = psi difference
            double flux = (P(i + 1, j) - P(i, j)) + (P(i + 1, j + 1) - P(i + 1, j)) +
                          (P(i, j + 1) - P(i + 1, j + 1)) + (P(i, j) - P(i, j + 1));
            worst = std::max(worst, std::abs(flux) / h);
        }
    }
    return worst;
}

double divergence_defect_midpoint(const std::function<Vec2(Vec2)>& velocity,
                                  int cells) {
    if (cells < 2) throw std::runtime_error("divergence_defect: cells < 2");
    double h = 1.0 / cells;
    // one normal sample per face; faces are shared so sample them once
    std::vector<double> fx(static_cast<size_t>(cells + 1) * cells);  // u at vertical faces
    std::vector<double> fy(static_cast<size_t>(cells) * (cells + 1));  // v at horizontal faces
    for (int i = 0; i <= cells; ++i)
        for (int j = 0; j < cells; ++j)
            fx[static_cast<size_t>(i) * cells + j] =
                velocity({-0.5 + i * h, -0.5 + (j + 0.5) * h}).x;
    for (int i = 0; i < cells; ++i)
        for (int j = 0; j <= cells; ++j)
            fy[static_cast<size_t>(i) * (cells + 1) + j] =
                velocity({-0.5 + (i + 0.5) * h, -0.5 + j * h}).y;
    double worst = 0.0;
    for (int i = 0; i < cells; ++i) {
        for (int j = 0; j < cells; ++j) {
            double flux = h * (fx[static_cast<size_t>(i + 1) * cells + j] -
                               fx[static_cast<size_t>(i) * cells + j] +
                               fy[static_cast<size_t>(i) * (cells + 1) + j + 1] -
                               fy[static_cast<size_t>(i) * (cells + 1) + j]);
            worst = std::max(worst, std::abs(flux) / h);
        }
    }
    return worst;
}

double lp_norm_sample(const std::function<Vec2(Vec2)>& velocity, double p,
                      int grid_n) {
    if (grid_n < 64) throw std::runtime_error("lp_norm_sample: grid_n < 64");
    double h = 1.0 / grid_n;
    double acc = 0.0;
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j)
            acc += std::pow(
                norm(velocity({-0.5 + (i + 0.5) * h, -0.5 + (j + 0.5) * h})), p);
    return std::pow(acc * h * h, 1.0 / p);
}

double block_l1_mass(const BuildingBlock& b) {
    // band area: two straight strips per axis of width a plus four quarter
    // annuli between radii a and 2a
    double pi = 3.14159265358979323846;
    double area = 2.0 * b.a() * (b.l() - 2.0 * b.a()) +
                  2.0 * b.a() * (b.lb() - 2.0 * b.a()) +
                  pi * (4.0 * b.a() * b.a() - b.a() * b.a());
    return b.v() * area;
}

}  // namespace advdiff
