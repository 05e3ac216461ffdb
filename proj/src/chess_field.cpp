#include "advdiff/fields.hpp"

#include <cmath>
#include <stdexcept>

namespace advdiff {

namespace {

// square wave: +1 on [0,1/2), -1 on [1/2,1), extended periodically
double square_wave(double z) {
    double f = z - std::floor(z);
    return f < 0.5 ? 1.0 : -1.0;
}

// wrap to [0,1); the tile counts per unit length are even, so parities are
// wrap-independent
double frac01(double z) { return z - std::floor(z); }

bool even_floor(double z) {
    long long k = static_cast<long long>(std::floor(z));
    return (k % 2) == 0;
}

}  // namespace

ChessField::ChessField(const ChessSchedule& s, int n) : s_(s), n_(n), T_(s.T) {
    if (n < 0 || n > s.n)
        throw std::runtime_error("ChessField: level outside schedule range");
    double ratio = s.a[0] / s.a[1];
    if (std::abs(ratio - std::llround(ratio)) > 1e-12)
        throw std::runtime_error("ChessField: non-integer tile refinement");
}

Vec2 ChessField::mix_field(int q, Vec2 x) const {
    const auto qi = static_cast<size_t>(q);
    double aq = s_.a[qi], aq1 = s_.a[qi + 1];
    double amp = 0.5 * std::pow(aq, 1.0 - s_.params.gamma);
    double x2 = frac01(x.y);
    double sgn = even_floor(x2 / aq) ? -1.0 : 1.0;
    return {sgn * amp * square_wave(x2 / (2.0 * aq1)), 0.0};
}

Vec2 ChessField::refine_field(int q, Vec2 x) const {
    const auto qi = static_cast<size_t>(q);
    double aq = s_.a[qi], aq1 = s_.a[qi + 1];
    double amp = aq1 * std::pow(aq, -s_.params.gamma);
    double x1 = frac01(x.x);
    double w = square_wave(x1 / (2.0 * aq1));
    // even columns rise on the tiles where the wave is low, odd columns on
    // the tiles where it is high
    double profile = even_floor((x1 + 0.5 * aq) / aq) ? 0.5 * (1.0 - w)
                                                      : 0.5 * (1.0 + w);
    return {0.0, amp * profile};
}

Vec2 ChessField::swap_field(int q) const {
    return {std::pow(s_.a[static_cast<size_t>(q)], 1.0 - s_.params.gamma), 0.0};
}

ChessTag ChessField::tag(double t) const {
    ChessTag out;
    if (t < 0.0 || t > T_) return out;
    bool second_half = t > 0.5 * T_;
    double u = second_half ? T_ - t : t;  // position within the first half
    // level cap: b_n vanishes on (t_n, T - t_n)
    if (u >= s_.t[static_cast<size_t>(n_)] || n_ == 0) return out;
    int q = 0;
    while (q + 1 < n_ && s_.t[static_cast<size_t>(q + 1)] <= u) ++q;
    double aqg = std::pow(s_.a[static_cast<size_t>(q)], s_.params.gamma);
    int i = static_cast<int>((u - s_.t[static_cast<size_t>(q)]) / aqg);
    i = std::max(0, std::min(2, i));
    out.q = q;
    if (!second_half) {
        out.phase = (i == 0)   ? ChessPhase::still
                    : (i == 1) ? ChessPhase::mix
                               : ChessPhase::refine;
    } else {
        out.phase = (i == 0)   ? ChessPhase::swap
                    : (i == 1) ? ChessPhase::unmix
                               : ChessPhase::unrefine;
    }
    return out;
}

Vec2 ChessField::eval(double t, Vec2 x) const {
    ChessTag tg = tag(t);
    switch (tg.phase) {
        case ChessPhase::mix: return mix_field(tg.q, x);
        case ChessPhase::refine: return refine_field(tg.q, x);
        case ChessPhase::swap: return swap_field(tg.q);
        case ChessPhase::unmix: return -1.0 * mix_field(tg.q, x);
        case ChessPhase::unrefine: return -1.0 * refine_field(tg.q, x);
        default: return {0.0, 0.0};
    }
}

double ChessField::sup_speed(double t) const {
    ChessTag tg = tag(t);
    if (tg.phase == ChessPhase::inactive || tg.phase == ChessPhase::still)
        return 0.0;
    const auto qi = static_cast<size_t>(tg.q);
    double aq = s_.a[qi];
    switch (tg.phase) {
        case ChessPhase::swap: return std::pow(aq, 1.0 - s_.params.gamma);
        case ChessPhase::mix:
        case ChessPhase::unmix: return 0.5 * std::pow(aq, 1.0 - s_.params.gamma);
        default: return s_.a[qi + 1] * std::pow(aq, -s_.params.gamma);
    }
}

}  // namespace advdiff
