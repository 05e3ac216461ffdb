#include "advdiff/params.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "advdiff/block.hpp"

namespace advdiff {

namespace {

void add_check(ValidationReport& r, const std::string& name, double lhs, double rhs) {
    CheckItem c;
    c.name = name;
    c.lhs = lhs;
    c.rhs = rhs;
    c.margin = rhs - lhs;
    c.pass = lhs < rhs;
    r.checks.push_back(c);
}

// The unique integer in [x, x+1]; on a tie (x integral) take the smaller.
long long integer_in_unit_interval(double x) {
    double fl = std::floor(x);
    if (fl == x) return static_cast<long long>(fl);
    return static_cast<long long>(std::ceil(x));
}

}  // namespace

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (const auto& c : checks)
        os << (c.pass ? "  [ok]   " : "  [FAIL] ") << c.name << "   (lhs=" << c.lhs
           << ", rhs=" << c.rhs << ", margin=" << c.margin << ")\n";
    os << (pass ? "all hypotheses hold" : "hypothesis failure") << "\n";
    return os.str();
}

ValidationReport validate_loop_hypotheses(const LoopParams& P) {
    ValidationReport r;
    add_check(r, "p positive: 0 < p", 0.0, P.p);
    add_check(r, "integrability range: p < 2", P.p, 2.0);
    add_check(r, "delta positive: 0 < delta", 0.0, P.delta);
    add_check(r, "delta < 1", P.delta, 1.0);
    add_check(r, "epsilon positive: 0 < epsilon", 0.0, P.epsilon);
    add_check(r, "a0 positive: 0 < a0", 0.0, P.a0);
    add_check(r, "a0 < 1/8", P.a0, 0.125);
    add_check(r, "(Hdelta) p < (2+delta)(1-delta)/(1+delta)", P.p,
              (2.0 + P.delta) * (1.0 - P.delta) / (1.0 + P.delta));
    add_check(r, "(Halpha) 1/(1-delta) < alpha", 1.0 / (1.0 - P.delta), P.alpha);
    add_check(r, "(Halpha) alpha < (2+delta)/(p(1+delta))", P.alpha,
              (2.0 + P.delta) / (P.p * (1.0 + P.delta)));
    add_check(r, "(Heps) epsilon < delta(alpha-1)/(1+delta)", P.epsilon,
              P.delta * (P.alpha - 1.0) / (1.0 + P.delta));
    add_check(r, "(Heps) epsilon < delta^2/8", P.epsilon, P.delta * P.delta / 8.0);
    r.pass = true;
    for (const auto& c : r.checks) r.pass = r.pass && c.pass;
    return r;
}

ValidationReport validate_chess_hypotheses(const ChessParams& P) {
    ValidationReport r;
    add_check(r, "p range: 1 < p", 1.0, P.p);
    add_check(r, "p range: p < 2", P.p, 2.0);
    add_check(r, "delta positive: 0 < delta", 0.0, P.delta);
    add_check(r, "a0 positive: 0 < a0", 0.0, P.a0);
    add_check(r, "a0 <= 1/8", P.a0, 0.125 * (1.0 + 1e-12));
    double pp = P.p / (P.p - 1.0);
    add_check(r, "(Hdelta') 2(1+delta)^2 < p/(p-1)", 2.0 * (1.0 + P.delta) * (1.0 + P.delta), pp);
    add_check(r, "(Hgamma) 2(1+delta)^2 < gamma", 2.0 * (1.0 + P.delta) * (1.0 + P.delta), P.gamma);
    add_check(r, "(Hgamma) gamma < p/(p-1)", P.gamma, pp);
    // dyadic layout so every grid with a_{n+1} | h resolves the tiles exactly
    double half_inv = 0.5 / P.a0;
    bool dyadic = std::abs(half_inv - std::round(half_inv)) < 1e-12;
    add_check(r, "tile alignment: 1/(2 a0) integer", dyadic ? 0.0 : 1.0, 0.5);
    r.pass = true;
    for (const auto& c : r.checks) r.pass = r.pass && c.pass;
    return r;
}

// ---------------------------------------------------------------------------

namespace {

// Full decreasing width sequence, extended far enough that the tail sums
// converge to machine precision.
struct WidthSeq {
    std::vector<double> a;       // a_0, a_1, ...
    std::vector<double> suffix;  // suffix[q] = sum_{k>=q} 2 a_k
    std::vector<long long> m;    // m_q = a_q / a_{q+1}
};

WidthSeq extend_widths(double a0, double delta, int need) {
    WidthSeq W;
    W.a.push_back(a0);
    while ((int)W.a.size() < need + 2 || W.a.back() > 1e-30) {
        double aq = W.a.back();
        long long mq = integer_in_unit_interval(std::pow(aq, -delta));
        if (mq < 2) mq = 2;  // a < 1/8 gives a^-delta > 1 but guard anyway
        W.m.push_back(mq);
        W.a.push_back(aq / (double)mq);
        if (W.a.size() > 4000) break;
    }
    W.suffix.assign(W.a.size() + 1, 0.0);
    for (int k = (int)W.a.size() - 1; k >= 0; --k)
        W.suffix[k] = W.suffix[k + 1] + 2.0 * W.a[k];
    return W;
}

}  // namespace

double LoopSchedule::tail(int q) const {
    // suffix sums were frozen into tail_ at build time
    if (q < -1 || q >= (int)tails_.size() - 1) throw std::out_of_range("tail(q)");
    return tails_[q + 1];
}

Rect LoopSchedule::transfer_zone(int q) const {
    double ap = (q == 0) ? a_geom : a[q - 1];
    Vec2 Oq = O[q], Oq1 = O[q + 1];
    return Rect{{Oq1.x - 2.0 * a[q] - a[q + 1], Oq.y - 2.0 * ap - a[q]},
                {Oq1.x - 2.0 * a[q], Oq.y - 2.0 * ap}};
}

Rect LoopSchedule::glue_handoff_zone(int lvl) const {
    // The glue pipe is laid out so that its grab band coincides with the
    // transfer zone of the deepest level -- the glue plays the role of the
    // next pipe for the truncated assembly.
    return transfer_zone(lvl);
}

Rect LoopSchedule::glue_exit_zone(int lvl) const {
    const double eps = params.epsilon;
    double an = a[lvl], ag = a[lvl + 1];
    double hw = 0.5 * (an - 8.0 * std::pow(an, 1.0 + eps));
    if (hw <= 0.0) hw = 0.25 * an;  // accessible-scale clamp, see run reports
    if (lvl % 2 == 0) {
        // bottom band of the glue, centred on the y-axis
        double yb = glue_O[lvl].y - 0.5 * glue_lb[lvl];
        return Rect{{-hw, yb - ag}, {hw, yb}};
    }
    // left band of the glue, centred on the x-axis
    double xb = glue_O[lvl].x - 0.5 * glue_l[lvl];
    return Rect{{xb - ag, -hw}, {xb, hw}};
}

Rect LoopSchedule::start_rect() const {
    Rect s0 = transfer_zone(0);
    return Rect{{s0.lo.x - a[0], s0.lo.y}, {s0.lo.x, s0.hi.y}};
}

LoopSchedule build_loop_schedule(const LoopParams& P) {
    ValidationReport rep = validate_loop_hypotheses(P);
    if (!rep.pass)
        throw std::runtime_error("loop schedule: hypothesis failure\n" + rep.summary());
    if (P.n_max < 0 || P.n_max > 8)
        throw std::runtime_error("loop schedule: n_max out of supported range [0,8]");
    if (!(P.zeta >= 1.0))
        throw std::runtime_error("loop schedule: zeta must be >= 1");

    LoopSchedule S;
    S.params = P;
    S.n = P.n_max;
    const int n = S.n;

    WidthSeq W = extend_widths(P.a0, P.delta, n + 2);
    S.a.assign(W.a.begin(), W.a.begin() + n + 2);
    S.m.assign(W.m.begin(), W.m.begin() + n + 2);
    S.a_geom = S.a[0] + S.a[1];
    // tails_[q+1] = sum_{k>=q} 2 a_k, with the q = -1 entry including a_{-1}
    S.tails_.assign(n + 4, 0.0);
    for (int q = -1; q <= n + 2; ++q)
        S.tails_[q + 1] = (q == -1) ? W.suffix[0] + 2.0 * S.a_geom : W.suffix[q];

    // Speeds: v_0 = a_0^-alpha; deeper speeds satisfy three floors at once --
    // the bare power law, the integer switching-period ratio, and the window
    // separation factor zeta -- via the integer M_q.
    S.v.assign(n + 2, 0.0);
    S.M.assign(n + 2, 0);
    S.v_nominal.assign(n + 2, 0.0);
    S.v[0] = std::pow(S.a[0], -P.alpha);
    S.v_nominal[0] = S.v[0];
    for (int q = 1; q <= n + 1; ++q) {
        S.v_nominal[q] = std::pow(S.a[q], -P.alpha);
        double mq = (double)S.m[q];
        double need_pow = mq * S.v_nominal[q] / S.v[q - 1];
        double need_zeta = P.zeta * (double)S.m[q - 1] * mq;
        double need = std::max({(double)S.m[q] + 1.0, need_pow, need_zeta});
        S.M[q] = (long long)std::ceil(need - 1e-12);
        S.v[q] = (double)S.M[q] * S.v[q - 1] / mq;
    }

    S.tau.assign(n + 2, 0.0);
    for (int q = 1; q <= n + 1; ++q) S.tau[q] = S.a[q] / S.v[q - 1];

    // Side lengths and centres (master copy, quadrant II).
    S.l.assign(n + 2, 0.0);
    S.O.assign(n + 2, Vec2{});
    for (int q = 0; q <= n + 1; ++q) {
        S.l[q] = 4.0 * ((q == 0) ? S.a_geom : S.a[q - 1]);
        double s = S.tail(q - 1);
        S.O[q] = {-s, s};
    }

    // Glue loops, one per truncation level.
    S.glue_l.assign(n + 1, 0.0);
    S.glue_lb.assign(n + 1, 0.0);
    S.glue_O.assign(n + 1, Vec2{});
    for (int lvl = 0; lvl <= n; ++lvl) {
        // The long side spans from the deepest transfer band to its mirror
        // image across the symmetry axis; the short side matches the side of
        // the (virtual) next pipe, so the grab band of the glue coincides
        // with transfer_zone(lvl).
        double long_side = 2.0 * S.tail(lvl) + 4.0 * S.a[lvl];
        double short_side = 4.0 * S.a[lvl];
        if (lvl % 2 == 0) {
            S.glue_l[lvl] = long_side;
            S.glue_lb[lvl] = short_side;
            S.glue_O[lvl] = {0.0, S.tail(lvl)};
        } else {
            S.glue_l[lvl] = short_side;
            S.glue_lb[lvl] = long_side;
            S.glue_O[lvl] = {-S.tail(lvl), 0.0};
        }
    }

    // Transfer times, pipe q backward from S_q into S_{q-1}: the smallest
    // duration after which the whole backward image of S_q has crossed the
    // downstream edge of S_{q-1}.  With this calibration the extra overshoot
    // beta_{q+1} tau_{q+1} sweeps the landing across S_{q-1} starting from
    // that edge.  Maximised over lanes (band depths) and arc offsets of S_q.
    S.t_travel.assign(n + 1, 0.0);
    S.t_cum.assign(n + 1, 0.0);
    for (int q = 1; q <= n; ++q) {
        BuildingBlock pipe(S.l[q], S.l[q], S.a[q], S.v[q], S.O[q]);
        Rect sq = S.transfer_zone(q);
        Rect sp = S.transfer_zone(q - 1);
        double tmax = 0.0;
        for (double lane : {1.02, 1.5, 1.98}) {
            double d = lane * S.a[q];
            // lane d runs along y = O.y - hy - d in the bottom band and along
            // x = O.x - hx - d up the left band; entry into S_{q-1} is at the
            // lower edge of that zone
            double y0 = S.O[q].y - pipe.hy() - d;
            for (double xs : {sq.lo.x, sq.hi.x}) {
                Vec2 from{xs, y0};
                Vec2 tgt{S.O[q].x - pipe.hx() - d, sp.lo.y};
                double P1 = pipe.perimeter(d);
                double ds = std::fmod(pipe.arc_coord(from) - pipe.arc_coord(tgt), P1);
                if (ds < 0) ds += P1;
                tmax = std::max(tmax, ds / S.v[q]);
            }
        }
        S.t_travel[q] = tmax;
        double bound = 6.0 * ((q == 1) ? S.a_geom : S.a[q - 1]) / S.v[q];
        if (S.t_travel[q] > bound)
            throw std::runtime_error("loop schedule: transfer time exceeds 6 a_{q-1}/v_q");
        S.t_cum[q] = S.t_cum[q - 1] + S.t_travel[q];
    }

    // Glue times: handoff centre to its mirror image, exact arc length.  The
    // glue block is mirror-symmetric (x -> -x for even levels, y -> -y for
    // odd), so the half-time lands exactly on the exit zone on the axis.
    S.t_glue.assign(n + 1, 0.0);
    for (int lvl = 0; lvl <= n; ++lvl) {
        BuildingBlock g(S.glue_l[lvl], S.glue_lb[lvl], S.a[lvl + 1], S.v[lvl + 1],
                        S.glue_O[lvl]);
        Vec2 p = S.transfer_zone(lvl).center();
        Vec2 mir = (lvl % 2 == 0) ? Vec2{-p.x, p.y} : Vec2{p.x, -p.y};
        S.t_glue[lvl] = g.transit_time(p, mir);
        double per = g.period(p);
        if (S.t_glue[lvl] > per)
            throw std::runtime_error("loop schedule: glue time exceeds loop period");
    }

    // Horizons.
    S.T_n.assign(n + 1, 0.0);
    for (int lvl = 0; lvl <= n; ++lvl) {
        double t = 2.0 * (S.a[0] / S.a[1]) * S.tau[1];
        for (int k = 1; k <= lvl; ++k) t += 2.0 * S.t_travel[k];
        for (int i = 1; i <= lvl + 1; ++i) {
            double ai2 = (i >= 2) ? S.a[i - 2] : S.a[0];  // bracket convention a_{-1} = a_0
            t += (ai2 / S.a[i]) * S.tau[i];
        }
        t += S.t_glue[lvl];
        S.T_n[lvl] = t;
        if (lvl > 0 && !(S.T_n[lvl] > S.T_n[lvl - 1])) {
            // The deep glue time shrinks roughly like tail(lvl)/v_{lvl+1},
            // which at accessible widths can outrun the growth of the travel
            // terms.  Only the convergence of T_n matters downstream, so a
            // non-monotone step is recorded, not fatal.
            S.horizons_monotone = false;
        }
    }
    S.T = *std::max_element(S.T_n.begin(), S.T_n.end()) + 5.0 * S.a[0] / S.v[0];

    if (P.rescale_time && S.T >= 1.0) {
        double scale = 0.5 / S.T;
        S.time_scale = scale;
        for (auto& x : S.v) x /= scale;
        for (auto& x : S.tau) x *= scale;
        for (auto& x : S.t_travel) x *= scale;
        for (auto& x : S.t_cum) x *= scale;
        for (auto& x : S.t_glue) x *= scale;
        for (auto& x : S.T_n) x *= scale;
        S.T *= scale;
    }
    if (S.T >= 1.0)
        throw std::runtime_error("loop schedule: T >= 1 (enable rescale_time)");

    // Geometric sanity: every copy of the assembly must fit well inside the
    // fundamental domain (support diameter < 1/2).
    double ext = S.tail(-1) + S.l[0] / 2.0 + 2.0 * S.a[0];
    S.extent = ext;
    if (ext > 0.25 + 1e-12)
        throw std::runtime_error("loop schedule: assembly extent exceeds 1/4; reduce a0");

    double suma = 0.0;
    for (double aq : W.a) suma += aq;
    if (suma > 2.0) throw std::runtime_error("loop schedule: sum a_k > 2");

    return S;
}

// ---------------------------------------------------------------------------

ChessSchedule build_chess_schedule(const ChessParams& P) {
    ValidationReport rep = validate_chess_hypotheses(P);
    if (!rep.pass)
        throw std::runtime_error("chess schedule: hypothesis failure\n" + rep.summary());
    if (P.n_max < 0 || P.n_max > 12)
        throw std::runtime_error("chess schedule: n_max out of supported range [0,12]");

    ChessSchedule S;
    S.params = P;
    S.n = P.n_max;
    S.a.resize(S.n + 2);
    for (int q = 0; q <= S.n + 1; ++q) S.a[q] = P.a0 * std::pow(0.5, q);
    S.t.resize(S.n + 2, 0.0);
    for (int q = 1; q <= S.n + 1; ++q) S.t[q] = S.t[q - 1] + 3.0 * std::pow(S.a[q - 1], P.gamma);

    // T = 2 lim t_q; the tail past any K is a geometric series with ratio
    // 2^-gamma, summed exactly, and bracketed by the majorant for the record.
    int K = S.n + 1;
    double r = std::pow(0.5, P.gamma);
    double tail_exact = 3.0 * std::pow(S.a[K], P.gamma) / (1.0 - r);
    S.T_low = 2.0 * S.t[K];
    S.T_high = 2.0 * (S.t[K] + tail_exact);
    S.T = 2.0 * (S.t[K] + tail_exact);
    return S;
}

// ---------------------------------------------------------------------------

LpBudget lp_budget(const LoopSchedule& S) {
    const LoopParams& P = S.params;
    LpBudget B;
    for (int q = 0; q <= S.n; ++q) {
        double hx = 0.5 * S.l[q] - S.a[q];
        double perim = 4.0 * hx + 4.0 * hx;  // square pipes: hx == hy
        double area = perim * S.a[q] + 3.0 * M_PI * S.a[q] * S.a[q];
        B.terms.push_back(4.0 * S.v[q] * std::pow(area, 1.0 / P.p));  // 4 copies
    }
    {
        int lvl = S.n;
        double hx = 0.5 * S.glue_l[lvl] - S.a[lvl + 1];
        double hy = 0.5 * S.glue_lb[lvl] - S.a[lvl + 1];
        double perim = 4.0 * hx + 4.0 * hy;
        double area = perim * S.a[lvl + 1] + 3.0 * M_PI * S.a[lvl + 1] * S.a[lvl + 1];
        B.terms.push_back(S.v[lvl + 1] * std::pow(area, 1.0 / P.p));
    }
    for (double t : B.terms) B.total += t;
    // decay exponent of v_q |supp|^{1/p} ~ a_q^{(2+delta)/p - alpha(1+delta)/1}
    B.exponent = (2.0 + P.delta) / P.p - P.alpha * (1.0 + P.delta);
    B.finite = B.exponent > 0.0;
    return B;
}

LpBudget lp_budget(const ChessSchedule& S) {
    const ChessParams& P = S.params;
    LpBudget B;
    for (int q = 0; q <= S.n; ++q) {
        double dur = std::pow(S.a[q], P.gamma);
        double swap_amp = std::pow(S.a[q], 1.0 - P.gamma);
        double shear_amp = 0.5 * swap_amp;
        double lift_amp = S.a[q + 1] * std::pow(S.a[q], -P.gamma);
        double term = dur * (std::pow(swap_amp, P.p) + 2.0 * std::pow(shear_amp, P.p) +
                             2.0 * std::pow(lift_amp, P.p));
        B.terms.push_back(term);  // p-th power contribution of stage q (fwd+bwd)
        B.total += 2.0 * term;
    }
    B.exponent = P.gamma + (1.0 - P.gamma) * P.p;
    B.finite = B.exponent > 0.0;
    return B;
}

}  // namespace advdiff
