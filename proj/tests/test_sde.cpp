#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "advdiff/sde.hpp"

using namespace advdiff;

namespace {

LoopParams gated_loop(int n_max) {
    LoopParams P;
    P.p = 1.5;
    P.delta = 0.1;
    P.alpha = 1.2;
    P.epsilon = 0.001;
    P.a0 = 0.02;
    P.n_max = n_max;
    P.zeta = 32.0;
    return P;
}

ChessParams desk_chess(int n_max) {
    ChessParams P;
    P.p = 1.5;
    P.delta = 0.1;
    P.gamma = 2.7;
    P.a0 = 0.0625;
    P.n_max = n_max;
    return P;
}

Drift zero_drift(double horizon) {
    return {[](double, Vec2) { return Vec2{0.0, 0.0}; }, horizon};
}

}  // namespace

TEST_CASE("counter-based gaussians: moments and determinism") {
    const int N = 100000;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < N; ++i) {
        Vec2 g = gauss_pair(42, static_cast<std::uint64_t>(i), 7);
        s1 += g.x + g.y;
        s2 += g.x * g.x + g.y * g.y;
    }
    double mean = s1 / (2.0 * N);
    double var = s2 / (2.0 * N);
    CHECK(std::fabs(mean) < 3.0 / std::sqrt(2.0 * N));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
    // same counters, same numbers
    Vec2 a = gauss_pair(1, 2, 3), b = gauss_pair(1, 2, 3);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    // distinct particles decorrelate
    Vec2 c = gauss_pair(1, 4, 3);
    CHECK(a.x != c.x);
}

TEST_CASE("pure noise: terminal displacement variance is 2 kappa dt") {
    double kappa = 0.5, span = 0.04;
    std::vector<Vec2> starts(20000, Vec2{0.1, -0.2});
    SdeEnsemble e = simulate_sde(zero_drift(1.0), 0.0, span, starts, 1e-3,
                                 1e-3, kappa, 99);
    int last = static_cast<int>(e.times.size()) - 1;
    double s2 = 0;
    for (size_t i = 0; i < starts.size(); ++i) {
        Vec2 d = e.lift[i][static_cast<size_t>(last)] - starts[i];
        s2 += d.x * d.x + d.y * d.y;
    }
    double var = s2 / (2.0 * starts.size());   // per component
    double expect = 2.0 * kappa * span;
    // 3 sigma of the chi^2 estimator: sd(var) = expect * sqrt(2 / (2N))
    double tol = 3.0 * expect * std::sqrt(1.0 / starts.size());
    CHECK(std::fabs(var - expect) < tol);
}

TEST_CASE("noiseless degeneration: kappa=0 SDE tracks the exact loop flow") {
    LoopSchedule s = build_loop_schedule(gated_loop(0));
    LoopField f(s, 0);
    LoopFlow flow(f);
    Drift d = make_drift(f);
    double dt = dt_limit(f);

    Rect zone = s.glue_exit_zone(0);
    Vec2 c = zone.center();
    std::vector<Vec2> starts{c,
                             {c.x + 0.2 * zone.width(), c.y},
                             {c.x, c.y - 0.2 * zone.height()}};
    double t1 = 0.35 * f.horizon();
    SdeEnsemble e = simulate_sde(d, 0.0, t1, starts, dt, dt, 0.0, 5);
    int last = static_cast<int>(e.times.size()) - 1;
    // first-order scheme: error O(dt) * Lipschitz along smooth pieces, plus
    // one band width of slop where a step straddles an event
    double vmax = 0.0;
    for (int i = 0; i < f.copy_count(); ++i)
        vmax = std::max(vmax, f.copy(i).block.v());
    double tol = 16.0 * dt * vmax;
    for (size_t i = 0; i < starts.size(); ++i) {
        Vec2 x = flow.flow_map(0.0, t1, starts[i]);
        CHECK(torus_dist(wrap_torus(x), e.position(static_cast<int>(i), last)) <
              tol);
    }
}

TEST_CASE("seed determinism: identical results for 1, 4 and 8 threads") {
    ChessSchedule s = build_chess_schedule(desk_chess(1));
    ChessField f(s, 1);
    Drift d = make_drift(f);
    double dt = dt_limit(f);
    std::vector<Vec2> starts;
    for (int i = 0; i < 37; ++i)
        starts.push_back({0.013 * i - std::floor(0.013 * i), 0.4});
    SdeEnsemble e1 = simulate_sde(d, 0.0, f.horizon(), starts, dt, dt, 0.3,
                                  2024, {0.5 * f.horizon()}, 1);
    SdeEnsemble e4 = simulate_sde(d, 0.0, f.horizon(), starts, dt, dt, 0.3,
                                  2024, {0.5 * f.horizon()}, 4);
    SdeEnsemble e8 = simulate_sde(d, 0.0, f.horizon(), starts, dt, dt, 0.3,
                                  2024, {0.5 * f.horizon()}, 8);
    for (size_t i = 0; i < starts.size(); ++i)
        for (size_t k = 0; k < e1.times.size(); ++k) {
            CHECK(e1.lift[i][k].x == e4.lift[i][k].x);
            CHECK(e1.lift[i][k].y == e4.lift[i][k].y);
            CHECK(e1.lift[i][k].x == e8.lift[i][k].x);
            CHECK(e1.lift[i][k].y == e8.lift[i][k].y);
        }
}

TEST_CASE("dt policy is enforced") {
    std::vector<Vec2> starts{{0, 0}};
    CHECK_THROWS(simulate_sde(zero_drift(1.0), 0.0, 1.0, starts, 1e-2, 1e-3,
                              1.0, 1));
    CHECK_THROWS(simulate_sde(zero_drift(1.0), 0.0, 1.0, starts, 0.0, 1e-3,
                              1.0, 1));
}

TEST_CASE("forward-then-backward is not the inverse path") {
    // the backward flow uses an independent Brownian path, so composing the
    // two accumulates diffusion instead of cancelling it
    double kappa = 0.2, span = 0.05;
    std::vector<Vec2> starts(4000, Vec2{0.0, 0.0});
    SdeEnsemble fwd = simulate_sde(zero_drift(1.0), 0.0, span, starts, 1e-3,
                                   1e-3, kappa, 5);
    int last = static_cast<int>(fwd.times.size()) - 1;
    std::vector<Vec2> mids;
    for (size_t i = 0; i < starts.size(); ++i)
        mids.push_back(fwd.lift[i][static_cast<size_t>(last)]);
    SdeEnsemble bwd = simulate_sde(zero_drift(1.0), span, 0.0, mids, 1e-3,
                                   1e-3, kappa, 6);
    int lastb = static_cast<int>(bwd.times.size()) - 1;
    double s2 = 0;
    for (size_t i = 0; i < starts.size(); ++i) {
        Vec2 d = bwd.lift[i][static_cast<size_t>(lastb)] - starts[i];
        s2 += d.x * d.x + d.y * d.y;
    }
    double var = s2 / (2.0 * starts.size());
    double expect = 2.0 * kappa * 2.0 * span;  // both legs diffuse
    CHECK(var == doctest::Approx(expect).epsilon(0.15));
}

TEST_CASE("empirical Doob excursion bound") {
    // huge threshold: nothing escapes
    DoobReport far = empirical_doob(2000, 0.0, 0.01, 10.0, 77);
    CHECK(far.excess_fraction == 0.0);
    CHECK(far.pass);
    // closed-form reference: 2 exp(-0.3^2 / (4 * 0.01)) = 2 exp(-2.25)
    DoobReport r = empirical_doob(100000, 0.0, 0.01, 0.3, 78);
    CHECK(r.bound == doctest::Approx(2.0 * std::exp(-2.25)).epsilon(1e-12));
    CHECK(r.excess_fraction <= r.bound + 3.0 * r.sigma);
    CHECK(r.pass);
    // the discrete sup still sees a clearly positive escape fraction at a
    // threshold of one standard deviation of the terminal value
    DoobReport near = empirical_doob(20000, 0.0, 0.01, 0.1, 79);
    CHECK(near.excess_fraction > 0.3);
}

TEST_CASE("good-set statistics are Doob-consistent") {
    LoopSchedule s = build_loop_schedule(gated_loop(1));
    ArrivalCombinatorics c = build_arrival_combinatorics(s, 1);
    std::vector<long long> beta(c.lo_safe.begin(), c.lo_safe.end());
    GoodSetStats g = good_set_stats(s, 1, beta, 3.0, 4000, 11);
    CHECK(g.thresholds.size() == 3);   // q = 0, 1, 2
    for (double th : g.thresholds) CHECK(th > 0);
    for (double len : g.interval_lengths) CHECK(len >= 0);
    // one-sided: the measured bad fraction never beats the union bound
    CHECK(g.consistent);
}

TEST_CASE("Feynman-Kac backward: heat kernel decay of a Fourier mode") {
    double kappa = 0.02, t = 0.5;
    Drift d = zero_drift(1.0);
    auto mode = [](Vec2 x) { return std::cos(2.0 * 3.14159265358979324 * x.x); };
    Vec2 x0{0.1, 0.3};
    FkEstimate est = feynman_kac_backward(d, mode, t, x0, 1e-2, 1e-2, kappa,
                                          60000, 13);
    double expect = std::exp(-4.0 * 3.14159265358979324 *
                             3.14159265358979324 * kappa * t) *
                    std::cos(2.0 * 3.14159265358979324 * x0.x);
    CHECK(std::fabs(est.mean - expect) <= est.ci_half + 1e-3);

    // constant datum: zero variance, exact answer
    FkEstimate one = feynman_kac_backward(
        d, [](Vec2) { return 1.0; }, t, x0, 1e-2, 1e-2, kappa, 2000, 13);
    CHECK(one.mean == 1.0);
    CHECK(one.ci_half == 0.0);
}

TEST_CASE("weak order: halving dt moves the estimate by less than the CI") {
    double kappa = 0.02, t = 0.5;
    Drift d = zero_drift(1.0);
    auto mode = [](Vec2 x) { return std::cos(2.0 * 3.14159265358979324 * x.x); };
    Vec2 x0{0.1, 0.3};
    FkEstimate a = feynman_kac_backward(d, mode, t, x0, 1e-2, 1e-2, kappa,
                                        100000, 21);
    FkEstimate b = feynman_kac_backward(d, mode, t, x0, 5e-3, 1e-2, kappa,
                                        100000, 22);
    CHECK(std::fabs(a.mean - b.mean) <= a.ci_half + b.ci_half);
}

TEST_CASE("Feynman-Kac forward pushforward: conservation and measure") {
    double kappa = 0.05, t = 0.3;
    Drift d = zero_drift(1.0);
    auto theta = [](Vec2 x) { return 0.5 + 0.25 * std::sin(2.0 * 3.14159265358979324 * x.y); };
    // f == 1 returns the quadrature of theta_in exactly
    FkEstimate tot = feynman_kac_forward_pushforward(
        d, theta, [](Vec2) { return 1.0; }, 0.0, t, 1e-2, 1e-2, kappa, 32, 4,
        31);
    CHECK(tot.mean == doctest::Approx(0.5).epsilon(1e-9));
    // theta_in == 1, f = indicator of A: averaged measure preservation
    Rect A{{-0.25, -0.25}, {0.25, 0.25}};
    FkEstimate meas = feynman_kac_forward_pushforward(
        d, [](Vec2) { return 1.0; },
        [&A](Vec2 x) { return A.contains(x) ? 1.0 : 0.0; }, 0.0, t, 1e-2,
        1e-2, kappa, 32, 8, 32);
    CHECK(std::fabs(meas.mean - A.area()) <= meas.ci_half + 1e-3);
    // duality with the backward representation on a smooth test pair
    LoopSchedule s = build_loop_schedule(gated_loop(0));
    LoopField f(s, 0);
    Drift ld = make_drift(f);
    double dt = dt_limit(f);
    double tf = 0.25 * f.horizon();
    Rect R0 = s.start_rect();
    auto ind = [&R0](Vec2 x) { return R0.contains(x) ? 1.0 : 0.0; };
    FkEstimate fwdm = feynman_kac_forward_pushforward(
        ld, ind, [](Vec2) { return 1.0; }, 0.0, tf, dt, dt, 1e-4, 24, 2, 41);
    CHECK(fwdm.mean == doctest::Approx(R0.area()).epsilon(0.25));
}

TEST_CASE("stability gap: noiseless runs close, Peclet-matched runs bounded") {
    LoopSchedule s = build_loop_schedule(gated_loop(0));
    LoopField f(s, 0);
    ArrivalCombinatorics c = build_arrival_combinatorics(s, 0);

    StabilityGap g0 = loop_stability_gap(f, s, c, true, 0.0, 8, 3, 2);
    // integration tolerance only: first-order error O(dt * v) accumulated
    // across the relay's event boundaries
    double vmax = 0.0;
    for (int i = 0; i < f.copy_count(); ++i)
        vmax = std::max(vmax, f.copy(i).block.v());
    CHECK(g0.mean_gap < 32.0 * dt_limit(f) * vmax);

    double kap = peclet_kappa(s, 0, 1e3);
    StabilityGap gp = loop_stability_gap(f, s, c, true, kap, 24, 4, 4);
    CHECK(gp.peclet_min >= 1e3);
    CHECK(gp.mean_gap <= gp.bound);
    CHECK(gp.pass);

    // forward direction at the same Peclet
    StabilityGap gf = loop_stability_gap(f, s, c, false, kap, 24, 5, 4);
    CHECK(gf.mean_gap <= 2.0 * gf.bound);
}

TEST_CASE("chess stability gap and kappa monotonicity") {
    ChessSchedule s = build_chess_schedule(desk_chess(2));
    ChessField f(s, 2);
    double kap = peclet_kappa(s, 2, 1e3);
    StabilityGap g = chess_stability_gap(f, kap, 48, 17, 4);
    CHECK(g.peclet_min >= 1e3);
    CHECK(g.mean_gap <= g.bound);
    CHECK(g.pass);

    // mean gap grows with kappa (3 sigma slack folded into a 10% tolerance)
    StabilityGap g10 = chess_stability_gap(f, 10.0 * kap, 48, 17, 4);
    StabilityGap g100 = chess_stability_gap(f, 100.0 * kap, 48, 17, 4);
    CHECK(g10.mean_gap >= 0.9 * g.mean_gap);
    CHECK(g100.mean_gap >= 0.9 * g10.mean_gap);
}
