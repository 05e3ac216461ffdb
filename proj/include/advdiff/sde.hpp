#pragma once
// Stochastic flows: Euler--Maruyama ensembles for the forward and backward
// SDEs dY = ±b dt ± sqrt(2 kappa) dW, Feynman--Kac estimators, Brownian
// excursion (Doob) statistics, and paired deterministic/stochastic stability
// gap measurements.
//
// Reproducibility contract: every Gaussian increment is derived from
// (master seed, particle index, step counter) by a counter-based generator,
// so results are bit-identical for any thread count.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advdiff/flow.hpp"

namespace advdiff {

// ---------------------------------------------------------------------------
// Counter-based Gaussian stream.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t particle,
                       std::uint64_t counter);
// Standard normal pair for the given (master, particle, step).
Vec2 gauss_pair(std::uint64_t master, std::uint64_t particle,
                std::uint64_t step);

// ---------------------------------------------------------------------------
// Drift handle: a velocity field plus the metadata the integrator needs.
struct Drift {
    std::function<Vec2(double, Vec2)> b;
    double horizon = 1.0;
};

Drift make_drift(const LoopField& f);
Drift make_drift(const ChessField& f);

// Largest admissible Euler step: 1/16 of the smallest activity window and of
// the smallest band-crossing time a/v over the assembly's copies.
double dt_limit(const LoopField& f);
double dt_limit(const ChessField& f);

// shortest distance on the unit torus
double torus_dist(Vec2 x, Vec2 y);

// ---------------------------------------------------------------------------
struct SdeEnsemble {
    double t0 = 0, t1 = 0;   // integration runs from t0 to t1 (either order)
    double dt = 0;           // requested step (sub-divided per segment)
    double kappa = 0;
    std::uint64_t seed = 0;
    bool backward = false;   // t1 < t0
    std::vector<double> times;            // checkpoints in integration order
    std::vector<Vec2> starts;
    // unwrapped positions, lift[i][k] = particle i at times[k]
    std::vector<std::vector<Vec2>> lift;

    Vec2 position(int i, int k) const;    // wrapped to the torus
};

// Euler--Maruyama with the drift frozen at the current (left) endpoint of
// each step and additive noise sqrt(2 kappa) dW.  Backward runs (t1 < t0)
// integrate the backward SDE: stepping from t down to t-h adds +b h and
// +sqrt(2 kappa) dW, per the backward flow's integral form.  Throws when
// dt exceeds the given limit or a position goes non-finite.
SdeEnsemble simulate_sde(const Drift& d, double t0, double t1,
                         const std::vector<Vec2>& starts, double dt,
                         double dt_max, double kappa, std::uint64_t seed,
                         const std::vector<double>& checkpoints = {},
                         int threads = 1);

// ---------------------------------------------------------------------------
// Brownian excursion statistics: fraction of standard 2-d Brownian paths on
// [a,b] whose discrete sup |W_t - W_a| reaches C, against the reflection
// bound d exp(-C^2 / (2 d (b-a))).
struct DoobReport {
    double interval_a = 0, interval_b = 0, threshold = 0;
    double bound = 0;
    double excess_fraction = 0;
    double sigma = 0;         // binomial std error of the fraction
    int paths = 0;
    bool pass = false;        // excess_fraction <= bound + 3 sigma
};
DoobReport empirical_doob(int paths, double a, double b, double C,
                          std::uint64_t seed, int steps = 256);

// Good-set statistics for the loop construction: per-stage excursion events
// sup_{[t_prev, t_max_q]} sqrt(2)|W_t - W(tbar_q)| < a_q^{1+eps} / (4K),
// K = exp(C_budget), measured over a Monte Carlo ensemble, against the
// union of the per-stage reflection bounds.
struct GoodSetStats {
    int n = 0;
    double K = 1;
    std::vector<double> thresholds;        // a_q^{1+eps} / (4K), q = 0..n+1
    std::vector<double> interval_lengths;  // t_max_q - t_prev_q
    std::vector<double> anchors;           // tbar_q
    double empirical_bad = 0;              // fraction of paths failing any stage
    double union_bound = 0;                // sum of per-stage bounds, clipped at 1
    double sigma = 0;
    int paths = 0;
    bool consistent = false;  // empirical_bad <= union_bound + 3 sigma
};
GoodSetStats good_set_stats(const LoopSchedule& s, int n,
                            const std::vector<long long>& beta,
                            double C_budget, int paths, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Paired deterministic / stochastic flow comparison from the deepest handoff
// set.  The deterministic leg uses the exact event-driven flow, the
// stochastic leg an independent Brownian path from the same anchor.
struct StabilityGap {
    double kappa = 0;
    double peclet_min = 0;          // min_q a_q v_q / kappa
    double mean_gap = 0;            // max over checkpoints of mean torus dist
    double bound = 0;               // 2 a0^{1+eps} (loop) / a0^{1+delta} (chess)
    std::vector<double> checkpoint_times;
    std::vector<double> checkpoint_mean;      // mean gap per checkpoint
    std::vector<double> exceed_fraction;      // fraction outside the stage tube
    std::vector<double> tube;                 // tube radius per checkpoint
    int particles = 0;
    bool pass = false;              // mean_gap <= bound
};

StabilityGap loop_stability_gap(const LoopField& f, const LoopSchedule& s,
                                const ArrivalCombinatorics& c, bool backward,
                                double kappa, int particles,
                                std::uint64_t seed, int threads = 1);
StabilityGap chess_stability_gap(const ChessField& f, double kappa,
                                 int particles, std::uint64_t seed,
                                 int threads = 1);

// kappa presets: "paper" keeps kappa as configured (assertions demoted to
// measurements); "peclet" lowers kappa until min_q a_q v_q / kappa >= target.
double peclet_kappa(const LoopSchedule& s, int n, double target);
double peclet_kappa(const ChessSchedule& s, int n, double target);

// ---------------------------------------------------------------------------
// Feynman--Kac estimators.
struct FkEstimate {
    double mean = 0;
    double ci_half = 0;   // 95% confidence half width
    int samples = 0;
    bool ci_ok = true;    // false flags "increase N" against a requested tol
};

// theta(t, x) = E[ theta_in( Y_{t,0}(x) ) ], backward flow to time 0.
FkEstimate feynman_kac_backward(const Drift& d,
                                const std::function<double(Vec2)>& theta_in,
                                double t, Vec2 x, double dt, double dt_max,
                                double kappa, int paths, std::uint64_t seed,
                                double ci_tol = 0, int threads = 1);

// int f(x) theta(t, x) dx estimated by pushing a grid quadrature of theta_in
// through the forward flow: E int f(Y_{t0,t}(x)) theta_in(x) dx.
FkEstimate feynman_kac_forward_pushforward(
    const Drift& d, const std::function<double(Vec2)>& theta_in,
    const std::function<double(Vec2)>& f, double t0, double t, double dt,
    double dt_max, double kappa, int grid_n, int paths_per_cell,
    std::uint64_t seed, double ci_tol = 0, int threads = 1);

// CSV export: particle, t, x, y (wrapped positions)
void write_ensemble_csv(const SdeEnsemble& e, const std::string& path);

}  // namespace advdiff
