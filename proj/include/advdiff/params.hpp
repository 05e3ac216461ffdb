#pragma once
// Parameter validation and schedule construction for both constructions.

#include <cstdint>
#include <string>
#include <vector>

#include "advdiff/geometry.hpp"

namespace advdiff {

struct LoopParams {
    double p = 1.5;
    double delta = 0.1;
    double alpha = 1.2;
    double epsilon = 0.001;
    double a0 = 0.1;
    int n_max = 2;
    double kappa = 1.0;
    std::uint64_t seed = 0;
    int grid_n = 256;
    int ensemble_size = 1000;
    bool rescale_time = false;
    // Velocity inflation factor: v_q/v_{q-1} >= zeta * m_{q-1} in addition to
    // the v_q >= a_q^{-alpha} floor.  zeta = 1 reproduces the bare power-law
    // speeds (activation windows then merge to always-on at accessible a_0);
    // larger zeta separates the windows so the timed relay is realised.
    double zeta = 1.0;
};

struct ChessParams {
    double p = 1.5;
    double delta = 0.1;
    double gamma = 2.7;
    double a0 = 1.0 / 16.0;
    int n_max = 2;
    double kappa = 1.0;
    std::uint64_t seed = 0;
    int grid_n = 512;
    int ensemble_size = 1000;
};

struct CheckItem {
    std::string name;        // human-readable inequality
    double lhs = 0, rhs = 0; // checked as lhs < rhs (strict)
    double margin = 0;       // rhs - lhs
    bool pass = false;
};

struct ValidationReport {
    std::vector<CheckItem> checks;
    bool pass = false;
    std::string summary() const;
};

ValidationReport validate_loop_hypotheses(const LoopParams& P);
ValidationReport validate_chess_hypotheses(const ChessParams& P);

// ---------------------------------------------------------------------------

struct LoopSchedule {
    LoopParams params;
    int n = 0;                      // deepest pipe index n_max
    std::vector<double> a;          // a_0 .. a_{n+1}
    double a_geom = 0;              // a_{-1} = a_0 + a_1 (geometry convention)
    std::vector<long long> m;       // m_q = a_q / a_{q+1}, integer
    std::vector<double> v;          // v_0 .. v_{n+1}
    std::vector<long long> M;       // M[q] = tau[q] / tau[q+1] for q >= 1
    std::vector<double> tau;        // tau[q] = a_q / v_{q-1}, valid q >= 1
    std::vector<double> l;          // side lengths l_q = lb_q = 4 a_{q-1}
    std::vector<Vec2> O;            // pipe centres (quadrant II master copy)
    std::vector<double> t_travel;   // t_{q,q-1}, central-streamline, q >= 1
    std::vector<double> t_cum;      // t_q = sum_{k<=q} t_{k,k-1}, t_cum[0] = 0
    std::vector<double> t_glue;     // glue half-loop time per level 0..n
    std::vector<double> T_n;        // horizons T_0 .. T_n
    double T = 0;                   // final time
    double time_scale = 1.0;        // applied when rescale_time triggers
    // glue geometry per level 0..n
    std::vector<double> glue_l, glue_lb;
    std::vector<Vec2> glue_O;
    double extent = 0;              // max |coordinate| over the full assembly
    bool horizons_monotone = true;  // T_n strictly increasing (bare speeds only)
    std::vector<double> v_nominal;  // bare a_q^{-alpha} for deviation reporting

    // tail sum S(q) = sum_{k>=q} 2 a_k, with S(-1) including a_{-1} = a0+a1
    double tail(int q) const;
    std::vector<double> tails_;       // frozen suffix sums, index shifted by one
    // derived zones (master quadrant-II copy, n even orientation)
    Rect transfer_zone(int q) const;   // S_q = pipe q bottom x pipe q+1 left
    Rect glue_handoff_zone(int lvl) const; // Q_lvl x Q_glue straight overlap
    Rect glue_exit_zone(int lvl) const;    // S_{lvl,glue}: bottom-centre of glue
    Rect start_rect() const;          // R_0, abutting S_0 upstream
};

// Throws std::runtime_error on any hypothesis failure or geometric overflow.
LoopSchedule build_loop_schedule(const LoopParams& P);

struct ChessSchedule {
    ChessParams params;
    int n = 0;                   // truncation level n_max
    std::vector<double> a;       // a_0 .. a_{n+1}, dyadic halving
    std::vector<double> t;       // t_q = sum_{k<q} 3 a_k^gamma, t[0] = 0
    double T_low = 0, T_high = 0;  // bracket for T = 2 lim t_q
    double T = 0;                // working value (geometric tail summed exactly)
};

ChessSchedule build_chess_schedule(const ChessParams& P);

// ---------------------------------------------------------------------------

struct LpBudget {
    std::vector<double> terms;   // per-level contribution
    double total = 0;
    bool finite = false;         // does the infinite sum converge?
    double exponent = 0;         // decay exponent of the level terms
};

LpBudget lp_budget(const LoopSchedule& S);   // L^infty_t L^p_x
LpBudget lp_budget(const ChessSchedule& S);  // L^p_t L^infty_x (p-th power terms)

}  // namespace advdiff
