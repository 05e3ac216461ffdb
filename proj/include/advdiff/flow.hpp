#pragma once

#include <string>
#include <vector>

#include "advdiff/fields.hpp"

namespace advdiff {

// ---------------------------------------------------------------------------
// One closed-form piece of a trajectory: between two events the motion is
// either a translation or a rigid rotation (possibly about a shifted centre
// when a corner piece overlaps a constant one).
struct TrajectoryPiece {
    double t0 = 0, t1 = 0;     // world time span (t1 > t0 also for backward runs)
    Vec2 x0{}, x1{};
    int kind = 0;              // 0 rest, 1 translation, 2 rotation
    int copy = -1;             // dominant copy (rotation centre owner), -1 none
    double speed = 0;          // |velocity| along the piece
};

struct Trajectory {
    std::vector<TrajectoryPiece> pieces;
    Vec2 end{};
    double t_end = 0;
    bool bifurcation_adjacent = false;  // passed within tolerance of a centre
    long events = 0;
};

// Exact event-driven flow of a loop assembly.  Event times (region-boundary
// and window-edge crossings) are solved in closed form on the current piece.
class LoopFlow {
public:
    explicit LoopFlow(const LoopField& f) : f_(&f) {}

    // forward if t1 > t0, backward otherwise
    Vec2 flow_map(double t0, double t1, Vec2 x) const;
    Trajectory trace(double t0, double t1, Vec2 x) const;

private:
    const LoopField* f_;
};

// Chess flow: every phase is constant along its own trajectories, so the
// flow is a finite composition of shifts.
Vec2 chess_flow_map(const ChessField& f, double t0, double t1, Vec2 x);

// ---------------------------------------------------------------------------
// Arrival-time combinatorics for the loop construction.
struct ArrivalCombinatorics {
    int n = 0;
    bool buffered = false;        // the paper's bracket buffers were feasible
    std::string bracket_note;     // which bracket collapsed, when !buffered
    // inclusive integer ranges for beta_k, k = 1..n+1 (index k-1)
    std::vector<long long> lo, hi;
    // clearance-constrained subrange actually used for flow verification
    std::vector<long long> lo_safe, hi_safe;
    double cardinality_upper = 0;  // a_0^2 / (a_n a_{n+1})

    long long count() const;
    long long count_safe() const;
    std::vector<std::vector<long long>> enumerate(bool safe) const;
};

ArrivalCombinatorics build_arrival_combinatorics(const LoopSchedule& s, int n);

// time grids
double t_bar(const LoopSchedule& s, const std::vector<long long>& beta, int q);
double t_arrival(const LoopSchedule& s, const std::vector<long long>& beta,
                 int n);
double s_bar(const LoopSchedule& s, const std::vector<long long>& beta, int q,
             int n);

// ---------------------------------------------------------------------------
// Stage-by-stage verification of the deterministic transport chain.
struct SampleOutcome {
    std::vector<long long> beta;
    Vec2 start{};
    bool pass = false;
    std::string first_failure;  // empty when pass
};

struct FlowReport {
    int total = 0;
    int passed = 0;
    std::vector<SampleOutcome> failures;   // failed samples only
    std::vector<std::string> margin_substitutions;
    double pass_fraction() const { return total ? double(passed) / total : 0.0; }
};

// Backward chain: start in the restricted gluing handoff set at an arrival
// time, flow to 0, checking transfer-zone membership at each t_bar and band
// confinement between them, ending in the restricted start square.
FlowReport verify_backward_property(const LoopField& f, const LoopSchedule& s,
                                    const ArrivalCombinatorics& c,
                                    int samples_per_beta, unsigned seed);
// Forward chain: mirror through the parity reflection P_n.
FlowReport verify_forward_property(const LoopField& f, const LoopSchedule& s,
                                   const ArrivalCombinatorics& c,
                                   int samples_per_beta, unsigned seed);

// parity reflection: y-axis mirror for even n, x-axis mirror for odd n
inline int parity_reflection(int n) { return (n % 2 == 0) ? 1 : 3; }

// Integral along the trajectory of the gradient bound v/a over pieces whose
// tube of the given radius can touch a corner region.
double gronwall_budget(const LoopField& f, const Trajectory& traj,
                       double radius);

// ---------------------------------------------------------------------------
// Chess: exact tile-permutation verification.
struct ChessFlowReport {
    int q = -1;
    bool refine_ok = false;   // [t_q, t_{q+1}): a_q board -> a_{q+1} board
    bool unmix_ok = false;    // (T-t_{q+1}, T-t_q]: a_{q+1} board -> swapped a_q board
    int first_mismatch_i = -1, first_mismatch_j = -1;
};

ChessFlowReport verify_chess_flow(const ChessField& f, int q);

// checkerboard colour (+1/-1) of tile size a at a point
int board_color(Vec2 x, double a);

}  // namespace advdiff
