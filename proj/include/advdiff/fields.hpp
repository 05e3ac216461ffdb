#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "advdiff/block.hpp"
#include "advdiff/params.hpp"

namespace advdiff {

// ---------------------------------------------------------------------------
// Periodic half-open activity windows [offset + j*period, offset + j*period +
// width), j in Z.  When the width reaches the period the pattern merges into
// an always-on field, which we record explicitly so event generators do not
// loop over degenerate edges.
struct TimeWindows {
    double offset = 0.0;
    double period = 0.0;
    double width = 0.0;
    bool always_on = true;

    static TimeWindows always() { return {}; }
    static TimeWindows periodic(double offset, double period, double width);

    bool active(double t) const;
    // First on/off transition strictly after t (inf when always_on).
    double next_edge(double t) const;
};

// ---------------------------------------------------------------------------
// One spatial copy in the loop assembly: a building block, its activity
// windows, the axis reflection placing it in the right quadrant, and whether
// its clock runs backwards from the horizon.
struct LoopCopy {
    BuildingBlock block;   // geometry of the unreflected master block
    TimeWindows windows;   // windows in the copy's own clock
    int reflection = 0;    // 0 id, 1 (-x,y), 2 (-x,-y), 3 (x,-y)
    bool mirrored_time = false;  // evaluate at horizon - t
    int level = 0;         // pipe index q, or n+1 for the gluing block
    bool is_glue = false;
};

class LoopField {
public:
    LoopField(const LoopSchedule& s, int n);
    // Single always-on block, no gluing: isolated-loop diagnostics.
    explicit LoopField(const BuildingBlock& b, double horizon = 1.0);

    Vec2 eval(double t, Vec2 x) const;
    // Instantaneous stream function of the assembly (sum of the active
    // copies' local streams; copies compose with a plain + sign).
    double stream(double t, Vec2 x) const;
    double sup_speed(double t) const;
    std::vector<int> active_copies(double t) const;

    int level() const { return n_; }
    double horizon() const { return Tn_; }
    int copy_count() const { return static_cast<int>(copies_.size()); }
    const LoopCopy& copy(int i) const { return copies_[static_cast<size_t>(i)]; }

    // Largest number of copies whose spatial supports share a sampled point
    // (windows ignored, i.e. the worst case over time).
    int max_support_overlap(int samples_per_axis) const;

private:
    std::vector<LoopCopy> copies_;
    int n_ = 0;
    double Tn_ = 0;
};

// First time the gluing streamline through the handoff centre reaches its
// mirror image; precomputed on the schedule, re-exposed here for symmetry
// with the assembly API.
double glue_time(const LoopSchedule& s, int n);

// ---------------------------------------------------------------------------
// Chess shear assembly.  Phase tags name what the instantaneous field is.
enum class ChessPhase {
    inactive,   // outside [0,T] or truncated away by the level cap
    still,      // I_{q,1}: zero field
    mix,        // I_{q,2}: horizontal shear w_{q,2}
    refine,     // I_{q,3}: vertical shear w_{q,3}
    swap,       // J_{q,1}: constant swapping field
    unrefine,   // J_{q,3}: -w_{q,3}
    unmix       // J_{q,2}: -w_{q,2}
};

struct ChessTag {
    int q = -1;
    ChessPhase phase = ChessPhase::inactive;
};

class ChessField {
public:
    // Evaluates b_n = 1_{[0,t_n] u [T-t_n,T]} b; pass n = schedule depth for
    // the deepest truncation the schedule supports.
    ChessField(const ChessSchedule& s, int n);

    Vec2 eval(double t, Vec2 x) const;
    ChessTag tag(double t) const;
    double sup_speed(double t) const;
    double horizon() const { return T_; }
    int level() const { return n_; }

    // Stage fields (world coordinates, torus-periodic).
    Vec2 mix_field(int q, Vec2 x) const;      // w_{q+1,2}
    Vec2 refine_field(int q, Vec2 x) const;   // w_{q+1,3}
    Vec2 swap_field(int q) const;             // w_{q+1,swap}

    const ChessSchedule& schedule() const { return s_; }

private:
    ChessSchedule s_;
    int n_ = 0;
    double T_ = 0;
};

// ---------------------------------------------------------------------------
// Divergence diagnostics on an N x N grid of cells covering the torus.
//
// The exact variant integrates each face flux in closed form through the
// stream function (flux = stream difference between the face endpoints), so
// the returned defect is rounding noise unless the stream is inconsistent
// (e.g. support crossing the periodic seam).  The midpoint variant uses one
// velocity sample per face and converges only as the grid refines.
double divergence_defect(const std::function<double(Vec2)>& stream, int cells);
double divergence_defect_midpoint(const std::function<Vec2(Vec2)>& velocity,
                                  int cells);

// Midpoint-rule L^p norm of a sampled velocity field over the torus.
double lp_norm_sample(const std::function<Vec2(Vec2)>& velocity, double p,
                      int grid_n);

// L^infty_t L^1_x norm of a single building block: v times its band area.
double block_l1_mass(const BuildingBlock& b);

}  // namespace advdiff
