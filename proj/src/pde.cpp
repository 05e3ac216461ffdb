#include "advdiff/pde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "advdiff/flow.hpp"

namespace advdiff {

namespace {

int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

void note(std::vector<std::string>* subs, const std::string& msg) {
    if (!subs) return;
    if (std::find(subs->begin(), subs->end(), msg) == subs->end())
        subs->push_back(msg);
}

double clamp01(double z) { return std::max(0.0, std::min(1.0, z)); }

// distance from a point to an axis-aligned rectangle
double rect_dist(const Rect& r, Vec2 p) {
    double dx = std::max({r.lo.x - p.x, 0.0, p.x - r.hi.x});
    double dy = std::max({r.lo.y - p.y, 0.0, p.y - r.hi.y});
    return std::hypot(dx, dy);
}

// signed ramped square wave of period 2a: +-1 on alternating a-tiles with a
// linear ramp of half-width w across each tile boundary
double ramped_wave(double z, double a, double w) {
    double q = std::floor(z / a);
    double sign = (static_cast<long long>(q) % 2 == 0) ? 1.0 : -1.0;
    double d = std::min(z - q * a, (q + 1.0) * a - z);  // distance to boundary
    return sign * clamp01(d / w);
}

void parallel_rows(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1) {
        for (int j = 0; j < n; ++j) fn(j);
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            for (int j = w; j < n; j += threads) fn(j);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

// ---------------------------------------------------------------------------

double& ScalarField::at(int i, int j) {
    return v[static_cast<size_t>(wrap_index(j, n)) * n + wrap_index(i, n)];
}
double ScalarField::at(int i, int j) const {
    return v[static_cast<size_t>(wrap_index(j, n)) * n + wrap_index(i, n)];
}
Vec2 ScalarField::center(int i, int j) const {
    return {origin + (i + 0.5) * h(), origin + (j + 0.5) * h()};
}
double ScalarField::mean() const {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}
double ScalarField::min_value() const {
    return *std::min_element(v.begin(), v.end());
}
double ScalarField::max_value() const {
    return *std::max_element(v.begin(), v.end());
}
double ScalarField::l1() const {
    double s = 0;
    for (double x : v) s += std::fabs(x);
    return s / static_cast<double>(v.size());
}
double ScalarField::l2sq() const {
    double s = 0;
    for (double x : v) s += x * x;
    return s / static_cast<double>(v.size());
}
double ScalarField::integral() const {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

ScalarField make_grid(int N, double t, double origin) {
    if (N < 2) throw std::runtime_error("grid: N too small");
    ScalarField f;
    f.n = N;
    f.t = t;
    f.origin = origin;
    f.v.assign(static_cast<size_t>(N) * N, 0.0);
    return f;
}

ScalarField sample_field(const std::function<double(Vec2)>& f, int N,
                         double origin) {
    ScalarField g = make_grid(N, 0.0, origin);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) g.at(i, j) = f(g.center(i, j));
    return g;
}

// ---------------------------------------------------------------------------

ScalarField make_loop_initial_datum(const LoopSchedule& s, int N,
                                    std::vector<std::string>* subs) {
    (void)subs;  // the loop datum never needs a clamp at valid parameters
    double eps = s.params.epsilon;
    double w = std::pow(s.a[0], 1.0 + 0.5 * eps);
    if (N * w < 4.0) {
        std::ostringstream os;
        os << "loop initial datum: grid too coarse for the mollification ramp"
           << " (N*w = " << N * w << " < 4)";
        throw std::runtime_error(os.str());
    }
    Rect R0 = s.start_rect();
    return sample_field(
        [&](Vec2 p) { return clamp01(1.0 - rect_dist(R0, p) / w); }, N);
}

ScalarField make_chess_initial_datum(const ChessSchedule& s, int N,
                                     std::vector<std::string>* subs) {
    double a0 = s.a[0];
    double fine = s.a.back();
    if (std::fabs(fine * N - std::llround(fine * N)) > 1e-9)
        throw std::runtime_error(
            "chess initial datum: h must divide the finest tile size");
    double w_paper = std::pow(a0, 1.0 + 0.5 * s.params.delta);
    double w = std::min(w_paper, a0 / 8.0);
    if (w < w_paper) {
        std::ostringstream os;
        os << "chess mollifier width " << w_paper << " -> " << w
           << " (nominal ramp does not fit inside a tile at this a0)";
        note(subs, os.str());
    }
    if (N * w < 4.0)
        throw std::runtime_error(
            "chess initial datum: grid too coarse for the mollification ramp");
    return sample_field(
        [&](Vec2 p) {
            return ramped_wave(p.x, a0, w) * ramped_wave(p.y, a0, w);
        },
        N);
}

ScalarField make_separation_test(const ChessSchedule& s, int N,
                                 std::vector<std::string>* subs) {
    double a0 = s.a[0];
    double w_paper = std::pow(a0, 1.0 + 0.5 * s.params.delta);
    double m_paper = 5.0 * w_paper;
    double w = std::min(w_paper, a0 / 8.0);
    double m = std::min(m_paper, a0 / 4.0);
    if (m < m_paper) {
        std::ostringstream os;
        os << "separation test margin " << m_paper << " -> " << m
           << " (tile restriction would be empty at this a0)";
        note(subs, os.str());
    }
    return sample_field(
        [&](Vec2 p) {
            auto tile = [&](double z) {
                double q = std::floor(z / a0);
                double d = std::min(z - q * a0, (q + 1.0) * a0 - z);
                return d;
            };
            double d = std::min(tile(p.x), tile(p.y));
            int color = board_color(p, a0);
            return color * clamp01((d - m) / w);
        },
        N);
}

// ---------------------------------------------------------------------------

FaceVelocity make_face_velocity(const LoopField& f) {
    FaceVelocity u;
    u.flux = [&f](double t, Vec2 a, Vec2 b) {
        return f.stream(t, a) - f.stream(t, b);
    };
    u.sup_speed = [&f](double t) { return f.sup_speed(t); };
    return u;
}

FaceVelocity make_face_velocity(const ChessField& f) {
    FaceVelocity u;
    // shear phases are constant along any grid-aligned face that does not
    // straddle a tile boundary, so the midpoint sample is the exact mean
    u.flux = [&f](double t, Vec2 a, Vec2 b) {
        Vec2 mid = 0.5 * (a + b);
        Vec2 d = b - a;
        double len = norm(d);
        Vec2 nrm{d.y / len, -d.x / len};
        return dot(f.eval(t, mid), nrm) * len;
    };
    u.sup_speed = [&f](double t) { return f.sup_speed(t); };
    return u;
}

FaceVelocity zero_velocity() {
    FaceVelocity u;
    u.flux = [](double, Vec2, Vec2) { return 0.0; };
    u.sup_speed = [](double) { return 0.0; };
    return u;
}

// ---------------------------------------------------------------------------

PdeRun solve_advection_diffusion(const FaceVelocity& u,
                                 const ScalarField& theta0, double t0,
                                 double t1, double kappa,
                                 const std::vector<double>& checkpoints,
                                 int threads) {
    if (t1 < t0) throw std::runtime_error("pde: t1 < t0");
    const int N = theta0.n;
    const double h = theta0.h();

    std::vector<double> cps{t0, t1};
    for (double c : checkpoints)
        if (c > t0 && c < t1) cps.push_back(c);
    std::sort(cps.begin(), cps.end());
    cps.erase(std::unique(cps.begin(), cps.end()), cps.end());

    PdeRun run;
    run.ledger.kappa = kappa;
    run.ledger.half_l2_initial = 0.5 * theta0.l2sq();

    ScalarField cur = theta0;
    cur.t = t0;
    double lo0 = theta0.min_value(), hi0 = theta0.max_value();

    // face flux buffers: Fx(i,j) across the face between (i,j) and (i+1,j),
    // Fy(i,j) between (i,j) and (i,j+1); flow-rate units (velocity * h)
    std::vector<double> Fx(static_cast<size_t>(N) * N),
        Fy(static_cast<size_t>(N) * N);
    ScalarField next = cur;

    double diss = 0.0;
    auto record = [&](double t) {
        cur.t = t;
        run.snaps.push_back(cur);
        run.ledger.times.push_back(t);
        run.ledger.half_l2.push_back(0.5 * cur.l2sq());
        run.ledger.diss_cum.push_back(diss);
        run.ledger.mean.push_back(cur.mean());
    };
    record(t0);

    for (size_t seg = 0; seg + 1 < cps.size(); ++seg) {
        double t = cps[seg], tend = cps[seg + 1];
        while (t < tend) {
            double sup = u.sup_speed(t);
            double dt = 0.9 / (4.0 * sup / h + 4.0 * kappa / (h * h) +
                               1e-300);
            dt = std::min(dt, tend - t);
            if (!(dt > 0)) throw std::runtime_error("pde: CFL step underflow");

            parallel_rows(N, threads, [&](int j) {
                for (int i = 0; i < N; ++i) {
                    double xb = cur.origin + (i + 1) * h;
                    double yb = cur.origin + (j + 1) * h;
                    double y0 = cur.origin + j * h;
                    double x0 = cur.origin + i * h;
                    // east face, normal +x: upward segment
                    Fx[static_cast<size_t>(j) * N + i] =
                        u.flux(t, {xb, y0}, {xb, yb});
                    // north face, normal +y: right-to-left segment
                    Fy[static_cast<size_t>(j) * N + i] =
                        u.flux(t, {xb, yb}, {x0, yb});
                }
            });

            double inv = dt / (h * h);
            parallel_rows(N, threads, [&](int j) {
                for (int i = 0; i < N; ++i) {
                    double fe = Fx[static_cast<size_t>(j) * N + i];
                    double fw = Fx[static_cast<size_t>(j) * N +
                                   wrap_index(i - 1, N)];
                    double fn = Fy[static_cast<size_t>(j) * N + i];
                    double fs = Fy[static_cast<size_t>(wrap_index(j - 1, N)) *
                                       N + i];
                    double c = cur.at(i, j);
                    double adv =
                        (fe >= 0 ? fe * c : fe * cur.at(i + 1, j)) -
                        (fw >= 0 ? fw * cur.at(i - 1, j) : fw * c) +
                        (fn >= 0 ? fn * c : fn * cur.at(i, j + 1)) -
                        (fs >= 0 ? fs * cur.at(i, j - 1) : fs * c);
                    double dif = kappa * (cur.at(i + 1, j) + cur.at(i - 1, j) +
                                          cur.at(i, j + 1) + cur.at(i, j - 1) -
                                          4.0 * c);
                    next.at(i, j) = c + inv * (dif - adv);
                }
            });

            if (kappa > 0) {
                // dissipation of the pre-step field: sum over faces of the
                // squared jump equals h^2 ||grad theta||^2
                double g = 0;
                for (int j = 0; j < N; ++j)
                    for (int i = 0; i < N; ++i) {
                        double dx = cur.at(i + 1, j) - cur.at(i, j);
                        double dy = cur.at(i, j + 1) - cur.at(i, j);
                        g += dx * dx + dy * dy;
                    }
                diss += dt * kappa * g;
            }

            cur.v.swap(next.v);
            ++run.steps;
            t += dt;

            double mx = cur.max_value(), mn = cur.min_value();
            if (!std::isfinite(mx) || !std::isfinite(mn))
                throw std::runtime_error("pde: non-finite field value");
            if (mx > hi0 + 1e-6 || mn < lo0 - 1e-6) {
                std::ostringstream os;
                os << "pde: maximum principle violated at t " << t << " (range "
                   << mn << " .. " << mx << " vs initial " << lo0 << " .. "
                   << hi0 << ")";
                throw std::runtime_error(os.str());
            }
        }
        record(tend);
    }
    return run;
}

EnergyCheck energy_inequality_check(const EnergyLedger& ledger, double tol) {
    EnergyCheck r;
    r.min_margin = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < ledger.times.size(); ++k) {
        double lhs = ledger.half_l2[k] + ledger.diss_cum[k];
        double defect = lhs - ledger.half_l2_initial;
        r.max_defect = std::max(r.max_defect, defect);
        r.min_margin = std::min(r.min_margin, -defect);
    }
    r.pass = r.max_defect <= tol;
    return r;
}

// ---------------------------------------------------------------------------

ChunkSet chunk_decomposition(const FaceVelocity& u, const ScalarField& theta_in,
                             double t0, double t1, double kappa,
                             const std::vector<double>& births, const Rect& S,
                             int threads) {
    ChunkSet out;
    out.births = births;
    std::sort(out.births.begin(), out.births.end());
    out.eval_times = out.births;
    out.eval_times.push_back(t1);

    // base run checkpointed at every eval time
    PdeRun base = solve_advection_diffusion(u, theta_in, t0, t1, kappa,
                                            out.eval_times, threads);
    auto snap_at = [&](const PdeRun& r, double t) -> const ScalarField& {
        for (const auto& f : r.snaps)
            if (std::fabs(f.t - t) <= 1e-15 + 1e-12 * std::fabs(t)) return f;
        throw std::runtime_error("chunk: missing checkpoint");
    };
    for (double te : out.eval_times) out.base.push_back(snap_at(base, te));

    const int N = theta_in.n;
    out.min_value = 0.0;
    out.max_excess = 0.0;
    // running sum of earlier chunks at each eval time
    std::vector<ScalarField> claimed(out.eval_times.size(),
                                     make_grid(N, 0.0, theta_in.origin));
    for (size_t k = 0; k < out.births.size(); ++k) {
        double tb = out.births[k];
        size_t bi = k;  // eval_times[k] == births[k]
        ScalarField init = make_grid(N, tb, theta_in.origin);
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < N; ++i) {
                Vec2 p = init.center(i, j);
                if (!S.contains(p)) continue;
                init.at(i, j) =
                    out.base[bi].at(i, j) - claimed[bi].at(i, j);
            }
        std::vector<double> later(out.eval_times.begin() +
                                      static_cast<long>(bi) + 1,
                                  out.eval_times.end());
        PdeRun cr = solve_advection_diffusion(u, init, tb, t1, kappa, later,
                                              threads);
        std::vector<ScalarField> line;
        for (size_t j2 = 0; j2 < out.eval_times.size(); ++j2) {
            if (out.eval_times[j2] < tb) {
                line.push_back(make_grid(N, out.eval_times[j2],
                                         theta_in.origin));
                continue;
            }
            const ScalarField& f = snap_at(cr, out.eval_times[j2]);
            line.push_back(f);
            for (size_t c2 = 0; c2 < f.v.size(); ++c2) {
                claimed[j2].v[c2] += f.v[c2];
                out.min_value = std::min(out.min_value, f.v[c2]);
                out.max_excess = std::max(
                    out.max_excess, claimed[j2].v[c2] - out.base[j2].v[c2]);
            }
        }
        out.chunks.push_back(std::move(line));
    }
    out.positive_ok = out.min_value >= -1e-9;
    out.subadditive_ok = out.max_excess <= 1e-9;
    return out;
}

double quadrant_mass(const ScalarField& f, int parity) {
    double s = 0;
    for (int j = 0; j < f.n; ++j)
        for (int i = 0; i < f.n; ++i) {
            Vec2 p = f.center(i, j);
            bool in = (parity % 2 == 0) ? (p.x >= 0 && p.y >= 0)
                                        : (p.x <= 0 && p.y <= 0);
            if (in) s += f.at(i, j);
        }
    return s / (static_cast<double>(f.n) * f.n);
}

double quadrant_mass(const ChunkSet& c, int j, int parity) {
    double s = 0;
    for (const auto& line : c.chunks)
        s += quadrant_mass(line[static_cast<size_t>(j)], parity);
    return s;
}

// ---------------------------------------------------------------------------

SeparationReport separation_functional(const ScalarField& te,
                                       const ScalarField& to,
                                       const ScalarField& re,
                                       const ScalarField& ro,
                                       const ScalarField& f) {
    if (te.n != f.n || to.n != f.n || re.n != f.n || ro.n != f.n)
        throw std::runtime_error("separation: grid mismatch");
    SeparationReport r;
    double cell = 1.0 / (static_cast<double>(f.n) * f.n);
    for (size_t i = 0; i < f.v.size(); ++i) {
        r.advective += f.v[i] * (re.v[i] - ro.v[i]) * cell;
        r.err_even += std::fabs(f.v[i] * (te.v[i] - re.v[i])) * cell;
        r.err_odd += std::fabs(f.v[i] * (to.v[i] - ro.v[i])) * cell;
        r.direct += f.v[i] * (te.v[i] - to.v[i]) * cell;
    }
    r.lower_bound = r.advective - r.err_even - r.err_odd;
    return r;
}

double chessboard_distance(const ScalarField& theta, double a) {
    double dplus = 0, dminus = 0;
    double cell = 1.0 / (static_cast<double>(theta.n) * theta.n);
    for (int j = 0; j < theta.n; ++j)
        for (int i = 0; i < theta.n; ++i) {
            double b = board_color(theta.center(i, j), a);
            dplus += std::fabs(theta.at(i, j) - b) * cell;
            dminus += std::fabs(theta.at(i, j) + b) * cell;
        }
    return std::min(dplus, dminus);
}

// ---------------------------------------------------------------------------

void write_field_binary(const ScalarField& f, const std::string& path,
                        const std::string& sidecar_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os.write(reinterpret_cast<const char*>(f.v.data()),
             static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    std::ofstream js(path + ".json");
    if (!js) throw std::runtime_error("cannot open " + path + ".json");
    js << sidecar_json;
}

void write_ledger_csv(const EnergyLedger& ledger, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "t,half_l2,diss_cum,mean\n";
    for (size_t k = 0; k < ledger.times.size(); ++k)
        os << ledger.times[k] << ',' << ledger.half_l2[k] << ','
           << ledger.diss_cum[k] << ',' << ledger.mean[k] << '\n';
}

}  // namespace advdiff
