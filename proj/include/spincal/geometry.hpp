#pragma once

#include "spincal/sepvars.hpp"

#include <functional>
#include <string>
#include <vector>

namespace spincal {

/// Line segment or circular arc in the z-plane, parametrized by t in [0, 1].
struct PathSegment {
    enum class Kind { line, arc };
    Kind kind = Kind::line;
    cplx a, b;          // line endpoints
    cplx center;        // arc data
    double radius = 0;
    double theta0 = 0;
    double dtheta = 0;

    static PathSegment line(cplx from, cplx to);
    static PathSegment arc(cplx center, double radius, double theta0, double dtheta);
    cplx point(double t) const;
    cplx derivative(double t) const;
};

/// Piecewise path on the base curve; the global parameter runs over [0, segments.size()].
struct CyclePath {
    std::vector<PathSegment> segments;
    int start_sheet = 0;
    std::string label;

    cplx point(double t) const;
    cplx derivative(double t) const;
    double length() const { return double(segments.size()); }
    /// End point equals start point modulo the lattice.
    bool closed(const Lattice &lat, double tol = 1e-12) const;
};

struct TrackConfig {
    double initial_step = 1.0 / 64;
    double max_step = 1.0 / 16; // per segment
    double min_step = 1e-10;
    double separation_factor = 4.0; // nearest-root gap must exceed this times the step motion
};

/// All N sheets continued along a path. k[n][alpha] follows the sheet that started as alpha.
struct SheetTrack {
    std::vector<double> t;
    std::vector<cplx> z;
    std::vector<std::vector<cplx>> k;
    std::vector<int> permutation; // permutation[alpha]: sorted sheet index reached at the end
    int start_sheet = 0;
    std::size_t rejected = 0;

    cplx k_start() const { return k.front()[start_sheet]; }
    cplx k_end() const { return k.back()[start_sheet]; }
};

/// Adaptive continuation; a step is halved while the nearest-root gap is below separation_factor times
/// the motion of the roots. Throws TrackingError below min_step (path too close to a branch point).
SheetTrack sheet_track(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const TrackConfig &cfg = {});

/// k on sheet alpha at global parameter t: the root nearest to the interpolated tracked value.
cplx tracked_k(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const SheetTrack &track, double t,
               int alpha);

struct PathIntegral {
    cplx value;
    double error = 0; // difference between the n- and 2n-point Gauss-Legendre sums
};

/// Integral of F(z, k) dz along the tracked start sheet, Gauss-Legendre on each tracked interval.
PathIntegral integrate_along(const PhasePoint &pp, const Lattice &lat, const CyclePath &path, const SheetTrack &track,
                             const std::function<cplx(cplx, cplx)> &F, int nodes = 8, int sheet = -1);

/// Integral of k dz along the path from its start sheet.
PathIntegral action_integral(const PhasePoint &pp, const Lattice &lat, const CyclePath &path,
                             const TrackConfig &cfg = {});

/// Gauss-Legendre nodes and weights on [-1, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n);

/// Candidate differential c(z) k^j dz / (dR/dk), c = 1, wp, wp' for coefficient 0, 1, 2.
struct Candidate {
    int coefficient = 0;
    int k_power = 0;
};

struct BasisConfig {
    int max_k_power = 1;
    int circle_points = 64;
    int laurent_terms = 6;
    double null_tol = 1e-7;
    double circle_fraction = 0.3; // circle radius over the distance to the nearest other special point
    TrackConfig track;
};

/// Points of the curve where regularity is tested: branch points and z = 0, with the length of the
/// sheet cycle around each (2 for a simple branch point).
struct SpecialPoint {
    cplx z;
    int sheet = 0;
    int cycle_length = 1;
    double radius = 0;
};

struct HolomorphicBasis {
    PhasePoint pp;
    Lattice lat = Lattice::rational();
    int genus = 0;
    bool supported = false; // acceptance bounds apply to N = 2, l = 1
    std::vector<Candidate> candidates;
    std::vector<SpecialPoint> special_points;
    std::vector<double> regularity_singular_values; // of the scaled Laurent-coefficient matrix
    CMatrix raw;                                     // rows: regular combinations of candidates
    CMatrix coefficients;                            // rows: A-normalized basis
    std::vector<CyclePath> cycles;                   // chosen A-cycles
    CMatrix raw_periods;                             // raw_periods(i, j) = integral of raw_i over A_j
    CMatrix normalization;                           // integral of omega_i over A_j after normalization

    cplx candidate_value(int m, cplx z, cplx k) const;
    /// omega_i / dz at the curve point (z, k).
    cplx value(int i, cplx z, cplx k) const;
    CVector values(cplx z, cplx k) const;
};

/// Regular subspace of the candidate span (negative Laurent coefficients in the local parameter vanish on
/// circles around every special point), normalized on A-cycles chosen among lifts of the base cycles.
/// Throws ConvergenceError when the regular subspace does not have dimension g.
HolomorphicBasis holomorphic_basis(const PhasePoint &pp, const Lattice &lat, const BasisConfig &cfg = {});

/// Branch points and the points above z = 0, with their sheet cycles.
std::vector<SpecialPoint> special_points(const PhasePoint &pp, const Lattice &lat, double circle_fraction = 0.3,
                                         const TrackConfig &cfg = {});

/// Lifts of the two base cycles from every sheet, along lines chosen for the largest clearance from the
/// special points; repeated until closed on the curve.
std::vector<CyclePath> candidate_cycles(const PhasePoint &pp, const Lattice &lat,
                                        const std::vector<SpecialPoint> &special, const TrackConfig &cfg = {});

/// Smallest distance from sampled path points to the special points, modulo the lattice.
double path_clearance(const CyclePath &path, const Lattice &lat, const std::vector<cplx> &points, int samples = 256);

/// theta_k = sum_i integral of omega_k from (base_z, base_sheet) to each point along a straight path.
/// Values are defined modulo the period lattice. Throws TrackingError if no start sheet reaches the point.
std::vector<cplx> abel_sum(const HolomorphicBasis &basis, const std::vector<DivisorPoint> &points, cplx base_z,
                           const TrackConfig &cfg = {});

/// u_k = sum over the points above z = 0 of omega_k / dz.
CVector translation_vector(const HolomorphicBasis &basis, double radius = 1e-2, int samples = 32);

struct LinearFlowReport {
    std::vector<double> times;
    std::vector<CVector> theta; // theta_k(t) = abel sum of the divisor - x_1(t) u_k, unwound by continuity
    double max_first_difference = 0;
    double max_second_difference = 0;
    double ratio = 0; // max second / max first
};

/// Abel image of the divisor along an equally spaced trajectory (at least 5 samples). The divisor is tracked
/// between samples and each increment integrated along the curve, so no period jumps occur.
LinearFlowReport linear_flow_check(const Trajectory &traj, const Lattice &lat, const BasisConfig &cfg = {});
LinearFlowReport linear_flow_check(const Trajectory &traj, const HolomorphicBasis &basis, const TrackConfig &cfg = {});

struct ActionSeries {
    std::vector<double> times;
    std::vector<CVector> actions; // one entry per cycle
    double max_error = 0;         // largest quadrature error estimate
    double max_drift = 0;         // max |a(t) - a(0)| / max(|a(0)|, 1)
};

/// Actions on fixed cycles along a trajectory; the start sheet is followed by continuity in time.
ActionSeries action_series(const Trajectory &traj, const Lattice &lat, std::vector<CyclePath> cycles,
                           const TrackConfig &cfg = {});

} // namespace spincal
