#pragma once

#include <vector>

#include "rodlimit/cross_section.hpp"
#include "rodlimit/errors.hpp"
#include "rodlimit/linalg.hpp"
#include "rodlimit/load_spec.hpp"

namespace rodlimit {

/// Nodal rotation field on a uniform grid of (0, L).
struct RodConfig {
    double length = 1.0;
    std::vector<Mat3> rotations; ///< N + 1 nodes

    static RodConfig straight(double length, int intervals);

    int intervals() const { return static_cast<int>(rotations.size()) - 1; }
    double spacing() const { return length / intervals(); }
    double node(int i) const { return length * i / intervals(); }
    /// Throws InputError unless every R_i is a rotation to 1e-10.
    void validate() const;
};

/// Centreline and directors reconstructed from a rotation field.
struct RodFrame {
    std::vector<Vec3> y;
    std::vector<Vec3> d2;
    std::vector<Vec3> d3;
};

RodFrame frame_from_rotations(const RodConfig& cfg);

/// Per-interval a_i = coords(log(R_iᵀR_{i+1}) / Δx). Throws DomainError when
/// adjacent rotations are π or more apart (grid too coarse).
std::vector<SkewCoords> curvature_torsion(const RodConfig& cfg);

/// g̃(x1) = ∫_L^{x1} g, by the trapezoidal rule on the load grid.
std::vector<Vec3> tilde_g(const LoadProfile& load);

struct RodEnergy {
    double elastic = 0.0; ///< ½∫Q1(a)
    double load = 0.0;    ///< ∫g·y
    double total() const { return elastic - load; }
};

RodEnergy energy_parts(const RodConfig& cfg, const Q1Form& form, const LoadProfile& load);
double energy_j2(const RodConfig& cfg, const Q1Form& form, const LoadProfile& load);

/// Exact gradient of the discrete energy in the tangent coordinates
/// R_i ← R_i exp(hat ξ_i); entry 0 (clamped node) is zero.
std::vector<Vec3> energy_gradient(const RodConfig& cfg, const Q1Form& form, const LoadProfile& load);
/// sqrt(Σ|g_i|² / Δx): the gradient measured in the discrete L² metric.
double gradient_norm(const std::vector<Vec3>& gradient, double spacing);

struct RodSolverOptions {
    double tol = 1e-10;
    int max_iters = 200;
    double fd_step = 1e-5; ///< central-difference step for the Hessian
};

struct RodSolveResult {
    RodConfig config;
    double energy = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
};

class RodNonConvergence : public SolverError {
public:
    RodNonConvergence(const std::string& what, RodConfig last, double gradient_norm)
        : SolverError(what), last_(std::move(last)), gradient_norm_(gradient_norm) {}
    const RodConfig& last_iterate() const { return last_; }
    double gradient_norm() const { return gradient_norm_; }

private:
    RodConfig last_;
    double gradient_norm_;
};

/// Newton iteration in the tangent coordinates with a finite-difference
/// Hessian and a monotone backtracking line search. Keeps R_0 fixed.
RodSolveResult minimize_j2(const RodConfig& init, const Q1Form& form, const LoadProfile& load,
                           const RodSolverOptions& opts = {});

struct ElResidual {
    std::vector<Vec3> interior; ///< per interval midpoint; zero on the two end intervals
    Vec3 boundary = Vec3::Zero(); ///< (Ẽ11, Ê11, Ê21 - Ẽ31) at x1 = L
    double interior_max = 0.0;
    double interior_l2 = 0.0;
    double boundary_max = 0.0;
    double moment_scale = 0.0; ///< max |(Ẽ11, Ê11, Ê21 - Ẽ31)| over the rod
};

/// Residuals of the limit Euler–Lagrange moment system, with the moments
/// obtained from the section moment map at each a(x1).
ElResidual el_residual(const RodConfig& cfg, const LoadProfile& load, const MomentMap& moments);
ElResidual el_residual(const RodConfig& cfg, const LoadProfile& load, const CrossSectionMesh& section,
                       const ElasticityTensor& L);

} // namespace rodlimit
