#pragma once

#include <vector>

#include "rodlimit/cross_section.hpp"
#include "rodlimit/errors.hpp"
#include "rodlimit/linalg.hpp"
#include "rodlimit/load_spec.hpp"
#include "rodlimit/material.hpp"
#include "rodlimit/rod1d.hpp"

namespace rodlimit {

enum class AxialQuadrature {
    Midpoint,  ///< one point per axial interval (default; free of shear locking)
    Gauss2     ///< two-point Gauss
};

/// Prisms (axial interval) × (section triangle) on Ω = (0, L) × S.
/// Node (k, s) is axial node k and section node s; its index is k * Ns + s.
class BeamMesh {
public:
    BeamMesh(CrossSectionMesh section, double length, int axial_intervals, double h,
             AxialQuadrature quadrature = AxialQuadrature::Midpoint);

    const CrossSectionMesh& section() const { return section_; }
    double length() const { return length_; }
    int axial_intervals() const { return n1_; }
    double h() const { return h_; }
    double dx1() const { return length_ / n1_; }
    double x1(int k) const { return length_ * k / n1_; }
    AxialQuadrature quadrature() const { return quadrature_; }

    int section_nodes() const { return static_cast<int>(section_.nodes.size()); }
    int section_triangles() const { return static_cast<int>(section_.triangles.size()); }
    int node_count() const { return (n1_ + 1) * section_nodes(); }
    int node(int k, int s) const { return k * section_nodes() + s; }
    int element_count() const { return n1_ * section_triangles(); }

    /// Quadrature points: element e = k * T + t holds points
    /// [e * points_per_element(), (e + 1) * points_per_element()).
    int axial_points() const { return quadrature_ == AxialQuadrature::Midpoint ? 1 : 2; }
    int points_per_element() const { return 3 * axial_points(); }
    int point_count() const { return element_count() * points_per_element(); }

    struct Point {
        double weight;  ///< volume weight on Ω
        double x1;
        Vec2 x;         ///< (x2, x3)
        int element;
        std::array<double, 2> axial_shape; ///< ψ_0, ψ_1 at x1
        std::array<double, 3> section_shape; ///< barycentric coordinates
    };
    Point point(int q) const;

    /// Section hat-function gradients and area of triangle t.
    const std::array<Vec2, 3>& triangle_gradients(int t) const { return grads_[t]; }
    double triangle_area(int t) const { return areas_[t]; }
    /// ∫_S φ_s for every section node.
    const std::vector<double>& section_node_weights() const { return node_weights_; }

private:
    CrossSectionMesh section_;
    double length_;
    int n1_;
    double h_;
    AxialQuadrature quadrature_;
    std::vector<std::array<Vec2, 3>> grads_;
    std::vector<double> areas_;
    std::vector<double> node_weights_;
};

/// Nodal deformation y on the fixed domain Ω.
struct BeamState {
    std::vector<Vec3> y;

    /// y = (x1, h x2, h x3).
    static BeamState identity(const BeamMesh& mesh);
    /// y = Q (x1, h x2, h x3) + c.
    static BeamState rigid(const BeamMesh& mesh, const Mat3& Q, const Vec3& c);
    /// y = y_rod(x1) + h x2 d2(x1) + h x3 d3(x1), rod sampled by linear and
    /// geodesic interpolation.
    static BeamState lift(const BeamMesh& mesh, const RodConfig& rod);

    /// max |y(0, x2, x3) - (0, h x2, h x3)| over the clamped face.
    double clamp_defect(const BeamMesh& mesh) const;
};

/// ∇_h y = (∂1y | ∂2y / h | ∂3y / h) at every quadrature point.
std::vector<Mat3> scaled_gradient(const BeamState& state, const BeamMesh& mesh);

struct BeamEnergy {
    double elastic = 0.0; ///< I^h = ∫ W(∇_h y)
    double load = 0.0;    ///< h² ∫ g·y
    double total() const { return elastic - load; }
};

/// J^h. The load is interpolated linearly between the mesh's axial nodes
/// and integrated exactly. Throws DomainError naming the element when the
/// distance-squared density meets det ∇_h y <= 0.
BeamEnergy energy_jh(const BeamState& state, const BeamMesh& mesh, const EnergyDensity& W, const LoadProfile& load);

struct BeamSolverOptions {
    double tol = 1e-8;  ///< on ‖∇J‖ relative to ‖load vector‖ (absolute when the load vanishes)
    int max_iters = 50;
};

struct BeamSolveResult {
    BeamState state;
    BeamEnergy energy;
    double gradient_norm = 0.0;     ///< ‖∇J‖ over free nodes
    double gradient_scale = 0.0;    ///< ‖load vector‖
    double energy_constant = 0.0;   ///< I^h / h², the measured bound constant
    int iterations = 0;
    // Stopped on the round-off floor: a full Newton step no longer halves the
    // gradient and the Newton decrement is below 1e-16 of the energy scale.
    bool at_roundoff_floor = false;
};

class BeamNonConvergence : public SolverError {
public:
    BeamNonConvergence(const std::string& what, BeamState last, double gradient_norm)
        : SolverError(what), last_(std::move(last)), gradient_norm_(gradient_norm) {}
    const BeamState& last_iterate() const { return last_; }
    double gradient_norm() const { return gradient_norm_; }

private:
    BeamState last_;
    double gradient_norm_;
};

/// Newton's method on the free nodes with the analytic tangent, sparse
/// Cholesky (shifted when indefinite) and a backtracking line search that
/// rejects inverted elements. The clamped face is copied from init.
BeamSolveResult minimize_jh(const BeamState& init, const BeamMesh& mesh, const EnergyDensity& W,
                            const LoadProfile& load, const BeamSolverOptions& opts = {});

/// Gradient of J^h with respect to every nodal value (clamped nodes included).
std::vector<Vec3> energy_gradient_jh(const BeamState& state, const BeamMesh& mesh, const EnergyDensity& W,
                                     const LoadProfile& load);

enum class Mollifier { LocalLinear, Renormalized };

/// Per-axial-node rotations: slab averages of ∇_h y over ⌈h/Δx1⌉ elements,
/// projected to SO(3), then smoothed along x1 with a Gaussian of width h
/// (truncated at 3h) in log coordinates. LocalLinear fits an affine trend in
/// the window, Renormalized takes the weighted mean. Throws DomainError when
/// a slab average has nonpositive determinant.
std::vector<Mat3> extract_rotations(const BeamState& state, const BeamMesh& mesh,
                                    Mollifier mollifier = Mollifier::LocalLinear);

/// Same smoothing evaluated directly at every quadrature point.
std::vector<Mat3> extract_rotations_at_points(const BeamState& state, const BeamMesh& mesh,
                                              Mollifier mollifier = Mollifier::LocalLinear);

/// Rotation field at every quadrature point (geodesic interpolation of the
/// nodal rotations).
std::vector<Mat3> rotations_at_points(const std::vector<Mat3>& nodal, const BeamMesh& mesh);

/// G = (Rᵀ∇_h y - Id) / h at every quadrature point.
std::vector<Mat3> strain_g(const BeamState& state, const std::vector<Mat3>& rotations, const BeamMesh& mesh);

/// E = DW(Id + hG) / h pointwise.
std::vector<Mat3> stress_e(const std::vector<Mat3>& G, const EnergyDensity& W, double h);

/// Section moments ∫E, ∫x2 E, ∫x3 E at each axial quadrature station
/// (station j = axial interval j / axial_points(), point j % axial_points()).
struct StationMoments {
    std::vector<double> x1;
    std::vector<Mat3> mean;
    std::vector<Mat3> first_x2;
    std::vector<Mat3> first_x3;
};
StationMoments moments_3d(const std::vector<Mat3>& field, const BeamMesh& mesh);

/// ‖F‖ integrated over Ω: the L² (p = 2) or L¹ (p = 1) norm of a
/// per-point matrix field in the Frobenius norm.
double field_norm(const std::vector<Mat3>& field, const BeamMesh& mesh, int p);

/// Section averages at each axial node.
struct BeamProfiles {
    std::vector<double> x1;
    std::vector<Vec3> midline;   ///< ∫_S y
    std::vector<Vec3> director2; ///< (1/h) ∫_S ∂2 y
    std::vector<Vec3> director3; ///< (1/h) ∫_S ∂3 y
};
BeamProfiles section_profiles(const BeamState& state, const BeamMesh& mesh);

struct BeamDiagnostics {
    BeamEnergy energy;
    std::vector<Mat3> rotations; ///< per axial node
    StationMoments moments;
    BeamProfiles profiles;
    double rigidity_norm = 0.0;       ///< ‖∇_h y - R‖_L², R evaluated at the quadrature points
    double rigidity_norm_renormalized = 0.0; ///< same with the renormalised-mean mollifier
    double symmetry_defect = 0.0;     ///< ‖E - Eᵀ‖_L¹
    double linearization_defect = 0.0; ///< ‖E - L G‖_L²
    double strain_norm = 0.0;         ///< ‖G‖_L²
    double stress_norm = 0.0;         ///< ‖E‖_L²
    double moment_identity_residual = 0.0; ///< ‖Ē e1 + h Rᵀ g̃‖_L²(0,L)
    double moment_identity_scale = 0.0;    ///< h ‖g̃‖_L²(0,L)
};

BeamDiagnostics compute_diagnostics(const BeamState& state, const BeamMesh& mesh, const EnergyDensity& W,
                                    const LoadProfile& load);

} // namespace rodlimit
