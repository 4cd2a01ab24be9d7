#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

#include "rodlimit/linalg.hpp"
#include "rodlimit/material.hpp"

namespace rodlimit {

/// Triangulated planar cross-section with its geometric moments.
struct CrossSectionMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;

    double area = 0.0;
    Vec2 first_moments = Vec2::Zero();  ///< (∫x2, ∫x3)
    double product_moment = 0.0;        ///< ∫x2 x3
    Vec2 second_moments = Vec2::Zero(); ///< (∫x2², ∫x3²)

    /// Recompute the moments; throws InputError on degenerate triangles
    /// and reorients clockwise ones.
    void update_moments();

    Vec2 centroid() const { return first_moments / area; }
    double diameter() const;
    double triangle_area(std::size_t t) const;
    /// Edges that belong to exactly one triangle.
    std::vector<std::array<int, 2>> boundary_edges() const;
    bool connected() const;
};

CrossSectionMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const CrossSectionMesh& mesh, const std::filesystem::path& path);

/// Quasi-uniform triangulation of the disc of the given radius: a refined
/// hexagon (2^refinement subdivisions per side) mapped radially onto the disc.
CrossSectionMesh generate_disc(double radius, int refinement);

/// x_normalised = scale * Rot(-angle) * (x + shift)
struct SectionTransform {
    Vec2 shift = Vec2::Zero();
    double angle = 0.0;
    double scale = 1.0;

    Vec2 apply(const Vec2& x) const;
    Vec2 invert(const Vec2& x) const;
};

/// Moves the centroid to the origin, rotates to principal axes and scales to
/// unit area.
std::pair<CrossSectionMesh, SectionTransform> normalize_section(const CrossSectionMesh& mesh);

struct ConstraintResiduals {
    Vec3 mean = Vec3::Zero();  ///< ∫α
    Vec3 mean_d2 = Vec3::Zero(); ///< ∫∂2α
    Vec3 mean_d3 = Vec3::Zero(); ///< ∫∂3α

    double max_abs() const;
};

/// P1 warping field α(x2, x3) solving the cell problem for one skew matrix.
struct WarpingField {
    std::vector<Vec3> values; ///< per node
    SkewCoords source;        ///< the skew parameter it answers
    double weak_residual = 0.0; ///< ‖Kα + f‖ / ‖f‖ of the discrete weak form
    ConstraintResiduals constraints;
};

/// Q1 as a 3×3 symmetric matrix acting on (A12, A13, A23).
struct Q1Form {
    Mat3 matrix = Mat3::Zero();
};

double q1_eval(const Q1Form& form, const SkewCoords& a);

/// Limit stress E = L(x2 A e2 + x3 A e3 | ∂2α | ∂3α). E is affine on each
/// triangle: centroid value plus the (mesh-independent) spatial gradient.
struct SectionStress {
    std::vector<Mat3> centroid; ///< per triangle
    Mat3 d_x2 = Mat3::Zero();   ///< ∂E/∂x2
    Mat3 d_x3 = Mat3::Zero();   ///< ∂E/∂x3
};

/// Zeroth and first moments of a section stress: Ē = ∫E, Ẽ = ∫x2 E, Ê = ∫x3 E.
struct BendingMoments {
    Mat3 mean = Mat3::Zero();
    Mat3 first_x2 = Mat3::Zero();
    Mat3 first_x3 = Mat3::Zero();
};

/// Linear map a ↦ (Ẽ11, Ê11, Ê21 - Ẽ31) given by the cell problem.
struct MomentMap {
    Mat3 matrix = Mat3::Zero();
    Vec3 apply(const SkewCoords& a) const { return matrix * a.vec(); }
};

/// The cell problem on one section for one elasticity tensor. Assembles and
/// factorises the constrained (KKT) system once; solve() is then cheap and
/// may be called concurrently.
class CellProblem {
public:
    CellProblem(const CrossSectionMesh& mesh, const ElasticityTensor& L);
    ~CellProblem();
    CellProblem(CellProblem&&) noexcept;
    CellProblem& operator=(CellProblem&&) noexcept;

    WarpingField solve(const SkewCoords& a) const;

    /// F_A(α) = ∫ Q3(x2 A e2 + x3 A e3 | ∂2α | ∂3α), exact for P1 fields.
    double energy(const SkewCoords& a, const std::vector<Vec3>& alpha) const;
    /// Bilinear form associated with energy().
    double bilinear(const SkewCoords& a, const std::vector<Vec3>& alpha, const SkewCoords& b,
                    const std::vector<Vec3>& beta) const;
    /// max_i |∫ E : (0 | ∂2φ_i | ∂3φ_i)| relative to the load scale.
    double weak_residual(const SkewCoords& a, const std::vector<Vec3>& alpha) const;
    ConstraintResiduals constraints(const std::vector<Vec3>& alpha) const;

    const CrossSectionMesh& mesh() const;
    const ElasticityTensor& tensor() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

WarpingField solve_cell_problem(const CrossSectionMesh& mesh, const ElasticityTensor& L, const SkewCoords& a);

Q1Form assemble_q1(const CrossSectionMesh& mesh, const ElasticityTensor& L);
Q1Form assemble_q1(const CellProblem& cell);

SectionStress stress_field(const CrossSectionMesh& mesh, const ElasticityTensor& L, const SkewCoords& a,
                           const WarpingField& alpha);

BendingMoments bending_moments(const SectionStress& stress, const CrossSectionMesh& mesh);

MomentMap moment_map(const CellProblem& cell);
MomentMap moment_map(const CrossSectionMesh& mesh, const ElasticityTensor& L);

} // namespace rodlimit
