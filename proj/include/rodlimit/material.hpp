#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rodlimit/linalg.hpp"

namespace rodlimit {

enum class DensityKind {
    DistanceSquaredToSO3,    ///< W(F) = dist²(F, SO(3))
    IsotropicQuadraticStrain ///< W(F) = μ/4 |FᵀF - Id|² + λ/8 (tr(FᵀF - Id))²
};

/// A frame-indifferent stored-energy density.
struct EnergyDensity {
    DensityKind kind = DensityKind::IsotropicQuadraticStrain;
    double lame_lambda = 0.0; ///< used by the isotropic kind only
    double lame_mu = 1.0;

    static EnergyDensity distance_squared() { return {DensityKind::DistanceSquaredToSO3, 0.0, 1.0}; }
    static EnergyDensity isotropic(double lambda, double mu)
    {
        return {DensityKind::IsotropicQuadraticStrain, lambda, mu};
    }
};

std::string to_string(DensityKind kind);
DensityKind density_kind_from_string(const std::string& name); // "dist2" | "svk"

/// Linear map on 3×3 matrices stored as a 9×9 matrix over the row-major
/// entry basis (see flatten()).
class ElasticityTensor {
public:
    ElasticityTensor() : matrix_(Mat9::Zero()) {}
    explicit ElasticityTensor(const Mat9& m) : matrix_(m) {}

    /// L F = 2μ sym F + λ (tr F) Id.
    static ElasticityTensor isotropic(double lambda, double mu);

    Mat3 apply(const Mat3& F) const { return unflatten(matrix_ * flatten(F)); }
    /// (L F) : G
    double contract(const Mat3& F, const Mat3& G) const { return flatten(G).dot(matrix_ * flatten(F)); }
    const Mat9& matrix() const { return matrix_; }

    /// Smallest eigenvalue of L restricted to symmetric matrices, in the
    /// Frobenius inner product.
    double min_symmetric_eigenvalue() const;

private:
    Mat9 matrix_;
};

double energy(const EnergyDensity& W, const Mat3& F);

/// DW(F). The distance-squared kind requires det F > 0.
Mat3 stress(const EnergyDensity& W, const Mat3& F);

/// D²W(F) as a 9×9 matrix: d(DW)[H] = unflatten(result * flatten(H)).
Mat9 stress_derivative(const EnergyDensity& W, const Mat3& F);

/// L = D²W(Id).
ElasticityTensor linearized_tensor(const EnergyDensity& W);

/// Q3(F) = L F : F.
double q3(const ElasticityTensor& L, const Mat3& F);

struct AxiomCheck {
    std::string name;
    bool pass = true;
    double worst = 0.0; ///< worst violation (or, for coercivity, smallest ratio)
};

struct AxiomReport {
    std::vector<AxiomCheck> checks;
    double coercivity_constant = 0.0; ///< min W/dist² over samples with det F > 0
    double coercivity_required = 0.0; ///< gate used for the coercivity check

    bool all_pass() const;
    const AxiomCheck& check(const std::string& name) const;
};

struct AxiomSampling {
    double spread = 0.1;          ///< size of the random perturbation of Id
    bool include_compression = false; ///< add strongly compressed samples (det F < 0.1)
    std::uint64_t seed = 12345;
};

/// Probes frame indifference, vanishing on SO(3), coercivity and symmetry of
/// the finite-difference Hessian at Id. Never throws on a failed check.
AxiomReport check_axioms(const EnergyDensity& W, int sample_count, double tol,
                         const AxiomSampling& sampling = {});

/// Uniformly distributed random rotation (from a normalised Gaussian quaternion).
template <class Rng> Mat3 random_rotation(Rng& rng);

} // namespace rodlimit

#include <random>

namespace rodlimit {
template <class Rng> Mat3 random_rotation(Rng& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}
} // namespace rodlimit
