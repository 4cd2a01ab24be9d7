#include "rodlimit/material.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rodlimit/errors.hpp"

namespace rodlimit {

namespace {

void require_finite(const Mat3& F)
{
    if (!F.allFinite())
        throw InputError("deformation gradient has non-finite entries");
}

// Singular values sorted descending with the sign of det F folded into the
// smallest one, so that sum (s_i - 1)² is the squared distance to SO(3).
Vec3 signed_singular_values(const Mat3& F)
{
    Eigen::JacobiSVD<Mat3> svd(F);
    Vec3 s = svd.singularValues();
    if (F.determinant() < 0.0)
        s[2] = -s[2];
    return s;
}

double dist2_to_so3(const Mat3& F)
{
    return (signed_singular_values(F) - Vec3::Ones()).squaredNorm();
}

Mat3 unit(int k)
{
    Vec9 e = Vec9::Zero();
    e[k] = 1.0;
    return unflatten(e);
}

} // namespace

std::string to_string(DensityKind kind)
{
    return kind == DensityKind::DistanceSquaredToSO3 ? "dist2" : "svk";
}

DensityKind density_kind_from_string(const std::string& name)
{
    if (name == "dist2")
        return DensityKind::DistanceSquaredToSO3;
    if (name == "svk")
        return DensityKind::IsotropicQuadraticStrain;
    throw InputError("unknown density '" + name + "' (expected dist2 or svk)");
}

ElasticityTensor ElasticityTensor::isotropic(double lambda, double mu)
{
    Mat9 m = Mat9::Zero();
    for (int k = 0; k < 9; ++k) {
        const Mat3 E = unit(k);
        m.col(k) = flatten(2.0 * mu * sym(E) + lambda * E.trace() * Mat3::Identity());
    }
    return ElasticityTensor(m);
}

double ElasticityTensor::min_symmetric_eigenvalue() const
{
    // Orthonormal basis of Sym(3).
    Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
    int c = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j, ++c) {
            Mat3 E = Mat3::Zero();
            if (i == j) {
                E(i, i) = 1.0;
            } else {
                E(i, j) = E(j, i) = std::sqrt(0.5);
            }
            B.col(c) = flatten(E);
        }
    const Eigen::Matrix<double, 6, 6> S = B.transpose() * matrix_ * B;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(0.5 * (S + S.transpose()));
    return eig.eigenvalues().minCoeff();
}

double energy(const EnergyDensity& W, const Mat3& F)
{
    require_finite(F);
    if (W.kind == DensityKind::DistanceSquaredToSO3)
        return dist2_to_so3(F);
    const Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
    const double tr = E.trace();
    return W.lame_mu * E.squaredNorm() + 0.5 * W.lame_lambda * tr * tr;
}

Mat3 stress(const EnergyDensity& W, const Mat3& F)
{
    require_finite(F);
    if (W.kind == DensityKind::DistanceSquaredToSO3) {
        if (!(F.determinant() > 0.0))
            throw DomainError("dist2 stress: det F <= 0 (cut locus of the projection onto SO(3))");
        return 2.0 * (F - nearest_rotation(F));
    }
    const Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
    const Mat3 S = 2.0 * W.lame_mu * E + W.lame_lambda * E.trace() * Mat3::Identity();
    return F * S;
}

Mat9 stress_derivative(const EnergyDensity& W, const Mat3& F)
{
    require_finite(F);
    Mat9 D;
    if (W.kind == DensityKind::DistanceSquaredToSO3) {
        if (!(F.determinant() > 0.0))
            throw DomainError("dist2 stress derivative: det F <= 0");
        Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Mat3& U = svd.matrixU();
        const Mat3& V = svd.matrixV();
        const Vec3 s = svd.singularValues();
        // Derivative of the polar rotation: dR = U Ω Vᵀ with
        // Ω_ij = (M - Mᵀ)_ij / (s_i + s_j), M = Uᵀ H V.
        for (int k = 0; k < 9; ++k) {
            const Mat3 H = unit(k);
            const Mat3 M = U.transpose() * H * V;
            Mat3 Om = Mat3::Zero();
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    if (i != j)
                        Om(i, j) = (M(i, j) - M(j, i)) / (s[i] + s[j]);
            D.col(k) = flatten(2.0 * (H - U * Om * V.transpose()));
        }
        return D;
    }
    const double lam = W.lame_lambda, mu = W.lame_mu;
    const Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
    const Mat3 S = 2.0 * mu * E + lam * E.trace() * Mat3::Identity();
    for (int k = 0; k < 9; ++k) {
        const Mat3 H = unit(k);
        const Mat3 dE = sym(F.transpose() * H);
        const Mat3 dS = 2.0 * mu * dE + lam * dE.trace() * Mat3::Identity();
        D.col(k) = flatten(H * S + F * dS);
    }
    return D;
}

ElasticityTensor linearized_tensor(const EnergyDensity& W)
{
    if (W.kind == DensityKind::DistanceSquaredToSO3)
        return ElasticityTensor::isotropic(0.0, 1.0);
    return ElasticityTensor::isotropic(W.lame_lambda, W.lame_mu);
}

double q3(const ElasticityTensor& L, const Mat3& F) { return L.contract(F, F); }

bool AxiomReport::all_pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const AxiomCheck& c) { return c.pass; });
}

const AxiomCheck& AxiomReport::check(const std::string& name) const
{
    for (const auto& c : checks)
        if (c.name == name)
            return c;
    throw InputError("no axiom check named '" + name + "'");
}

AxiomReport check_axioms(const EnergyDensity& W, int sample_count, double tol,
                         const AxiomSampling& sampling)
{
    std::mt19937_64 rng(sampling.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> squeeze(0.02, 0.09);
    std::uniform_real_distribution<double> near_one(0.8, 1.1);

    auto sample_F = [&](int i) -> Mat3 {
        if (sampling.include_compression && i % 2 == 1) {
            const Vec3 d(squeeze(rng), near_one(rng), near_one(rng));
            return random_rotation(rng) * d.asDiagonal() * random_rotation(rng);
        }
        Mat3 N;
        for (int k = 0; k < 9; ++k)
            N(k / 3, k % 3) = normal(rng);
        return random_rotation(rng) * (Mat3::Identity() + sampling.spread * N);
    };

    AxiomCheck frame{"frame_indifference"};
    AxiomCheck vanish{"vanishes_on_SO3"};
    AxiomCheck coercive{"coercivity"};
    AxiomCheck hess{"hessian_symmetry"};

    double min_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < std::max(sample_count, 1); ++i) {
        const Mat3 F = sample_F(i);
        const Mat3 Q = random_rotation(rng);
        const double wf = energy(W, F);
        frame.worst = std::max(frame.worst, std::abs(energy(W, Q * F) - wf) / (1.0 + wf));
        vanish.worst = std::max(vanish.worst, std::abs(energy(W, Q)));
        if (F.determinant() > 0.0) {
            const double d2 = dist2_to_so3(F);
            if (d2 > 1e-14)
                min_ratio = std::min(min_ratio, wf / d2);
        }
    }
    frame.pass = frame.worst <= tol;
    vanish.pass = vanish.worst <= tol;

    const double c_lin = 0.5 * linearized_tensor(W).min_symmetric_eigenvalue();
    AxiomReport report;
    report.coercivity_constant = std::isfinite(min_ratio) ? min_ratio : c_lin;
    report.coercivity_required = 0.5 * c_lin;
    coercive.worst = report.coercivity_constant;
    coercive.pass = report.coercivity_constant >= report.coercivity_required;

    // Central differences of the analytic stress at Id; symmetric only if W is C² there.
    const double step = 1e-4;
    Mat9 H;
    for (int k = 0; k < 9; ++k) {
        const Mat3 E = unit(k);
        H.col(k) = flatten(stress(W, Mat3::Identity() + step * E) - stress(W, Mat3::Identity() - step * E)) /
                   (2.0 * step);
    }
    hess.worst = (H - H.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, H.cwiseAbs().maxCoeff());
    hess.pass = hess.worst <= tol;

    report.checks = {frame, vanish, coercive, hess};
    return report;
}

} // namespace rodlimit
