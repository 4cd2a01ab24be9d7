#include "rodlimit/rod1d.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <numbers>

namespace rodlimit {

namespace {

const Mat3 kP = SkewCoords::from_rotation_vector_jacobian();

void check_grid(const RodConfig& cfg, const LoadProfile& load)
{
    if (load.g.size() != cfg.rotations.size())
        throw InputError("load profile and rod grid have different sizes");
}

// Trapezoidal weights of ∫ g·y on the node grid.
std::vector<double> trapezoid_weights(int intervals, double dx)
{
    std::vector<double> w(intervals + 1, dx);
    w.front() = w.back() = 0.5 * dx;
    return w;
}

// t_i such that ∫ g·y = Σ t_i · R_i e1 under trapezoidal reconstruction.
std::vector<Vec3> load_moments(const LoadProfile& load)
{
    const int n = load.intervals();
    const double dx = load.spacing();
    const auto w = trapezoid_weights(n, dx);
    std::vector<Vec3> tail(n + 2, Vec3::Zero()); // tail[i] = Σ_{j>=i} w_j g_j
    for (int j = n; j >= 0; --j)
        tail[j] = tail[j + 1] + w[j] * load.g[j];
    std::vector<Vec3> t(n + 1);
    for (int i = 0; i <= n; ++i) {
        t[i] = 0.5 * dx * tail[i + 1];
        if (i >= 1)
            t[i] += 0.5 * dx * tail[i];
    }
    return t;
}

Vec3 interval_rotation_vector(const Mat3& Ri, const Mat3& Rj, int interval)
{
    const Vec3 phi = so3_log(Ri.transpose() * Rj);
    if (phi.norm() >= std::numbers::pi - 1e-9)
        throw DomainError("rod grid too coarse: adjacent rotations differ by pi or more on interval " +
                          std::to_string(interval));
    return phi;
}

} // namespace

RodConfig RodConfig::straight(double length, int intervals)
{
    if (!(length > 0.0) || intervals < 1)
        throw InputError("rod grid needs length > 0 and at least one interval");
    RodConfig cfg;
    cfg.length = length;
    cfg.rotations.assign(intervals + 1, Mat3::Identity());
    return cfg;
}

void RodConfig::validate() const
{
    if (rotations.size() < 2 || !(length > 0.0))
        throw InputError("rod configuration needs length > 0 and at least two nodes");
    for (std::size_t i = 0; i < rotations.size(); ++i)
        if (orthogonality_defect(rotations[i]) > 1e-10 || rotations[i].determinant() <= 0.0)
            throw InputError("node " + std::to_string(i) + " does not carry a rotation");
}

RodFrame frame_from_rotations(const RodConfig& cfg)
{
    const int n = cfg.intervals();
    const double dx = cfg.spacing();
    RodFrame f;
    f.y.resize(n + 1);
    f.d2.resize(n + 1);
    f.d3.resize(n + 1);
    f.y[0].setZero();
    for (int i = 0; i <= n; ++i) {
        if (i > 0)
            f.y[i] = f.y[i - 1] + 0.5 * dx * (cfg.rotations[i - 1].col(0) + cfg.rotations[i].col(0));
        f.d2[i] = cfg.rotations[i].col(1);
        f.d3[i] = cfg.rotations[i].col(2);
    }
    return f;
}

std::vector<SkewCoords> curvature_torsion(const RodConfig& cfg)
{
    const int n = cfg.intervals();
    const double dx = cfg.spacing();
    std::vector<SkewCoords> a(n);
    for (int i = 0; i < n; ++i)
        a[i] = SkewCoords::from_rotation_vector(interval_rotation_vector(cfg.rotations[i], cfg.rotations[i + 1], i) / dx);
    return a;
}

std::vector<Vec3> tilde_g(const LoadProfile& load)
{
    const int n = load.intervals();
    const double dx = load.spacing();
    std::vector<Vec3> gt(n + 1, Vec3::Zero());
    for (int i = n - 1; i >= 0; --i)
        gt[i] = gt[i + 1] - 0.5 * dx * (load.g[i] + load.g[i + 1]);
    return gt;
}

RodEnergy energy_parts(const RodConfig& cfg, const Q1Form& form, const LoadProfile& load)
{
    check_grid(cfg, load);
    const double dx = cfg.spacing();
    RodEnergy e;
    for (const auto& a : curvature_torsion(cfg))
        e.elastic += 0.5 * dx * q1_eval(form, a);
    const auto frame = frame_from_rotations(cfg);
    const auto w = trapezoid_weights(cfg.intervals(), dx);
    for (std::size_t j = 0; j < frame.y.size(); ++j)
        e.load += w[j] * load.g[j].dot(frame.y[j]);
    return e;
}

double energy_j2(const RodConfig& cfg, const Q1Form& form, const LoadProfile& load)
{
    return energy_parts(cfg, form, load).total();
}

namespace {

std::vector<Vec3> gradient_with_moments(const RodConfig& cfg, const Q1Form& form, const std::vector<Vec3>& t)
{
    const int n = cfg.intervals();
    const double dx = cfg.spacing();
    std::vector<Vec3> g(n + 1, Vec3::Zero());
    for (int i = 0; i < n; ++i) {
        const Mat3 rel = cfg.rotations[i].transpose() * cfg.rotations[i + 1];
        const Vec3 phi = interval_rotation_vector(cfg.rotations[i], cfg.rotations[i + 1], i);
        const Vec3 a = kP * phi / dx;
        const Vec3 s = so3_right_jacobian_inv(phi).transpose() * (kP.transpose() * (form.matrix * a));
        g[i + 1] += s;
        g[i] -= rel * s;
    }
    const Vec3 e1 = Vec3::UnitX();
    for (int i = 0; i <= n; ++i)
        g[i] -= e1.cross(cfg.rotations[i].transpose() * t[i]);
    g[0].setZero();
    return g;
}

} // namespace

std::vector<Vec3> energy_gradient(const RodConfig& cfg, const Q1Form& form, const LoadProfile& load)
{
    check_grid(cfg, load);
    return gradient_with_moments(cfg, form, load_moments(load));
}

double gradient_norm(const std::vector<Vec3>& gradient, double spacing)
{
    double s = 0.0;
    for (const auto& g : gradient)
        s += g.squaredNorm();
    return std::sqrt(s / spacing);
}

namespace {

void retract(RodConfig& cfg, const Eigen::VectorXd& xi, double step)
{
    for (int i = 1; i <= cfg.intervals(); ++i)
        cfg.rotations[i] = nearest_rotation(cfg.rotations[i] * so3_exp(step * xi.segment<3>(3 * (i - 1))));
}

Eigen::VectorXd pack_free(const std::vector<Vec3>& g)
{
    Eigen::VectorXd v(3 * (g.size() - 1));
    for (std::size_t i = 1; i < g.size(); ++i)
        v.segment<3>(3 * (i - 1)) = g[i];
    return v;
}

// Central differences of the gradient; the Hessian is block tridiagonal, so
// nodes are perturbed three colours at a time.
Eigen::SparseMatrix<double> fd_hessian(const RodConfig& cfg, const Q1Form& form, const std::vector<Vec3>& t,
                                       double step)
{
    const int n = cfg.intervals();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(27 * n);
    for (int colour = 0; colour < 3; ++colour)
        for (int k = 0; k < 3; ++k) {
            RodConfig plus = cfg, minus = cfg;
            bool any = false;
            for (int j = 1; j <= n; ++j)
                if (j % 3 == colour) {
                    any = true;
                    plus.rotations[j] = cfg.rotations[j] * so3_exp(step * Vec3::Unit(k));
                    minus.rotations[j] = cfg.rotations[j] * so3_exp(-step * Vec3::Unit(k));
                }
            if (!any)
                continue;
            const auto gp = gradient_with_moments(plus, form, t);
            const auto gm = gradient_with_moments(minus, form, t);
            for (int i = 1; i <= n; ++i)
                for (int j = std::max(1, i - 1); j <= std::min(n, i + 1); ++j) {
                    if (j % 3 != colour)
                        continue;
                    const Vec3 col = (gp[i] - gm[i]) / (2.0 * step);
                    for (int r = 0; r < 3; ++r)
                        trip.emplace_back(3 * (i - 1) + r, 3 * (j - 1) + k, col[r]);
                }
        }
    Eigen::SparseMatrix<double> H(3 * n, 3 * n);
    H.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseMatrix<double> Ht = H.transpose();
    return 0.5 * (H + Ht);
}

} // namespace

RodSolveResult minimize_j2(const RodConfig& init, const Q1Form& form, const LoadProfile& load,
                           const RodSolverOptions& opts)
{
    init.validate();
    check_grid(init, load);
    if (!init.rotations.front().isApprox(Mat3::Identity(), 1e-12))
        throw InputError("minimize_j2: the initial configuration must be clamped (R_0 = Id)");

    const double dx = init.spacing();
    const auto t = load_moments(load);
    RodSolveResult res;
    res.config = init;
    auto& cfg = res.config;
    cfg.rotations.front() = Mat3::Identity();

    double energy = energy_j2(cfg, form, load);
    auto grad = gradient_with_moments(cfg, form, t);
    double gnorm = gradient_norm(grad, dx);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;

    for (res.iterations = 0; gnorm > opts.tol; ++res.iterations) {
        if (res.iterations >= opts.max_iters)
            throw RodNonConvergence("minimize_j2: no convergence after " + std::to_string(opts.max_iters) +
                                        " iterations (gradient norm " + std::to_string(gnorm) + ")",
                                    cfg, gnorm);
        const Eigen::VectorXd g = pack_free(grad);
        Eigen::SparseMatrix<double> H = fd_hessian(cfg, form, t, opts.fd_step);
        const double diag = H.diagonal().cwiseAbs().maxCoeff();
        Eigen::VectorXd xi;
        double shift = 0.0;
        for (int attempt = 0;; ++attempt) {
            Eigen::SparseMatrix<double> S = H;
            if (shift > 0.0)
                for (int k = 0; k < S.rows(); ++k)
                    S.coeffRef(k, k) += shift;
            ldlt.compute(S);
            if (ldlt.info() == Eigen::Success) {
                xi = ldlt.solve(-g);
                if (ldlt.info() == Eigen::Success && xi.allFinite() && xi.dot(g) < 0.0)
                    break;
            }
            if (attempt > 30) {
                xi = -g; // steepest descent as a last resort
                break;
            }
            shift = shift == 0.0 ? 1e-8 * std::max(diag, 1e-300) : 10.0 * shift;
        }

        const double slope = xi.dot(g);
        bool accepted = false;
        for (double step = 1.0; step > 1e-12; step *= 0.5) {
            RodConfig trial = cfg;
            try {
                retract(trial, xi, step);
                const double e = energy_j2(trial, form, load);
                if (e > energy && !(e <= energy + 1e-4 * step * slope))
                    continue;
                auto tg = gradient_with_moments(trial, form, t);
                const double tn = gradient_norm(tg, dx);
                if (e <= energy + 1e-4 * step * slope || tn < gnorm) {
                    cfg = std::move(trial);
                    energy = e;
                    grad = std::move(tg);
                    gnorm = tn;
                    accepted = true;
                    break;
                }
            } catch (const DomainError&) {
                continue;
            }
        }
        if (!accepted)
            throw RodNonConvergence("minimize_j2: line search failed (gradient norm " + std::to_string(gnorm) + ")",
                                    cfg, gnorm);
    }
    res.energy = energy;
    res.gradient_norm = gnorm;
    return res;
}

ElResidual el_residual(const RodConfig& cfg, const LoadProfile& load, const MomentMap& moments)
{
    check_grid(cfg, load);
    const int n = cfg.intervals();
    const double dx = cfg.spacing();
    const auto a = curvature_torsion(cfg);
    const auto gt = tilde_g(load);
    std::vector<Vec3> m(n);
    ElResidual r;
    for (int i = 0; i < n; ++i) {
        m[i] = moments.apply(a[i]);
        r.moment_scale = std::max(r.moment_scale, m[i].cwiseAbs().maxCoeff());
    }
    // Staggered evaluation at interval midpoints: the moments live on the
    // intervals, their derivative is the central difference over the two
    // neighbours. The two end intervals are skipped.
    r.interior.assign(n, Vec3::Zero());
    double l2 = 0.0;
    for (int i = 1; i + 1 < n; ++i) {
        const Vec3 dm = (m[i + 1] - m[i - 1]) / (2.0 * dx);
        const Vec3& mm = m[i];
        const Vec3 A = a[i].vec(); // (A12, A13, A23)
        const Mat3 R = geodesic_interpolate(cfg.rotations[i], cfg.rotations[i + 1], 0.5);
        const Vec3 load_term = R.transpose() * (0.5 * (gt[i] + gt[i + 1]));
        Vec3 res;
        res[0] = dm[0] - A[1] * mm[2] + A[2] * mm[1] + load_term[1];
        res[1] = dm[1] + A[0] * mm[2] - A[2] * mm[0] + load_term[2];
        res[2] = dm[2] - A[0] * mm[1] + A[1] * mm[0];
        r.interior[i] = res;
        r.interior_max = std::max(r.interior_max, res.cwiseAbs().maxCoeff());
        l2 += dx * res.squaredNorm();
    }
    r.interior_l2 = std::sqrt(l2);
    r.boundary = n >= 2 ? Vec3(1.5 * m[n - 1] - 0.5 * m[n - 2]) : m[0];
    r.boundary_max = r.boundary.cwiseAbs().maxCoeff();
    return r;
}

ElResidual el_residual(const RodConfig& cfg, const LoadProfile& load, const CrossSectionMesh& section,
                       const ElasticityTensor& L)
{
    return el_residual(cfg, load, moment_map(section, L));
}

} // namespace rodlimit
