#include "rodlimit/beam3d.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rodlimit/kernels.hpp"
#include "rodlimit/parallel.hpp"
#include "rodlimit/spd_solver.hpp"

namespace rodlimit {

namespace {

constexpr std::size_t kElementChunk = 256;

// Structure-of-arrays packing for the batched kernels.
std::vector<double> to_soa(const std::vector<Mat3>& m)
{
    const std::size_t n = m.size();
    std::vector<double> out(9 * n);
    for (std::size_t q = 0; q < n; ++q)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                out[(3 * i + j) * n + q] = m[q](i, j);
    return out;
}

std::vector<Mat3> from_soa(const std::vector<double>& v, std::size_t n)
{
    std::vector<Mat3> out(n);
    for (std::size_t q = 0; q < n; ++q)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                out[q](i, j) = v[(3 * i + j) * n + q];
    return out;
}

struct AxialRule {
    std::array<double, 2> xi;
    std::array<double, 2> w;
    int n;
};

AxialRule axial_rule(AxialQuadrature q)
{
    if (q == AxialQuadrature::Midpoint)
        return {{0.5, 0.0}, {1.0, 0.0}, 1};
    const double d = 0.5 / std::sqrt(3.0);
    return {{0.5 - d, 0.5 + d}, {0.5, 0.5}, 2};
}

// Global node indices of the 6 element nodes, local index a * 3 + l.
std::array<int, 6> element_nodes(const BeamMesh& mesh, int e)
{
    const int k = e / mesh.section_triangles();
    const auto& tri = mesh.section().triangles[e % mesh.section_triangles()];
    std::array<int, 6> n;
    for (int a = 0; a < 2; ++a)
        for (int l = 0; l < 3; ++l)
            n[3 * a + l] = mesh.node(k + a, tri[l]);
    return n;
}

// Scaled shape-function gradients (∂1, ∂2/h, ∂3/h) of the 6 element nodes
// at one quadrature point.
using ShapeGradients = std::array<Vec3, 6>;

ShapeGradients shape_gradients(const BeamMesh& mesh, const BeamMesh::Point& p)
{
    const auto& g = mesh.triangle_gradients(p.element % mesh.section_triangles());
    const double dpsi[2] = {-1.0 / mesh.dx1(), 1.0 / mesh.dx1()};
    ShapeGradients d;
    for (int a = 0; a < 2; ++a)
        for (int l = 0; l < 3; ++l)
            d[3 * a + l] = Vec3(dpsi[a] * p.section_shape[l], p.axial_shape[a] * g[l].x() / mesh.h(),
                                p.axial_shape[a] * g[l].y() / mesh.h());
    return d;
}

void check_load(const BeamMesh& mesh, const LoadProfile& load)
{
    if (load.intervals() != mesh.axial_intervals() || std::abs(load.length - mesh.length()) > 1e-12 * mesh.length())
        throw InputError("load profile does not match the beam's axial grid");
}

// Consistent nodal load h² ∫ g ψ_k φ_s with g linear between axial nodes.
std::vector<Vec3> load_vector(const BeamMesh& mesh, const LoadProfile& load)
{
    check_load(mesh, load);
    const int n1 = mesh.axial_intervals(), ns = mesh.section_nodes();
    const double dx = mesh.dx1(), h2 = mesh.h() * mesh.h();
    std::vector<Vec3> axial(n1 + 1, Vec3::Zero());
    for (int j = 0; j < n1; ++j) {
        axial[j] += dx * (load.g[j] / 3.0 + load.g[j + 1] / 6.0);
        axial[j + 1] += dx * (load.g[j] / 6.0 + load.g[j + 1] / 3.0);
    }
    std::vector<Vec3> f(mesh.node_count());
    const auto& w = mesh.section_node_weights();
    for (int k = 0; k <= n1; ++k)
        for (int s = 0; s < ns; ++s)
            f[mesh.node(k, s)] = h2 * w[s] * axial[k];
    return f;
}

// g̃(x) = -∫_x^L g for g linear between the nodes of the load grid.
Vec3 tilde_g_at(const LoadProfile& load, const std::vector<Vec3>& nodal, double x)
{
    const int n = load.intervals();
    const double dx = load.spacing();
    const int k = std::clamp(static_cast<int>(std::floor(x / dx)), 0, n - 1);
    const double s = x - k * dx;
    return nodal[k] + s * load.g[k] + s * s / (2.0 * dx) * (load.g[k + 1] - load.g[k]);
}

struct PointData {
    std::vector<Mat3> F;
    std::vector<double> energy;
    std::vector<Mat3> stress;
};

// W and DW at every quadrature point; SVK goes through the batched kernel.
void evaluate_density(const EnergyDensity& W, const std::vector<Mat3>& F, const BeamMesh& mesh,
                      std::vector<double>& energy, std::vector<Mat3>* stress)
{
    const std::size_t n = F.size();
    energy.assign(n, 0.0);
    if (W.kind == DensityKind::IsotropicQuadraticStrain) {
        const auto f = to_soa(F);
        std::vector<double> s(9 * n);
        kernels::svk_energy_stress(f, {W.lame_lambda, W.lame_mu}, energy, s);
        if (stress)
            *stress = from_soa(s, n);
        return;
    }
    if (stress)
        stress->assign(n, Mat3::Zero());
    const int ppe = mesh.points_per_element();
    parallel_for(n, kElementChunk * ppe, [&](std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q) {
            if (!(F[q].determinant() > 0.0))
                throw DomainError("element " + std::to_string(q / ppe) + ": det of the scaled gradient <= 0");
            energy[q] = rodlimit::energy(W, F[q]);
            if (stress)
                (*stress)[q] = rodlimit::stress(W, F[q]);
        }
    });
}

double min_determinant(const std::vector<Mat3>& F)
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& f : F)
        m = std::min(m, f.determinant());
    return m;
}

} // namespace

// ---------------------------------------------------------------------------

BeamMesh::BeamMesh(CrossSectionMesh section, double length, int axial_intervals, double h, AxialQuadrature quadrature)
    : section_(std::move(section)), length_(length), n1_(axial_intervals), h_(h), quadrature_(quadrature)
{
    if (!(length > 0.0) || axial_intervals < 1 || !(h > 0.0))
        throw InputError("beam mesh needs length > 0, at least one axial interval and h > 0");
    if (section_.triangles.empty())
        throw InputError("beam mesh: empty section");
    section_.update_moments();
    grads_.resize(section_.triangles.size());
    areas_.resize(section_.triangles.size());
    node_weights_.assign(section_.nodes.size(), 0.0);
    for (std::size_t t = 0; t < section_.triangles.size(); ++t) {
        const auto& tri = section_.triangles[t];
        const Vec2& p0 = section_.nodes[tri[0]];
        Mat2 J;
        J.col(0) = section_.nodes[tri[1]] - p0;
        J.col(1) = section_.nodes[tri[2]] - p0;
        areas_[t] = 0.5 * J.determinant();
        if (!(areas_[t] > 0.0))
            throw InputError("beam mesh: prism over triangle " + std::to_string(t) + " has nonpositive volume");
        const Mat2 Jit = J.inverse().transpose();
        grads_[t] = {Vec2(-Jit.col(0) - Jit.col(1)), Vec2(Jit.col(0)), Vec2(Jit.col(1))};
        for (int l = 0; l < 3; ++l)
            node_weights_[tri[l]] += areas_[t] / 3.0;
    }
}

BeamMesh::Point BeamMesh::point(int q) const
{
    const int ppe = points_per_element();
    const int e = q / ppe, r = q % ppe;
    const int a = r / 3, s = r % 3;
    const int k = e / section_triangles(), t = e % section_triangles();
    const auto rule = axial_rule(quadrature_);
    Point p;
    p.element = e;
    p.x1 = (k + rule.xi[a]) * dx1();
    p.axial_shape = {1.0 - rule.xi[a], rule.xi[a]};
    p.section_shape = {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
    p.section_shape[s] = 2.0 / 3.0;
    const auto& tri = section_.triangles[t];
    p.x = Vec2::Zero();
    for (int l = 0; l < 3; ++l)
        p.x += p.section_shape[l] * section_.nodes[tri[l]];
    p.weight = dx1() * rule.w[a] * areas_[t] / 3.0;
    return p;
}

BeamState BeamState::identity(const BeamMesh& mesh)
{
    return rigid(mesh, Mat3::Identity(), Vec3::Zero());
}

BeamState BeamState::rigid(const BeamMesh& mesh, const Mat3& Q, const Vec3& c)
{
    BeamState s;
    s.y.resize(mesh.node_count());
    for (int k = 0; k <= mesh.axial_intervals(); ++k)
        for (int n = 0; n < mesh.section_nodes(); ++n) {
            const Vec2& x = mesh.section().nodes[n];
            s.y[mesh.node(k, n)] = Q * Vec3(mesh.x1(k), mesh.h() * x.x(), mesh.h() * x.y()) + c;
        }
    return s;
}

BeamState BeamState::lift(const BeamMesh& mesh, const RodConfig& rod)
{
    rod.validate();
    if (std::abs(rod.length - mesh.length()) > 1e-12 * mesh.length())
        throw InputError("lift: rod and beam lengths differ");
    const auto frame = frame_from_rotations(rod);
    const int nr = rod.intervals();
    BeamState s;
    s.y.resize(mesh.node_count());
    for (int k = 0; k <= mesh.axial_intervals(); ++k) {
        const double u = mesh.x1(k) / rod.spacing();
        const int j = std::clamp(static_cast<int>(std::floor(u)), 0, nr - 1);
        const double t = u - j;
        const Vec3 yc = (1.0 - t) * frame.y[j] + t * frame.y[j + 1];
        const Mat3 R = geodesic_interpolate(rod.rotations[j], rod.rotations[j + 1], t);
        for (int n = 0; n < mesh.section_nodes(); ++n) {
            const Vec2& x = mesh.section().nodes[n];
            s.y[mesh.node(k, n)] = yc + mesh.h() * (x.x() * R.col(1) + x.y() * R.col(2));
        }
    }
    return s;
}

double BeamState::clamp_defect(const BeamMesh& mesh) const
{
    double d = 0.0;
    for (int n = 0; n < mesh.section_nodes(); ++n) {
        const Vec2& x = mesh.section().nodes[n];
        d = std::max(d, (y[mesh.node(0, n)] - Vec3(0.0, mesh.h() * x.x(), mesh.h() * x.y())).norm());
    }
    return d;
}

std::vector<Mat3> scaled_gradient(const BeamState& state, const BeamMesh& mesh)
{
    if (static_cast<int>(state.y.size()) != mesh.node_count())
        throw InputError("beam state does not match the mesh");
    const int ppe = mesh.points_per_element();
    std::vector<Mat3> F(mesh.point_count());
    parallel_for(mesh.element_count(), kElementChunk, [&](std::size_t b, std::size_t e_end) {
        for (int e = static_cast<int>(b); e < static_cast<int>(e_end); ++e) {
            const auto nodes = element_nodes(mesh, e);
            for (int r = 0; r < ppe; ++r) {
                const int q = e * ppe + r;
                const auto d = shape_gradients(mesh, mesh.point(q));
                Mat3 f = Mat3::Zero();
                for (int n = 0; n < 6; ++n)
                    f += state.y[nodes[n]] * d[n].transpose();
                F[q] = f;
            }
        }
    });
    return F;
}

BeamEnergy energy_jh(const BeamState& state, const BeamMesh& mesh, const EnergyDensity& W, const LoadProfile& load)
{
    const auto F = scaled_gradient(state, mesh);
    std::vector<double> w;
    evaluate_density(W, F, mesh, w, nullptr);
    BeamEnergy e;
    for (int q = 0; q < mesh.point_count(); ++q)
        e.elastic += mesh.point(q).weight * w[q];
    const auto f = load_vector(mesh, load);
    for (int n = 0; n < mesh.node_count(); ++n)
        e.load += f[n].dot(state.y[n]);
    return e;
}

// ---------------------------------------------------------------------------
// Newton solver

namespace {

class Assembler {
public:
    Assembler(const BeamMesh& mesh, const EnergyDensity& W, const LoadProfile& load)
        : mesh_(mesh), W_(W), load_(load_vector(mesh, load))
    {
        const int ns = mesh.section_nodes();
        nfree_ = 3 * (mesh.node_count() - ns);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(mesh.element_count()) * 324);
        for (int e = 0; e < mesh.element_count(); ++e) {
            const auto nodes = element_nodes(mesh, e);
            for (int a = 0; a < 6; ++a)
                for (int b = 0; b < 6; ++b)
                    if (nodes[a] >= ns && nodes[b] >= ns)
                        for (int i = 0; i < 3; ++i)
                            for (int j = 0; j < 3; ++j)
                                trip.emplace_back(free_dof(nodes[a], i), free_dof(nodes[b], j), 0.0);
        }
        K_.resize(nfree_, nfree_);
        K_.setFromTriplets(trip.begin(), trip.end());
        K_.makeCompressed();
        // Offset of entry (row 3a', col 3b' + j) for every element node pair;
        // the three rows of a node are contiguous in each column.
        offsets_.assign(static_cast<std::size_t>(mesh.element_count()) * 108, -1);
        const int* outer = K_.outerIndexPtr();
        const int* inner = K_.innerIndexPtr();
        for (int e = 0; e < mesh.element_count(); ++e) {
            const auto nodes = element_nodes(mesh, e);
            for (int a = 0; a < 6; ++a)
                for (int b = 0; b < 6; ++b) {
                    if (nodes[a] < ns || nodes[b] < ns)
                        continue;
                    const int row = free_dof(nodes[a], 0);
                    for (int j = 0; j < 3; ++j) {
                        const int col = free_dof(nodes[b], j);
                        const int* pos = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
                        offsets_[(static_cast<std::size_t>(e) * 36 + 6 * a + b) * 3 + j] = static_cast<int>(pos - inner);
                    }
                }
        }
    }

    int free_dof(int node, int c) const { return 3 * (node - mesh_.section_nodes()) + c; }
    int free_count() const { return nfree_; }
    const std::vector<Vec3>& load() const { return load_; }

    /// Energy parts, full nodal gradient, and optionally the free-free tangent.
    BeamEnergy evaluate(const BeamState& s, std::vector<Vec3>& grad, Eigen::SparseMatrix<double>* tangent)
    {
        const auto F = scaled_gradient(s, mesh_);
        std::vector<double> w;
        std::vector<Mat3> P;
        evaluate_density(W_, F, mesh_, w, &P);

        const int ppe = mesh_.points_per_element();
        const int ne = mesh_.element_count();
        elem_grad_.resize(static_cast<std::size_t>(ne) * 18);
        elem_energy_.resize(ne);
        if (tangent)
            elem_tangent_.resize(static_cast<std::size_t>(ne) * 324);
        parallel_for(ne, kElementChunk, [&](std::size_t b, std::size_t e_end) {
            for (int e = static_cast<int>(b); e < static_cast<int>(e_end); ++e) {
                double* ge = &elem_grad_[static_cast<std::size_t>(e) * 18];
                std::fill(ge, ge + 18, 0.0);
                double* ke = tangent ? &elem_tangent_[static_cast<std::size_t>(e) * 324] : nullptr;
                if (ke)
                    std::fill(ke, ke + 324, 0.0);
                double en = 0.0;
                for (int r = 0; r < ppe; ++r) {
                    const int q = e * ppe + r;
                    const auto p = mesh_.point(q);
                    const auto d = shape_gradients(mesh_, p);
                    en += p.weight * w[q];
                    for (int n = 0; n < 6; ++n) {
                        const Vec3 v = p.weight * (P[q] * d[n]);
                        for (int i = 0; i < 3; ++i)
                            ge[3 * n + i] += v[i];
                    }
                    if (!ke)
                        continue;
                    const Mat9 C = p.weight * stress_derivative(W_, F[q]);
                    // ∂²W/∂y_{n,i}∂y_{m,k} = Σ_{j,l} C(3i+j, 3k+l) d_n[j] d_m[l]
                    for (int m = 0; m < 6; ++m) {
                        Eigen::Matrix<double, 9, 3> Cd;
                        for (int k = 0; k < 3; ++k)
                            for (int r9 = 0; r9 < 9; ++r9)
                                Cd(r9, k) = C(r9, 3 * k) * d[m][0] + C(r9, 3 * k + 1) * d[m][1] + C(r9, 3 * k + 2) * d[m][2];
                        for (int n = 0; n < 6; ++n)
                            for (int i = 0; i < 3; ++i)
                                for (int k = 0; k < 3; ++k)
                                    ke[(3 * n + i) * 18 + 3 * m + k] +=
                                        Cd(3 * i, k) * d[n][0] + Cd(3 * i + 1, k) * d[n][1] + Cd(3 * i + 2, k) * d[n][2];
                    }
                }
                elem_energy_[e] = en;
            }
        });

        BeamEnergy energy;
        grad.assign(mesh_.node_count(), Vec3::Zero());
        for (int e = 0; e < ne; ++e) {
            energy.elastic += elem_energy_[e];
            const auto nodes = element_nodes(mesh_, e);
            for (int n = 0; n < 6; ++n)
                grad[nodes[n]] += Eigen::Map<const Vec3>(&elem_grad_[static_cast<std::size_t>(e) * 18 + 3 * n]);
        }
        for (int n = 0; n < mesh_.node_count(); ++n) {
            energy.load += load_[n].dot(s.y[n]);
            grad[n] -= load_[n];
        }
        if (tangent) {
            std::fill(K_.valuePtr(), K_.valuePtr() + K_.nonZeros(), 0.0);
            double* val = K_.valuePtr();
            for (int e = 0; e < ne; ++e) {
                const double* ke = &elem_tangent_[static_cast<std::size_t>(e) * 324];
                const int* off = &offsets_[static_cast<std::size_t>(e) * 108];
                for (int a = 0; a < 6; ++a)
                    for (int b = 0; b < 6; ++b)
                        for (int j = 0; j < 3; ++j) {
                            const int o = off[(6 * a + b) * 3 + j];
                            if (o < 0)
                                continue;
                            for (int i = 0; i < 3; ++i)
                                val[o + i] += ke[(3 * a + i) * 18 + 3 * b + j];
                        }
            }
            *tangent = K_;
        }
        return energy;
    }

    Eigen::VectorXd free_part(const std::vector<Vec3>& g) const
    {
        const int ns = mesh_.section_nodes();
        Eigen::VectorXd v(nfree_);
        for (int n = ns; n < mesh_.node_count(); ++n)
            v.segment<3>(free_dof(n, 0)) = g[n];
        return v;
    }

    BeamState step(const BeamState& s, const Eigen::VectorXd& d, double t) const
    {
        BeamState out = s;
        for (int n = mesh_.section_nodes(); n < mesh_.node_count(); ++n)
            out.y[n] += t * d.segment<3>(free_dof(n, 0));
        return out;
    }

private:
    const BeamMesh& mesh_;
    EnergyDensity W_;
    std::vector<Vec3> load_;
    int nfree_ = 0;
    Eigen::SparseMatrix<double> K_;
    std::vector<int> offsets_;
    std::vector<double> elem_grad_, elem_energy_, elem_tangent_;
};

} // namespace

std::vector<Vec3> energy_gradient_jh(const BeamState& state, const BeamMesh& mesh, const EnergyDensity& W,
                                     const LoadProfile& load)
{
    Assembler as(mesh, W, load);
    std::vector<Vec3> g;
    as.evaluate(state, g, nullptr);
    return g;
}

BeamSolveResult minimize_jh(const BeamState& init, const BeamMesh& mesh, const EnergyDensity& W,
                            const LoadProfile& load, const BeamSolverOptions& opts)
{
    if (static_cast<int>(init.y.size()) != mesh.node_count())
        throw InputError("minimize_jh: initial state does not match the mesh");
    if (init.clamp_defect(mesh) > 1e-12 * std::max(1.0, mesh.h()))
        throw InputError("minimize_jh: initial state violates the clamp y(0, x2, x3) = (0, h x2, h x3)");

    Assembler as(mesh, W, load);
    BeamSolveResult res;
    res.state = init;
    double scale = 0.0;
    for (int n = mesh.section_nodes(); n < mesh.node_count(); ++n)
        scale += as.load()[n].squaredNorm();
    res.gradient_scale = std::sqrt(scale);
    const double target = opts.tol * (res.gradient_scale > 0.0 ? res.gradient_scale : 1.0);

    std::vector<Vec3> grad;
    Eigen::SparseMatrix<double> K;
    BeamEnergy energy = as.evaluate(res.state, grad, nullptr);
    Eigen::VectorXd g = as.free_part(grad);
    double gnorm = g.norm();
    double previous = std::numeric_limits<double>::infinity();
    SpdSolver llt;

    for (res.iterations = 0; gnorm > target; ++res.iterations) {
        if (res.iterations >= opts.max_iters)
            throw BeamNonConvergence("minimize_jh: no convergence after " + std::to_string(opts.max_iters) +
                                         " iterations (gradient norm " + std::to_string(gnorm) + ")",
                                     res.state, gnorm);
        as.evaluate(res.state, grad, &K);
        const double diag = K.diagonal().cwiseAbs().maxCoeff();
        Eigen::VectorXd d;
        Eigen::SparseMatrix<double> S;
        for (double shift = 0.0;;) {
            bool ok;
            if (shift > 0.0) {
                S = K;
                for (int k = 0; k < S.rows(); ++k)
                    S.coeffRef(k, k) += shift;
                ok = llt.factorize(S);
            } else {
                ok = llt.factorize(K);
            }
            if (ok) {
                d = llt.solve(-g);
                if (d.allFinite() && d.dot(g) < 0.0)
                    break;
            }
            shift = shift == 0.0 ? 1e-8 * diag : 10.0 * shift;
            if (shift > 1e6 * diag)
                throw BeamNonConvergence("minimize_jh: could not build a descent direction", res.state, gnorm);
        }

        const double slope = d.dot(g);
        const double energy_scale = std::abs(energy.elastic) + std::abs(energy.load);
        const double noise = 1e-12 * energy_scale;
        if (-slope <= 1e-16 * energy_scale && gnorm > 0.5 * previous) {
            res.at_roundoff_floor = true;
            break;
        }
        previous = gnorm;
        bool accepted = false;
        for (double t = 1.0; t > 1e-10; t *= 0.5) {
            BeamState trial = as.step(res.state, d, t);
            if (!(min_determinant(scaled_gradient(trial, mesh)) > 0.0))
                continue; // inverted element
            std::vector<Vec3> tg;
            BeamEnergy te;
            try {
                te = as.evaluate(trial, tg, nullptr);
            } catch (const DomainError&) {
                continue;
            }
            const Eigen::VectorXd tgf = as.free_part(tg);
            const double tn = tgf.norm();
            const double de = te.total() - energy.total();
            if (de <= 1e-4 * t * slope || (tn < gnorm && de <= noise)) {
                res.state = std::move(trial);
                energy = te;
                g = tgf;
                gnorm = tn;
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw BeamNonConvergence("minimize_jh: line search failed (gradient norm " + std::to_string(gnorm) + ")",
                                     res.state, gnorm);
    }
    res.energy = energy;
    res.gradient_norm = gnorm;
    res.energy_constant = energy.elastic / (mesh.h() * mesh.h());
    return res;
}

// ---------------------------------------------------------------------------
// Diagnostics

namespace {

struct SlabRotations {
    std::vector<Mat3> rotation;
    std::vector<double> centre;
};

SlabRotations slab_rotations(const BeamState& state, const BeamMesh& mesh)
{
    const auto F = scaled_gradient(state, mesh);
    const int n1 = mesh.axial_intervals();
    const int per_layer = mesh.section_triangles() * mesh.points_per_element();
    const double dx = mesh.dx1(), h = mesh.h();
    const int slab = std::max(1, static_cast<int>(std::ceil(h / dx - 1e-9)));

    SlabRotations out;
    for (int k0 = 0; k0 < n1; k0 += slab) {
        const int k1 = std::min(n1, k0 + slab);
        Mat3 avg = Mat3::Zero();
        double vol = 0.0;
        for (int q = k0 * per_layer; q < k1 * per_layer; ++q) {
            const double w = mesh.point(q).weight;
            avg += w * F[q];
            vol += w;
        }
        avg /= vol;
        if (!(avg.determinant() > 0.0))
            throw DomainError("rotation extraction: slab average on (" + std::to_string(k0 * dx) + ", " +
                              std::to_string(k1 * dx) + ") has nonpositive determinant");
        out.rotation.push_back(nearest_rotation(avg));
        out.centre.push_back(0.5 * (k0 + k1) * dx);
    }
    return out;
}

// Gaussian-weighted (sigma = h, cut at 3h) smoothing of the slab rotations in
// log coordinates about the nearest slab. The local-linear variant fits an
// affine trend, so the one-sided windows at the ends carry no O(h) bias; the
// plain variant is the renormalised weighted mean.
Mat3 smooth_rotation(const SlabRotations& slabs, double x, double h, Mollifier mollifier)
{
    std::size_t best = 0;
    for (std::size_t s = 1; s < slabs.centre.size(); ++s)
        if (std::abs(x - slabs.centre[s]) < std::abs(x - slabs.centre[best]))
            best = s;
    const Mat3& ref = slabs.rotation[best];
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    Vec3 m0 = Vec3::Zero(), m1 = Vec3::Zero();
    for (std::size_t s = 0; s < slabs.centre.size(); ++s) {
        const double d = slabs.centre[s] - x;
        if (std::abs(d) > 3.0 * h)
            continue;
        const double w = std::exp(-0.5 * d * d / (h * h));
        const Vec3 v = so3_log(ref.transpose() * slabs.rotation[s]);
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        m0 += w * v;
        m1 += w * d * v;
    }
    Vec3 v = Vec3::Zero();
    const double det = s0 * s2 - s1 * s1;
    if (mollifier == Mollifier::LocalLinear && det > 1e-12 * s0 * s2)
        v = (s2 * m0 - s1 * m1) / det;
    else if (s0 > 0.0)
        v = m0 / s0;
    return ref * so3_exp(v);
}

} // namespace

std::vector<Mat3> extract_rotations(const BeamState& state, const BeamMesh& mesh, Mollifier mollifier)
{
    const auto slabs = slab_rotations(state, mesh);
    std::vector<Mat3> R(mesh.axial_intervals() + 1);
    for (int k = 0; k <= mesh.axial_intervals(); ++k)
        R[k] = smooth_rotation(slabs, mesh.x1(k), mesh.h(), mollifier);
    return R;
}

std::vector<Mat3> extract_rotations_at_points(const BeamState& state, const BeamMesh& mesh, Mollifier mollifier)
{
    const auto slabs = slab_rotations(state, mesh);
    const int per_layer = mesh.section_triangles() * mesh.points_per_element();
    const int na = mesh.axial_points();
    std::vector<Mat3> station(static_cast<std::size_t>(mesh.axial_intervals()) * na);
    for (int k = 0; k < mesh.axial_intervals(); ++k)
        for (int a = 0; a < na; ++a)
            station[k * na + a] = smooth_rotation(slabs, mesh.point(k * per_layer + 3 * a).x1, mesh.h(), mollifier);
    std::vector<Mat3> R(mesh.point_count());
    const int ppe = mesh.points_per_element();
    for (int q = 0; q < mesh.point_count(); ++q) {
        const int k = q / ppe / mesh.section_triangles();
        R[q] = station[k * na + (q % ppe) / 3];
    }
    return R;
}

std::vector<Mat3> rotations_at_points(const std::vector<Mat3>& nodal, const BeamMesh& mesh)
{
    if (static_cast<int>(nodal.size()) != mesh.axial_intervals() + 1)
        throw InputError("rotation field does not match the axial grid");
    const int per_layer = mesh.section_triangles() * mesh.points_per_element();
    const int na = mesh.axial_points();
    std::vector<Mat3> station(static_cast<std::size_t>(mesh.axial_intervals()) * na);
    for (int k = 0; k < mesh.axial_intervals(); ++k)
        for (int a = 0; a < na; ++a) {
            const double t = (mesh.point(k * per_layer + 3 * a).x1 - mesh.x1(k)) / mesh.dx1();
            station[k * na + a] = geodesic_interpolate(nodal[k], nodal[k + 1], t);
        }
    std::vector<Mat3> R(mesh.point_count());
    const int ppe = mesh.points_per_element();
    for (int q = 0; q < mesh.point_count(); ++q) {
        const int e = q / ppe;
        const int k = e / mesh.section_triangles();
        R[q] = station[k * na + (q % ppe) / 3];
    }
    return R;
}

std::vector<Mat3> strain_g(const BeamState& state, const std::vector<Mat3>& rotations, const BeamMesh& mesh)
{
    const auto F = scaled_gradient(state, mesh);
    const std::vector<Mat3>& R = rotations.size() == F.size() ? rotations : rotations_at_points(rotations, mesh);
    const std::size_t n = F.size();
    std::vector<double> out(9 * n);
    kernels::transpose_multiply(to_soa(R), to_soa(F), out);
    auto G = from_soa(out, n);
    for (auto& g : G)
        g = (g - Mat3::Identity()) / mesh.h();
    return G;
}

std::vector<Mat3> stress_e(const std::vector<Mat3>& G, const EnergyDensity& W, double h)
{
    const std::size_t n = G.size();
    std::vector<Mat3> F(n);
    for (std::size_t q = 0; q < n; ++q)
        F[q] = Mat3::Identity() + h * G[q];
    std::vector<Mat3> E(n);
    if (W.kind == DensityKind::IsotropicQuadraticStrain) {
        std::vector<double> energy(n), s(9 * n);
        kernels::svk_energy_stress(to_soa(F), {W.lame_lambda, W.lame_mu}, energy, s);
        E = from_soa(s, n);
    } else {
        for (std::size_t q = 0; q < n; ++q)
            E[q] = stress(W, F[q]);
    }
    for (auto& e : E)
        e /= h;
    return E;
}

StationMoments moments_3d(const std::vector<Mat3>& field, const BeamMesh& mesh)
{
    if (static_cast<int>(field.size()) != mesh.point_count())
        throw InputError("moments_3d: field does not match the quadrature points");
    const int na = mesh.axial_points();
    const int ns = mesh.axial_intervals() * na;
    const int ppe = mesh.points_per_element();
    StationMoments m;
    m.x1.resize(ns);
    m.mean.assign(ns, Mat3::Zero());
    m.first_x2.assign(ns, Mat3::Zero());
    m.first_x3.assign(ns, Mat3::Zero());
    for (int q = 0; q < mesh.point_count(); ++q) {
        const auto p = mesh.point(q);
        const int k = p.element / mesh.section_triangles();
        const int st = k * na + (q % ppe) / 3;
        const double w = mesh.triangle_area(p.element % mesh.section_triangles()) / 3.0;
        m.x1[st] = p.x1;
        m.mean[st] += w * field[q];
        m.first_x2[st] += w * p.x.x() * field[q];
        m.first_x3[st] += w * p.x.y() * field[q];
    }
    return m;
}

double field_norm(const std::vector<Mat3>& field, const BeamMesh& mesh, int p)
{
    if (static_cast<int>(field.size()) != mesh.point_count())
        throw InputError("field_norm: field does not match the quadrature points");
    double s = 0.0;
    for (int q = 0; q < mesh.point_count(); ++q) {
        const double f = field[q].norm();
        s += mesh.point(q).weight * (p == 1 ? f : f * f);
    }
    return p == 1 ? s : std::sqrt(s);
}

BeamProfiles section_profiles(const BeamState& state, const BeamMesh& mesh)
{
    const int n1 = mesh.axial_intervals();
    const auto& sec = mesh.section();
    const auto& w = mesh.section_node_weights();
    BeamProfiles p;
    p.x1.resize(n1 + 1);
    p.midline.assign(n1 + 1, Vec3::Zero());
    p.director2.assign(n1 + 1, Vec3::Zero());
    p.director3.assign(n1 + 1, Vec3::Zero());
    for (int k = 0; k <= n1; ++k) {
        p.x1[k] = mesh.x1(k);
        for (int s = 0; s < mesh.section_nodes(); ++s)
            p.midline[k] += w[s] * state.y[mesh.node(k, s)];
        for (int t = 0; t < mesh.section_triangles(); ++t) {
            const auto& g = mesh.triangle_gradients(t);
            const double a = mesh.triangle_area(t);
            for (int l = 0; l < 3; ++l) {
                const Vec3& y = state.y[mesh.node(k, sec.triangles[t][l])];
                p.director2[k] += a * g[l].x() * y;
                p.director3[k] += a * g[l].y() * y;
            }
        }
        p.director2[k] /= mesh.h();
        p.director3[k] /= mesh.h();
    }
    return p;
}

BeamDiagnostics compute_diagnostics(const BeamState& state, const BeamMesh& mesh, const EnergyDensity& W,
                                    const LoadProfile& load)
{
    BeamDiagnostics d;
    d.energy = energy_jh(state, mesh, W, load);
    d.rotations = extract_rotations(state, mesh);
    const auto Rq = extract_rotations_at_points(state, mesh);
    const auto F = scaled_gradient(state, mesh);
    const double h = mesh.h();
    const std::size_t n = F.size();

    std::vector<Mat3> diff(n);
    for (std::size_t q = 0; q < n; ++q)
        diff[q] = F[q] - Rq[q];
    d.rigidity_norm = field_norm(diff, mesh, 2);
    const auto Rr = extract_rotations_at_points(state, mesh, Mollifier::Renormalized);
    for (std::size_t q = 0; q < n; ++q)
        diff[q] = F[q] - Rr[q];
    d.rigidity_norm_renormalized = field_norm(diff, mesh, 2);

    const auto G = strain_g(state, Rq, mesh);
    const auto E = stress_e(G, W, h);
    const auto L = linearized_tensor(W);
    std::vector<Mat3> skew(n), lin(n);
    for (std::size_t q = 0; q < n; ++q) {
        skew[q] = E[q] - E[q].transpose();
        lin[q] = E[q] - L.apply(G[q]);
    }
    d.symmetry_defect = field_norm(skew, mesh, 1);
    d.linearization_defect = field_norm(lin, mesh, 2);
    d.strain_norm = field_norm(G, mesh, 2);
    d.stress_norm = field_norm(E, mesh, 2);

    d.moments = moments_3d(E, mesh);
    check_load(mesh, load);
    const auto gt = tilde_g(load);
    const int na = mesh.axial_points();
    const auto rule = axial_rule(mesh.quadrature());
    const int per_layer = mesh.section_triangles() * mesh.points_per_element();
    double res = 0.0, scale = 0.0;
    for (std::size_t st = 0; st < d.moments.x1.size(); ++st) {
        const int k = static_cast<int>(st) / na;
        const double w = mesh.dx1() * rule.w[st % na];
        const Mat3& R = Rq[k * per_layer + 3 * (st % na)];
        const Vec3 g = tilde_g_at(load, gt, d.moments.x1[st]);
        res += w * (d.moments.mean[st].col(0) + h * R.transpose() * g).squaredNorm();
        scale += w * (h * g).squaredNorm();
    }
    d.moment_identity_residual = std::sqrt(res);
    d.moment_identity_scale = std::sqrt(scale);
    d.profiles = section_profiles(state, mesh);
    return d;
}

} // namespace rodlimit
