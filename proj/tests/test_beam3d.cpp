#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rodlimit/beam3d.hpp"
#include "rodlimit/spd_solver.hpp"

using namespace rodlimit;

namespace {

const double kPi = std::numbers::pi;

CrossSectionMesh unit_disc(int k) { return normalize_section(generate_disc(1.0 / std::sqrt(kPi), k)).first; }

const EnergyDensity kSvk = EnergyDensity::isotropic(0.0, 1.0);

BeamState perturbed(const BeamMesh& mesh, double amplitude, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    BeamState s = BeamState::identity(mesh);
    for (int i = mesh.section_nodes(); i < mesh.node_count(); ++i)
        s.y[i] += amplitude * mesh.h() * Vec3(n(rng), n(rng), n(rng));
    return s;
}

LoadProfile constant_load(const Vec3& g, double length, int n) { return LoadSpec::constant(g).sample(length, n); }

} // namespace

TEST_CASE("scaled gradient of identity and rigid motions")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 4, 0.3, AxialQuadrature::Gauss2);
    for (const auto& F : scaled_gradient(BeamState::identity(mesh), mesh))
        CHECK((F - Mat3::Identity()).norm() <= 1e-14);
    const Mat3 Q = so3_exp(Vec3(0.4, -0.9, 1.3));
    const auto rigid = BeamState::rigid(mesh, Q, Vec3(1.0, 2.0, 3.0));
    for (const auto& F : scaled_gradient(rigid, mesh))
        CHECK((F - Q).norm() <= 1e-13);
    CHECK(rigid.clamp_defect(mesh) > 0.1);
    CHECK(BeamState::identity(mesh).clamp_defect(mesh) == 0.0);
}

TEST_CASE("energy vanishes on rigid motions and is frame indifferent")
{
    for (auto quad : {AxialQuadrature::Midpoint, AxialQuadrature::Gauss2}) {
        const BeamMesh mesh(unit_disc(1), 1.0, 4, 0.2, quad);
        const auto zero = constant_load(Vec3::Zero(), 1.0, 4);
        for (const auto& W : {kSvk, EnergyDensity::distance_squared()}) {
            CHECK(std::abs(energy_jh(BeamState::identity(mesh), mesh, W, zero).elastic) <= 1e-28);
            const Mat3 Q = so3_exp(Vec3(-0.3, 0.8, 0.2));
            CHECK(std::abs(energy_jh(BeamState::rigid(mesh, Q, Vec3(0.5, 0, 0)), mesh, W, zero).elastic) <= 1e-26);

            const auto s = perturbed(mesh, 0.05, 2);
            BeamState r = s;
            for (auto& y : r.y)
                y = Q * y + Vec3(1.0, -1.0, 0.5);
            const double e0 = energy_jh(s, mesh, W, zero).elastic;
            CHECK(e0 > 0.0);
            CHECK(std::abs(energy_jh(r, mesh, W, zero).elastic - e0) <= 1e-12 * e0);
        }
    }
}

TEST_CASE("uniaxial stretch energy")
{
    const BeamMesh mesh(unit_disc(2), 2.0, 3, 0.1);
    BeamState s = BeamState::identity(mesh);
    const double stretch = 1.1;
    for (auto& y : s.y)
        y.x() *= stretch;
    const auto zero = constant_load(Vec3::Zero(), 2.0, 3);
    Mat3 F = Mat3::Identity();
    F(0, 0) = stretch;
    for (const auto& W : {kSvk, EnergyDensity::isotropic(1.0, 2.0), EnergyDensity::distance_squared()})
        CHECK(energy_jh(s, mesh, W, zero).elastic == doctest::Approx(2.0 * energy(W, F)).epsilon(1e-12));
    // dist² of a stretch is (s - 1)²
    CHECK(energy(EnergyDensity::distance_squared(), F) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("load term")
{
    const double h = 0.25;
    const BeamMesh mesh(unit_disc(1), 1.0, 4, h);
    const Vec3 g(0.3, -0.2, 1.0);
    const auto e = energy_jh(BeamState::identity(mesh), mesh, kSvk, constant_load(g, 1.0, 4));
    // h² ∫_0^1 ∫_S g·(x1, h x2, h x3) = h² g1 / 2 on a centred unit-area section
    CHECK(e.load == doctest::Approx(h * h * g.x() / 2.0).epsilon(1e-12));
}

TEST_CASE("energy gradient matches finite differences")
{
    for (auto quad : {AxialQuadrature::Midpoint, AxialQuadrature::Gauss2}) {
        const BeamMesh mesh(unit_disc(1), 1.0, 3, 0.3, quad);
        const auto load = constant_load({0.0, 0.5, -1.0}, 1.0, 3);
        const auto s = perturbed(mesh, 0.1, 7);
        const auto grad = energy_gradient_jh(s, mesh, kSvk, load);
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<Vec3> dir(s.y.size());
        double exact = 0.0;
        for (std::size_t i = 0; i < dir.size(); ++i) {
            dir[i] = Vec3(n(rng), n(rng), n(rng));
            exact += grad[i].dot(dir[i]);
        }
        const double eps = 1e-6;
        BeamState p = s, m = s;
        for (std::size_t i = 0; i < dir.size(); ++i) {
            p.y[i] += eps * dir[i];
            m.y[i] -= eps * dir[i];
        }
        const double fd = (energy_jh(p, mesh, kSvk, load).total() - energy_jh(m, mesh, kSvk, load).total()) / (2 * eps);
        CHECK(fd == doctest::Approx(exact).epsilon(1e-6));
    }
}

TEST_CASE("inverted elements are rejected by the distance-squared density")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 2, 0.2);
    BeamState s = BeamState::identity(mesh);
    for (auto& y : s.y)
        y.y() = -y.y();
    CHECK_THROWS_AS(energy_jh(s, mesh, EnergyDensity::distance_squared(), constant_load(Vec3::Zero(), 1.0, 2)),
                    DomainError);
}

TEST_CASE("zero load returns the initial state")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 4, 0.25);
    const auto init = BeamState::identity(mesh);
    const auto r = minimize_jh(init, mesh, kSvk, constant_load(Vec3::Zero(), 1.0, 4));
    CHECK(r.iterations == 0);
    CHECK(std::abs(r.energy.total()) <= 1e-28);
    for (std::size_t i = 0; i < init.y.size(); ++i)
        CHECK((r.state.y[i] - init.y[i]).norm() == 0.0);
}

TEST_CASE("lift of the straight rod is the identity")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 6, 0.2);
    const auto lift = BeamState::lift(mesh, RodConfig::straight(1.0, 12));
    const auto id = BeamState::identity(mesh);
    for (std::size_t i = 0; i < id.y.size(); ++i)
        CHECK((lift.y[i] - id.y[i]).norm() <= 1e-15);
    CHECK(lift.clamp_defect(mesh) == 0.0);
}

TEST_CASE("rotations, strain and stress of rigid motions")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 8, 0.25);
    const Mat3 Q = so3_exp(Vec3(0.2, 0.5, -0.4));
    const auto s = BeamState::rigid(mesh, Q, Vec3::Zero());
    for (auto moll : {Mollifier::LocalLinear, Mollifier::Renormalized}) {
        for (const auto& R : extract_rotations(s, mesh, moll))
            CHECK((R - Q).norm() <= 1e-12);
        for (const auto& R : extract_rotations_at_points(s, mesh, moll))
            CHECK((R - Q).norm() <= 1e-12);
    }
    const auto G = strain_g(s, extract_rotations_at_points(s, mesh), mesh);
    double gmax = 0.0;
    for (const auto& g : G)
        gmax = std::max(gmax, g.norm());
    CHECK(gmax <= 1e-10);
    const std::vector<Mat3> zeros(mesh.point_count(), Mat3::Zero());
    for (const auto& E : stress_e(zeros, kSvk, 0.25))
        CHECK(E.norm() == 0.0);
}

TEST_CASE("decomposition identity: grad = R (Id + h G)")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 6, 0.2);
    const auto s = perturbed(mesh, 0.2, 13);
    const auto R = extract_rotations_at_points(s, mesh);
    const auto G = strain_g(s, R, mesh);
    const auto F = scaled_gradient(s, mesh);
    for (std::size_t q = 0; q < F.size(); ++q) {
        CHECK((R[q].transpose() * R[q] - Mat3::Identity()).norm() <= 1e-12);
        CHECK(R[q].determinant() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((R[q] * (Mat3::Identity() + mesh.h() * G[q]) - F[q]).norm() <= 1e-12);
    }
}

TEST_CASE("linearised stress defect is first order in h")
{
    const auto L = linearized_tensor(kSvk);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 1.0);
    Mat3 G;
    for (int k = 0; k < 9; ++k)
        G(k / 3, k % 3) = n(rng);
    std::vector<double> defect;
    const std::vector<double> hs = {1e-1, 1e-2, 1e-3};
    for (double h : hs)
        defect.push_back((stress_e({G}, kSvk, h)[0] - L.apply(G)).norm());
    for (std::size_t i = 1; i < hs.size(); ++i) {
        const double slope = std::log(defect[i - 1] / defect[i]) / std::log(hs[i - 1] / hs[i]);
        CHECK(slope >= 0.8);
        CHECK(slope <= 1.2);
    }
}

TEST_CASE("station moments and norms of simple fields")
{
    const BeamMesh mesh(unit_disc(2), 2.0, 4, 0.1, AxialQuadrature::Gauss2);
    Mat3 C;
    C << 1, 2, 3, 4, 5, 6, 7, 8, 9;
    const std::vector<Mat3> field(mesh.point_count(), C);
    const auto m = moments_3d(field, mesh);
    REQUIRE(m.x1.size() == 8);
    for (std::size_t j = 0; j < m.x1.size(); ++j) {
        CHECK((m.mean[j] - C).norm() <= 1e-12);
        CHECK(m.first_x2[j].norm() <= 1e-12);
        CHECK(m.first_x3[j].norm() <= 1e-12);
    }
    CHECK(field_norm(field, mesh, 2) == doctest::Approx(C.norm() * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(field_norm(field, mesh, 1) == doctest::Approx(C.norm() * 2.0).epsilon(1e-12));

    const auto p = section_profiles(BeamState::identity(mesh), mesh);
    for (std::size_t k = 0; k < p.x1.size(); ++k) {
        CHECK((p.midline[k] - Vec3(p.x1[k], 0, 0)).norm() <= 1e-12);
        CHECK((p.director2[k] - Vec3(0, 1, 0)).norm() <= 1e-12);
        CHECK((p.director3[k] - Vec3(0, 0, 1)).norm() <= 1e-12);
    }
}

TEST_CASE("sparse SPD solver")
{
    const int n = 50;
    Eigen::SparseMatrix<double> K(n, n);
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i) {
        t.emplace_back(i, i, 2.0 + 0.01 * i);
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, -1.0);
            t.emplace_back(i + 1, i, -1.0);
        }
    }
    K.setFromTriplets(t.begin(), t.end());
    SpdSolver solver;
    REQUIRE(solver.factorize(K));
    const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(n, -1.0, 2.0);
    const Eigen::VectorXd x = solver.solve(b);
    CHECK((K * x - b).norm() <= 1e-12 * b.norm());
    CHECK(std::string(solver.backend()).size() > 0);

    Eigen::SparseMatrix<double> indefinite = K;
    indefinite.coeffRef(10, 10) = -5.0;
    SpdSolver other;
    CHECK_FALSE(other.factorize(indefinite));
}

TEST_CASE("Newton non-convergence keeps the last iterate")
{
    const BeamMesh mesh(unit_disc(1), 1.0, 4, 0.25);
    BeamSolverOptions o;
    o.max_iters = 1;
    o.tol = 1e-14;
    try {
        minimize_jh(BeamState::identity(mesh), mesh, kSvk, constant_load({0, 0, -1.0}, 1.0, 4), o);
        FAIL("expected BeamNonConvergence");
    } catch (const BeamNonConvergence& e) {
        CHECK(e.last_iterate().y.size() == static_cast<std::size_t>(mesh.node_count()));
        CHECK(e.gradient_norm() > 0.0);
    }
}

TEST_CASE("cantilever: bound constant stable and midline close to the rod")
{
    const auto section = unit_disc(3);
    const auto L = linearized_tensor(kSvk);
    const auto q1 = assemble_q1(section, L);
    const Vec3 g(0.0, 0.0, -0.1);
    const auto rod = minimize_j2(RodConfig::straight(1.0, 200), q1, constant_load(g, 1.0, 200));
    const double rod_tip = frame_from_rotations(rod.config).y.back().z();

    std::vector<double> constants;
    for (double h : {0.2, 0.1}) {
        const int n1 = static_cast<int>(std::ceil(1.0 / h - 1e-9));
        const BeamMesh mesh(section, 1.0, n1, h);
        const auto load = constant_load(g, 1.0, n1);
        const auto r = minimize_jh(BeamState::lift(mesh, rod.config), mesh, kSvk, load);
        CHECK(r.state.clamp_defect(mesh) == 0.0);
        CHECK(r.gradient_norm <= 1e-8 * r.gradient_scale + (r.at_roundoff_floor ? 1e-6 * r.gradient_scale : 0.0));
        constants.push_back(r.energy_constant);
        const double tip = section_profiles(r.state, mesh).midline.back().z();
        CAPTURE(h);
        CHECK(std::abs(tip - rod_tip) <= 0.15 * std::abs(rod_tip));
    }
    CHECK(constants[1] == doctest::Approx(constants[0]).epsilon(0.1));
}
