#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "rodlimit/cross_section.hpp"
#include "rodlimit/errors.hpp"

using namespace rodlimit;
namespace fs = std::filesystem;

namespace {

const double kPi = std::numbers::pi;
const double kUnitRadius = 1.0 / std::sqrt(kPi);

fs::path temp_file(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "rodlimit_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream out(p);
    out << s;
}

CrossSectionMesh unit_square()
{
    CrossSectionMesh m;
    m.nodes = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    m.update_moments();
    return m;
}

CrossSectionMesh transformed(const CrossSectionMesh& in, double sx, double sy, double angle)
{
    CrossSectionMesh m = in;
    const double c = std::cos(angle), s = std::sin(angle);
    for (auto& p : m.nodes) {
        const Vec2 q(sx * p.x(), sy * p.y());
        p = Vec2(c * q.x() - s * q.y(), s * q.x() + c * q.y());
    }
    m.update_moments();
    return m;
}

double young(double lambda, double mu) { return mu * (3 * lambda + 2 * mu) / (lambda + mu); }

// Cached disc sections and their Q1 matrices; refinement 5 is the workhorse.
const CrossSectionMesh& disc(int k)
{
    static std::map<int, CrossSectionMesh> cache;
    auto it = cache.find(k);
    if (it == cache.end())
        it = cache.emplace(k, generate_disc(kUnitRadius, k)).first;
    return it->second;
}

} // namespace

TEST_CASE("mesh file round trip")
{
    const auto& m = disc(2);
    const fs::path p = temp_file("disc2.mesh");
    save_mesh(m, p);
    const auto r = load_mesh(p);
    REQUIRE(r.nodes.size() == m.nodes.size());
    REQUIRE(r.triangles.size() == m.triangles.size());
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
        CHECK((r.nodes[i] - m.nodes[i]).norm() == 0.0);
    CHECK(r.area == doctest::Approx(m.area).epsilon(1e-15));
}

TEST_CASE("mesh parse errors carry line numbers")
{
    const fs::path p = temp_file("bad.mesh");
    auto line_of = [&](const std::string& text) {
        write_text(p, text);
        try {
            load_mesh(p);
        } catch (const ParseError& e) {
            return e.line();
        }
        return -1;
    };
    CHECK(line_of("nodes 2\n0 0\n1 x\n") == 3);
    CHECK(line_of("nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 5\n") == 6);
    CHECK(line_of("vertices 3\n") == 1);
    CHECK(line_of("nodes 3\n0 0\n\n1 0\n0 1\ntriangles 2\n0 1 2\n") == 8);
    CHECK_THROWS_AS(load_mesh(temp_file("does_not_exist.mesh")), IoError);
}

TEST_CASE("degenerate triangle is rejected and clockwise ones reoriented")
{
    CrossSectionMesh m;
    m.nodes = {{0, 0}, {1, 0}, {2, 0}};
    m.triangles = {{0, 1, 2}};
    CHECK_THROWS_AS(m.update_moments(), InputError);

    CrossSectionMesh cw;
    cw.nodes = {{0, 0}, {0, 1}, {1, 0}};
    cw.triangles = {{0, 1, 2}};
    cw.update_moments();
    CHECK(cw.area == doctest::Approx(0.5));
    CHECK(cw.triangle_area(0) > 0.0);
}

TEST_CASE("unit square moments")
{
    const auto m = unit_square();
    CHECK(m.area == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m.centroid().x() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(m.centroid().y() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(m.second_moments.x() == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(m.product_moment == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(m.boundary_edges().size() == 4);
    CHECK(m.connected());
}

TEST_CASE("disc meshes approach the disc moments")
{
    CHECK(std::abs(disc(5).area - 1.0) <= 2e-3);
    const auto& d6 = disc(6);
    const double target = 1.0 / (4.0 * kPi);
    CHECK(std::abs(d6.second_moments.x() - target) <= 2e-3 * target);
    CHECK(std::abs(d6.second_moments.y() - target) <= 2e-3 * target);
    CHECK(std::abs(d6.product_moment) <= 1e-14);
    CHECK(d6.first_moments.norm() <= 1e-14);
    // the inscribed polygon loses area, so refinement approaches from below
    CHECK(disc(3).area < disc(4).area);
    CHECK(disc(4).area < disc(5).area);
}

TEST_CASE("normalize_section")
{
    SUBCASE("unit square is shifted to its centroid")
    {
        const auto [m, tr] = normalize_section(unit_square());
        CHECK(tr.shift.x() == doctest::Approx(-0.5));
        CHECK(tr.shift.y() == doctest::Approx(-0.5));
        CHECK(tr.scale == doctest::Approx(1.0));
        CHECK(m.first_moments.norm() <= 1e-14);
        const Vec2 x(0.3, 0.9);
        CHECK((tr.invert(tr.apply(x)) - x).norm() <= 1e-14);
    }
    SUBCASE("a normalised disc is a fixed point")
    {
        const auto [m1, t1] = normalize_section(disc(4));
        const auto [m2, t2] = normalize_section(m1);
        CHECK(t2.shift.norm() <= 1e-12);
        CHECK(t2.angle == 0.0);
        CHECK(t2.scale == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("rotated ellipse goes to principal axes with unit area")
    {
        const auto e = transformed(disc(3), 2.0, 0.7, 0.6);
        CrossSectionMesh shifted = e;
        for (auto& p : shifted.nodes)
            p += Vec2(3.0, -1.0);
        shifted.update_moments();
        const auto [m, tr] = normalize_section(shifted);
        CHECK(m.area == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m.first_moments.norm() <= 1e-12);
        CHECK(std::abs(m.product_moment) <= 1e-12);
        CHECK(m.second_moments.x() > m.second_moments.y());
    }
    SUBCASE("zero area")
    {
        CrossSectionMesh empty;
        CHECK_THROWS_AS(normalize_section(empty), InputError);
    }
}

TEST_CASE("cell problem on the disc")
{
    const auto& m = disc(5);
    const auto L = ElasticityTensor::isotropic(1.0, 1.0);
    const CellProblem cell(m, L);

    SUBCASE("a = 0 gives zero warping")
    {
        const auto w = cell.solve({});
        for (const auto& v : w.values)
            CHECK(v.norm() == 0.0);
    }
    SUBCASE("bending warping is the Poisson contraction field")
    {
        // axial strain x2 with free lateral contraction: α2 = -ν/2 (x2² - x3²), α3 = -ν x2 x3
        const double nu = 1.0 / (2.0 * (1.0 + 1.0));
        const auto w = cell.solve({1.0, 0.0, 0.0});
        double err = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < m.nodes.size(); ++i) {
            const double x2 = m.nodes[i].x(), x3 = m.nodes[i].y();
            const Vec3 exact(0.0, -0.5 * nu * (x2 * x2 - x3 * x3), -nu * x2 * x3);
            err += (w.values[i] - exact).squaredNorm();
            ref += exact.squaredNorm();
        }
        CHECK(std::sqrt(err / ref) <= 0.02);
        CHECK(w.constraints.max_abs() <= 1e-12);
        CHECK(w.weak_residual <= 1e-9);
    }
    SUBCASE("torsion of a disc does not warp")
    {
        const auto w = cell.solve({0.0, 0.0, 1.0});
        double mx = 0.0;
        for (const auto& v : w.values)
            mx = std::max(mx, v.norm());
        CHECK(mx <= 1e-4);
    }
    SUBCASE("linearity")
    {
        const SkewCoords a{0.3, -1.1, 0.4}, b{-0.7, 0.2, 2.0};
        const auto wa = cell.solve(a), wb = cell.solve(b);
        const auto wab = cell.solve(SkewCoords::from(a.vec() + 2.0 * b.vec()));
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < wa.values.size(); ++i) {
            err = std::max(err, (wab.values[i] - wa.values[i] - 2.0 * wb.values[i]).norm());
            scale = std::max(scale, wab.values[i].norm());
        }
        CHECK(err <= 1e-10 * scale);
    }
    SUBCASE("the solution minimises F_A over admissible perturbations")
    {
        const SkewCoords a{0.8, 0.5, -0.3};
        const auto w = cell.solve(a);
        const double f0 = cell.energy(a, w.values);
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Vec3> d(m.nodes.size());
            for (auto& v : d)
                v = Vec3(n(rng), n(rng), n(rng));
            // project onto the constraint class: remove mean and mean gradient by an affine field
            const auto c = cell.constraints(d);
            for (std::size_t i = 0; i < d.size(); ++i)
                d[i] -= (c.mean + m.nodes[i].x() * c.mean_d2 + m.nodes[i].y() * c.mean_d3) / m.area;
            CHECK(cell.constraints(d).max_abs() <= 1e-12);
            for (double t : {1e-3, 1e-1}) {
                std::vector<Vec3> p = w.values;
                for (std::size_t i = 0; i < p.size(); ++i)
                    p[i] += t * d[i];
                CHECK(cell.energy(a, p) >= f0 - 1e-12);
            }
        }
    }
    SUBCASE("stress and moments of torsion")
    {
        const double mu = 1.0;
        const SkewCoords a{0.0, 0.0, 1.0};
        const auto w = cell.solve(a);
        const auto E = stress_field(m, L, a, w);
        double err = 0.0;
        for (std::size_t t = 0; t < m.triangles.size(); ++t) {
            Vec2 c = Vec2::Zero();
            for (int k : m.triangles[t])
                c += m.nodes[k] / 3.0;
            err = std::max(err, std::abs(E.centroid[t](0, 1) - mu * c.y()));
            err = std::max(err, std::abs(E.centroid[t](2, 0) + mu * c.x()));
            err = std::max(err, std::abs(E.centroid[t](0, 0)));
        }
        CHECK(err <= 1e-3);
        const auto M = bending_moments(E, m);
        const double ref = mu / (4.0 * kPi);
        CHECK(std::abs(M.first_x2(0, 2) + ref) <= 0.01 * ref);
        CHECK(std::abs(M.first_x3(0, 1) - ref) <= 0.01 * ref);
    }
    SUBCASE("axial moment of bending")
    {
        const SkewCoords a{1.0, 0.0, 0.0};
        const auto E = stress_field(m, L, a, cell.solve(a));
        const auto M = bending_moments(E, m);
        const double ref = young(1.0, 1.0) / (4.0 * kPi);
        CHECK(std::abs(M.first_x2(0, 0) - ref) <= 0.01 * ref);
        CHECK(M.mean.norm() <= 1e-10);
    }
}

TEST_CASE("Q1 of the disc")
{
    for (auto [lambda, mu] : {std::pair{1.0, 1.0}, std::pair{0.0, 1.0}, std::pair{3.0, 0.5}}) {
        CAPTURE(lambda);
        CAPTURE(mu);
        const auto q = assemble_q1(disc(5), ElasticityTensor::isotropic(lambda, mu)).matrix;
        const double bend = young(lambda, mu) / (4.0 * kPi);
        const double tors = mu / (2.0 * kPi);
        CHECK(std::abs(q(0, 0) - bend) <= 0.01 * bend);
        CHECK(std::abs(q(1, 1) - bend) <= 0.01 * bend);
        CHECK(std::abs(q(2, 2) - tors) <= 0.01 * tors);
        // isotropy of the disc
        CHECK(std::abs(q(0, 0) - q(1, 1)) <= 1e-3 * bend);
        CHECK(std::abs(q(0, 1)) <= 1e-10);
        CHECK(std::abs(q(0, 2)) <= 1e-10);
        CHECK(std::abs(q(1, 2)) <= 1e-10);
        CHECK((q - q.transpose()).norm() <= 1e-12);
    }
}

TEST_CASE("Q1 equals the moment map and F_A")
{
    const auto L = ElasticityTensor::isotropic(1.0, 1.0);
    const CellProblem cell(disc(4), L);
    const auto q = assemble_q1(cell);
    const SkewCoords a{0.4, -0.2, 0.9};
    CHECK(q1_eval(q, a) == doctest::Approx(cell.energy(a, cell.solve(a).values)).epsilon(1e-10));
    const auto mm = moment_map(cell);
    CHECK(mm.matrix.norm() > 0.0);
}

TEST_CASE("Q1 under mesh refinement decreases and is Cauchy")
{
    const auto L = ElasticityTensor::isotropic(1.0, 1.0);
    // rescale each mesh to unit area so the only change is the discretisation
    auto q = [&](int k) {
        const auto [m, tr] = normalize_section(disc(k));
        return assemble_q1(m, L).matrix;
    };
    const Mat3 q2 = q(2), q3 = q(3), q4 = q(4);
    for (int i = 0; i < 3; ++i) {
        CAPTURE(i);
        CHECK(q3(i, i) <= q2(i, i) + 1e-12);
        CHECK(q4(i, i) <= q3(i, i) + 1e-12);
    }
    CHECK((q4 - q3).norm() < (q3 - q2).norm());
}

TEST_CASE("Q1 rotates with the section")
{
    const auto L = ElasticityTensor::isotropic(0.5, 1.0);
    const auto base = transformed(disc(3), 1.6, 0.6, 0.0);
    const double theta = 0.7;
    const auto rot = transformed(base, 1.0, 1.0, theta);
    const Mat3 q0 = assemble_q1(base, L).matrix;
    const Mat3 q1 = assemble_q1(rot, L).matrix;
    Mat3 G = Mat3::Identity();
    G(0, 0) = std::cos(theta);
    G(0, 1) = -std::sin(theta);
    G(1, 0) = std::sin(theta);
    G(1, 1) = std::cos(theta);
    CHECK((q1 - G * q0 * G.transpose()).norm() <= 1e-9 * q0.norm());
    // an ellipse is stiffer about its long axis
    CHECK(q0(0, 0) > q0(1, 1));
}

TEST_CASE("cell problem input checks")
{
    const auto L = ElasticityTensor::isotropic(1.0, 1.0);
    SUBCASE("disconnected section")
    {
        CrossSectionMesh m;
        m.nodes = {{1, 0}, {2, 0}, {1.5, 1}, {-1, 0}, {-2, 0}, {-1.5, -1}};
        m.triangles = {{0, 1, 2}, {3, 4, 5}};
        m.update_moments();
        CHECK_FALSE(m.connected());
        CHECK_THROWS_AS(CellProblem(m, L), SolverError);
    }
    SUBCASE("section not centred")
    {
        CHECK_THROWS_AS(CellProblem(unit_square(), L), InputError);
    }
}
