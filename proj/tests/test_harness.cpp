#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rodlimit/errors.hpp"
#include "rodlimit/harness.hpp"
#include "rodlimit/parallel.hpp"

using namespace rodlimit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "rodlimit_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int count_lines(const std::string& s)
{
    int n = 0;
    for (char c : s)
        n += c == '\n';
    return n;
}

// A sweep small enough for a unit test.
ExperimentConfig small_config(const fs::path& out)
{
    ExperimentConfig c;
    c.section = "disc:2";
    c.h = {0.5, 0.25};
    c.rod_grid = 40;
    c.output = out;
    return c;
}

ConvergenceRow good_row(double h, double scale)
{
    ConvergenceRow r;
    r.h = h;
    r.grid = static_cast<int>(std::ceil(1.0 / h));
    r.config_hash = "abc";
    r.ok = true;
    r.energy_over_h2 = 1.0 + 0.1 * scale;
    r.rigidity_norm = scale;
    r.rigidity_norm_renormalized = scale;
    r.symmetry_over_h = 0.1;
    r.midline_w12 = scale;
    r.director2_l2 = scale;
    r.director3_l2 = scale;
    r.moment_identity_scale = 1.0;
    return r;
}

ConvergenceReport synthetic(const std::vector<double>& hs)
{
    ConvergenceReport rep;
    rep.config_hash = "abc";
    for (double h : hs)
        rep.rows.push_back(good_row(h, h));
    rep.rod.elastic = 1.0;
    rep.rod.converged = true;
    rep.rod.stationary = true;
    rep.slopes = fit_slopes(rep.rows);
    return rep;
}

// Independent oracle: midpoint rule on a fine grid with direct linear interpolation.
double brute_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double length, bool with_derivative)
{
    auto eval = [&](const std::vector<Vec3>& v, double x, Vec3& d) {
        const int n = static_cast<int>(v.size()) - 1;
        const double dx = length / n;
        const int i = std::min(n - 1, static_cast<int>(x / dx));
        const double t = x / dx - i;
        d = (v[i + 1] - v[i]) / dx;
        return Vec3((1 - t) * v[i] + t * v[i + 1]);
    };
    const int m = 200000;
    double sum = 0.0;
    for (int k = 0; k < m; ++k) {
        const double x = (k + 0.5) * length / m;
        Vec3 da, db;
        const Vec3 diff = eval(a, x, da) - eval(b, x, db);
        sum += diff.squaredNorm() + (with_derivative ? (da - db).squaredNorm() : 0.0);
    }
    return std::sqrt(sum * length / m);
}

} // namespace

TEST_CASE("config parsing and validation")
{
    SUBCASE("defaults")
    {
        const auto c = ExperimentConfig::from_yaml_text("");
        CHECK(c.h == std::vector<double>{0.2, 0.1, 0.05});
        CHECK(c.grid_for(2) == 20);
        CHECK(c.section == "disc:4");
    }
    SUBCASE("full document")
    {
        const auto c = ExperimentConfig::from_yaml_text(R"(
section: disc:3
material: {density: svk, lambda: 0.5, mu: 2}
load: const:0,0.1,-0.2
length: 2
h: [0.4, 0.2]
grid: [6, 12]
rod: {grid: 80, tol: 1e-9}
beam: {tol: 1e-7, max_iters: 20, quadrature: gauss2, init: identity}
output: out
)",
                                                        "/base");
        CHECK(c.material.lame_lambda == 0.5);
        CHECK(c.grid_for(1) == 12);
        CHECK(c.quadrature == AxialQuadrature::Gauss2);
        CHECK(c.init == BeamInit::Identity);
        CHECK(c.output == fs::path("/base/out"));
        const auto again = ExperimentConfig::from_yaml_text(c.to_yaml());
        CHECK(again.hash() == c.hash());
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("sections: disc:2\n"), ParseError);
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("beam:\n  quadrature: simpson\n"), ParseError);
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("h: [0.1, 0.2]\n"), InputError);
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("h: [0.2]\ngrid: [2]\n"), InputError);
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("h: [0.2, -0.1]\n"), InputError);
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("material: {mu: -1}\n"), InputError);
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_text("load: wind\n"), InputError);
        try {
            ExperimentConfig::from_yaml_text("h: [0.2]\nrod:\n  grid: 10\n  toll: 1\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 4);
        }
        CHECK_THROWS_AS(ExperimentConfig::from_yaml_file("/nonexistent/config.yaml"), IoError);
    }
}

TEST_CASE("config hash")
{
    ExperimentConfig a;
    ExperimentConfig b = a;
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.output = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.h = {0.2, 0.1};
    CHECK(a.hash() != b.hash());
    ExperimentConfig c = a;
    c.material.lame_lambda = 1e-3;
    CHECK(a.hash() != c.hash());
    // FNV-1a test vectors
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("log-log slope")
{
    const std::vector<double> h = {0.4, 0.2, 0.1, 0.05};
    std::vector<double> v;
    for (double x : h)
        v.push_back(3.0 * x * x);
    CHECK(*loglog_slope(h, v) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_FALSE(loglog_slope({0.1}, {1.0}).has_value());
    CHECK_FALSE(loglog_slope(h, {0.0, 0.0, 0.0, 0.0}).has_value());
}

TEST_CASE("profile distances on different grids")
{
    // a hat on two intervals against zero on three
    const std::vector<Vec3> hat = {Vec3::Zero(), Vec3(0, 0, 1), Vec3::Zero()};
    const std::vector<Vec3> zero(4, Vec3::Zero());
    CHECK(l2_distance(hat, zero, 1.0) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-14));
    CHECK(w12_distance(hat, zero, 1.0) == doctest::Approx(std::sqrt(13.0 / 3.0)).epsilon(1e-14));

    const std::vector<Vec3> a = {Vec3(0, 1, 0), Vec3(0.2, -1, 0.5), Vec3(1, 0, 0), Vec3(0.3, 0.3, 0.3)};
    const std::vector<Vec3> b = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(0.5, 0, 1), Vec3(0, 0, 0)};
    CHECK(l2_distance(a, b, 2.0) == doctest::Approx(brute_distance(a, b, 2.0, false)).epsilon(1e-6));
    CHECK(w12_distance(a, b, 2.0) == doctest::Approx(brute_distance(a, b, 2.0, true)).epsilon(1e-6));
    CHECK(w12_distance(a, a, 2.0) == 0.0);
}

TEST_CASE("verdict on synthetic reports")
{
    SUBCASE("clean first-order convergence passes")
    {
        const auto v = compare_equilibria(synthetic({0.2, 0.1, 0.05}));
        CHECK(v.pass);
        CHECK(v.status == "pass");
        CHECK(v.reasons.empty());
    }
    SUBCASE("non-decreasing midline fails")
    {
        auto rep = synthetic({0.2, 0.1, 0.05});
        rep.rows[2].midline_w12 = rep.rows[1].midline_w12;
        const auto v = compare_equilibria(rep);
        CHECK_FALSE(v.pass);
        CHECK(v.reasons.size() == 1);
    }
    SUBCASE("rigidity slope outside the window fails with three rows only")
    {
        auto rep = synthetic({0.2, 0.1, 0.05});
        for (auto& r : rep.rows)
            r.rigidity_norm = r.h * r.h;
        rep.slopes = fit_slopes(rep.rows);
        CHECK_FALSE(compare_equilibria(rep).pass);
        auto two = synthetic({0.2, 0.1});
        for (auto& r : two.rows)
            r.rigidity_norm = r.h * r.h;
        two.slopes = fit_slopes(two.rows);
        CHECK(compare_equilibria(two).pass);
    }
    SUBCASE("unverified rod")
    {
        auto rep = synthetic({0.2, 0.1});
        rep.rod.stationary = false;
        const auto v = compare_equilibria(rep);
        CHECK_FALSE(v.pass);
        REQUIRE(v.reasons.size() == 1);
        CHECK(v.reasons[0] == "rod stationarity unverified");
    }
    SUBCASE("reported-only checks do not gate")
    {
        auto rep = synthetic({0.2, 0.1});
        rep.rows[1].symmetry_over_h = 10.0;
        rep.rows[1].moment_identity_residual = 0.5;
        const auto v = compare_equilibria(rep);
        CHECK(v.pass);
        int failed = 0;
        for (const auto& c : v.checks)
            failed += !c.pass;
        CHECK(failed == 2);
    }
    SUBCASE("a failed row fails the verdict")
    {
        auto rep = synthetic({0.2, 0.1, 0.05});
        rep.rows[1].ok = false;
        rep.rows[1].error = "solver diverged";
        const auto v = compare_equilibria(rep);
        CHECK_FALSE(v.pass);
        CHECK(v.reasons.at(0).find("solver diverged") != std::string::npos);
    }
    SUBCASE("fewer than two rows")
    {
        CHECK_THROWS_AS(compare_equilibria(synthetic({0.2})), InsufficientData);
        CHECK_THROWS_AS(compare_equilibria(synthetic({})), InsufficientData);
    }
}

TEST_CASE("report output")
{
    SUBCASE("empty report has headers only")
    {
        ConvergenceReport rep;
        const auto csv = convergence_csv(rep);
        CHECK(count_lines(csv) == 1);
        CHECK(csv.rfind("h,grid,config_hash,status,", 0) == 0);
        CHECK(report_json(rep).find("\"no data\"") != std::string::npos);
    }
    SUBCASE("one data line per row, no timing outside the json")
    {
        auto rep = synthetic({0.2, 0.1, 0.05});
        rep.verdict = compare_equilibria(rep);
        rep.rows[0].wall_seconds = 12.5;
        const auto csv = convergence_csv(rep);
        CHECK(count_lines(csv) == 4);
        CHECK(csv.find("12.5") == std::string::npos);
        CHECK(summary_text(rep).find("12.5") == std::string::npos);
        CHECK(report_json(rep, true).find("wall") != std::string::npos);
        CHECK(report_json(rep, false).find("wall") == std::string::npos);
    }
    SUBCASE("emit writes the three files")
    {
        const auto dir = fresh_dir("emit");
        auto rep = synthetic({0.2, 0.1});
        rep.verdict = compare_equilibria(rep);
        emit_report(rep, dir);
        CHECK(slurp(dir / "convergence.csv") == convergence_csv(rep));
        CHECK(fs::exists(dir / "report.json"));
        CHECK(fs::exists(dir / "summary.txt"));
        CHECK_THROWS_AS(emit_report(rep, "/proc/rodlimit_cannot_write"), IoError);
    }
}

TEST_CASE("small sweep: rerun, resume and foreign hash")
{
    const auto dir_a = fresh_dir("sweep_a");
    const auto dir_b = fresh_dir("sweep_b");
    const auto full = run_convergence(small_config(dir_a));
    REQUIRE(full.rows.size() == 2);
    CHECK(full.rows[0].ok);
    CHECK(full.rows[1].ok);
    CHECK(full.rod.converged);

    // interrupted after one row, then resumed
    RunOptions once;
    once.max_new_rows = 1;
    const auto partial = run_convergence(small_config(dir_b), once);
    CHECK(partial.rows.size() == 1);
    CHECK(partial.verdict.status == "insufficient data");
    const auto resumed = run_convergence(small_config(dir_b));
    REQUIRE(resumed.rows.size() == 2);

    CHECK(slurp(dir_a / "convergence.csv") == slurp(dir_b / "convergence.csv"));
    CHECK(slurp(dir_a / "summary.txt") == slurp(dir_b / "summary.txt"));
    CHECK(report_json(full, false) == report_json(resumed, false));

    // a different configuration may not reuse the directory
    auto other = small_config(dir_a);
    other.load = "const:0,0,-0.2";
    CHECK_THROWS_AS(run_convergence(other), InputError);
    RunOptions fresh;
    fresh.resume = false;
    CHECK_NOTHROW(run_convergence(other, fresh));
}

TEST_CASE("small sweep: zero load passes with all distances zero")
{
    auto cfg = small_config(fresh_dir("sweep_zero"));
    cfg.load = "zero";
    const auto rep = run_convergence(cfg);
    CHECK(rep.verdict.pass);
    for (const auto& r : rep.rows) {
        CHECK(r.midline_w12 <= 1e-12);
        CHECK(r.director2_l2 <= 1e-12);
        CHECK(r.rigidity_norm <= 1e-12);
        CHECK(r.energy_over_h2 <= 1e-12);
    }
}

TEST_CASE("small sweep: a loose rod tolerance is caught")
{
    auto cfg = small_config(fresh_dir("sweep_loose"));
    cfg.rod_tol = 1e-1;
    const auto rep = run_convergence(cfg);
    CHECK_FALSE(rep.rod.stationary);
    CHECK_FALSE(rep.verdict.pass);
    bool found = false;
    for (const auto& r : rep.verdict.reasons)
        found = found || r == "rod stationarity unverified";
    CHECK(found);
}

TEST_CASE("parallel_for")
{
    for (std::size_t n : {0, 1, 7, 1000}) {
        std::vector<std::atomic<int>> hits(n);
        parallel_for(n, 3, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                hits[i]++;
        });
        for (std::size_t i = 0; i < n; ++i)
            CHECK(hits[i] == 1);
    }
    try {
        parallel_for(100, 10, [](std::size_t b, std::size_t) {
            if (b == 30 || b == 70)
                throw std::runtime_error("chunk " + std::to_string(b));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "chunk 30");
    }
    CHECK(worker_count() >= 1);
}
