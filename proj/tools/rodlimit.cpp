// rodlimit: cross-section cell problem, limit rod and thin-beam equilibria,
// and the h-sweep comparing them.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rodlimit/beam3d.hpp"
#include "rodlimit/cross_section.hpp"
#include "rodlimit/errors.hpp"
#include "rodlimit/harness.hpp"
#include "rodlimit/load_spec.hpp"
#include "rodlimit/rod1d.hpp"

namespace fs = std::filesystem;
using namespace rodlimit;
using json = nlohmann::ordered_json;

namespace {

json mat_json(const Mat3& m)
{
    json a = json::array();
    for (int i = 0; i < 3; ++i)
        a.push_back({m(i, 0), m(i, 1), m(i, 2)});
    return a;
}

Mat3 mat_from_json(const nlohmann::json& j, const std::string& what)
{
    if (!j.is_array() || j.size() != 3)
        throw InputError(what + ": expected a 3x3 array");
    Mat3 m;
    for (int i = 0; i < 3; ++i) {
        if (!j[i].is_array() || j[i].size() != 3)
            throw InputError(what + ": expected a 3x3 array");
        for (int k = 0; k < 3; ++k)
            m(i, k) = j[i][k].get<double>();
    }
    return m;
}

EnergyDensity make_density(const std::string& kind, double lambda, double mu)
{
    return density_kind_from_string(kind) == DensityKind::DistanceSquaredToSO3 ? EnergyDensity::distance_squared()
                                                                              : EnergyDensity::isotropic(lambda, mu);
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

std::string h_tag(double h)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", h);
    return buf;
}

int run_section(const std::string& mesh_path, int refine, double lambda, double mu, const fs::path& out)
{
    if (mesh_path.empty() == (refine <= 0))
        throw InputError("section: give exactly one of --mesh and --disc-refine");
    const CrossSectionMesh raw = refine > 0 ? generate_disc(1.0, refine) : load_mesh(mesh_path);
    const auto [mesh, transform] = normalize_section(raw);
    const auto L = ElasticityTensor::isotropic(lambda, mu);
    CellProblem cell(mesh, L);
    const Q1Form q1 = assemble_q1(cell);
    const MomentMap map = moment_map(cell);

    double worst_constraint = 0.0, worst_weak = 0.0;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = 1.0;
        const WarpingField w = cell.solve(SkewCoords::from(e));
        worst_constraint = std::max(worst_constraint, w.constraints.max_abs());
        worst_weak = std::max(worst_weak, w.weak_residual);
    }

    std::printf("Q1 on (A12, A13, A23):\n");
    for (int i = 0; i < 3; ++i)
        std::printf("  % .9e  % .9e  % .9e\n", q1.matrix(i, 0), q1.matrix(i, 1), q1.matrix(i, 2));
    std::printf("constraint residual %.3e, weak residual %.3e\n", worst_constraint, worst_weak);

    json j;
    j["matrix"] = mat_json(q1.matrix);
    j["moment_map"] = mat_json(map.matrix);
    j["mesh_stats"] = {{"nodes", mesh.nodes.size()},
                       {"triangles", mesh.triangles.size()},
                       {"area_input", raw.area},
                       {"diameter", mesh.diameter()},
                       {"normalisation", {{"shift", {transform.shift.x(), transform.shift.y()}},
                                          {"angle", transform.angle},
                                          {"scale", transform.scale}}}};
    j["constraint_residuals"] = {{"max_abs", worst_constraint}, {"weak_residual", worst_weak}};
    j["material"] = {{"lambda", lambda}, {"mu", mu}};
    fs::create_directories(out);
    write_file_atomic(out / "q1.json", j.dump(2) + "\n");
    return 0;
}

int run_rod(const fs::path& q1_path, const std::string& load_spec, int grid, double tol, double length,
            const fs::path& out)
{
    std::ifstream in(q1_path);
    if (!in)
        throw IoError("cannot open " + q1_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(q1_path.string() + ": " + e.what());
    }
    Q1Form q1;
    q1.matrix = mat_from_json(j.at("matrix"), "matrix");
    const LoadProfile load = LoadSpec::parse(load_spec).sample(length, grid);

    RodSolverOptions opts;
    opts.tol = tol;
    RodSolveResult res;
    int code = 0;
    try {
        res = minimize_j2(RodConfig::straight(length, grid), q1, load, opts);
    } catch (const RodNonConvergence& e) {
        std::fprintf(stderr, "rodlimit: %s\n", e.what());
        res.config = e.last_iterate();
        res.gradient_norm = e.gradient_norm();
        code = 1;
    }
    const RodEnergy parts = energy_parts(res.config, q1, load);
    const RodFrame frame = frame_from_rotations(res.config);
    const auto a = curvature_torsion(res.config);

    std::ostringstream csv;
    csv << "x1,R11,R12,R13,R21,R22,R23,R31,R32,R33,y1,y2,y3,A12,A13,A23\n";
    for (int i = 0; i <= grid; ++i) {
        // Nodal curvature: mean of the adjacent intervals.
        Vec3 av = Vec3::Zero();
        int n = 0;
        if (i > 0) {
            av += a[i - 1].vec();
            ++n;
        }
        if (i < grid) {
            av += a[i].vec();
            ++n;
        }
        av /= n;
        const Mat3& R = res.config.rotations[i];
        csv << fmt(res.config.node(i));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                csv << ',' << fmt(R(r, c));
        for (int k = 0; k < 3; ++k)
            csv << ',' << fmt(frame.y[i][k]);
        for (int k = 0; k < 3; ++k)
            csv << ',' << fmt(av[k]);
        csv << "\n";
    }
    fs::create_directories(out);
    write_file_atomic(out / "rod_solution.csv", csv.str());

    std::printf("elastic energy %.12e\nload potential %.12e\ntotal energy %.12e\n", parts.elastic, parts.load,
                parts.total());
    std::printf("gradient norm %.3e after %d iterations\n", res.gradient_norm, res.iterations);
    if (j.contains("moment_map")) {
        MomentMap map;
        map.matrix = mat_from_json(j["moment_map"], "moment_map");
        const ElResidual el = el_residual(res.config, load, map);
        std::printf("EL residual: interior max %.3e, interior L2 %.3e, boundary %.3e (moment scale %.3e)\n",
                    el.interior_max, el.interior_l2, el.boundary_max, el.moment_scale);
    } else {
        std::printf("EL residual: not available (q1.json has no moment_map)\n");
    }
    std::printf("tip y = (%.9e, %.9e, %.9e)\n", frame.y.back().x(), frame.y.back().y(), frame.y.back().z());
    return code;
}

struct BeamArgs {
    std::string section = "disc:4";
    double h = 0.1;
    int grid = 0;
    double lambda = 0.0, mu = 1.0;
    std::string density = "svk";
    std::string load = "const:0,0,-0.1";
    double tol = 1e-8;
    double length = 1.0;
    std::string quadrature = "midpoint";
    std::string init = "lift";
    int rod_grid = 200;
    fs::path out = ".";
};

int run_beam(const BeamArgs& a)
{
    const CrossSectionMesh section = build_section(a.section);
    const EnergyDensity W = make_density(a.density, a.lambda, a.mu);
    const int n1 = a.grid > 0 ? a.grid : static_cast<int>(std::ceil(a.length / a.h - 1e-9));
    const AxialQuadrature quad = a.quadrature == "gauss2" ? AxialQuadrature::Gauss2 : AxialQuadrature::Midpoint;
    const BeamMesh mesh(section, a.length, n1, a.h, quad);
    const LoadProfile load = LoadSpec::parse(a.load).sample(a.length, n1);

    BeamState init = BeamState::identity(mesh);
    if (a.init == "lift") {
        const Q1Form q1 = assemble_q1(section, linearized_tensor(W));
        const auto rod = minimize_j2(RodConfig::straight(a.length, a.rod_grid), q1,
                                     LoadSpec::parse(a.load).sample(a.length, a.rod_grid));
        init = BeamState::lift(mesh, rod.config);
    }
    BeamSolverOptions opts;
    opts.tol = a.tol;
    int code = 0;
    BeamSolveResult res;
    try {
        res = minimize_jh(init, mesh, W, load, opts);
    } catch (const BeamNonConvergence& e) {
        std::fprintf(stderr, "rodlimit: %s\n", e.what());
        res.state = e.last_iterate();
        res.gradient_norm = e.gradient_norm();
        code = 1;
    }
    const BeamDiagnostics d = compute_diagnostics(res.state, mesh, W, load);

    std::ostringstream csv;
    csv << "k,s,x1,x2,x3,y1,y2,y3\n";
    for (int k = 0; k <= n1; ++k)
        for (int s = 0; s < mesh.section_nodes(); ++s) {
            const Vec3& y = res.state.y[mesh.node(k, s)];
            const Vec2& x = section.nodes[s];
            csv << k << ',' << s << ',' << fmt(mesh.x1(k)) << ',' << fmt(x.x()) << ',' << fmt(x.y()) << ','
                << fmt(y.x()) << ',' << fmt(y.y()) << ',' << fmt(y.z()) << "\n";
        }
    fs::create_directories(a.out);
    const std::string tag = h_tag(a.h);
    write_file_atomic(a.out / ("beam_h" + tag + ".csv"), csv.str());

    json j;
    j["h"] = a.h;
    j["grid"] = n1;
    j["energy"] = {{"elastic", d.energy.elastic}, {"load", d.energy.load}, {"total", d.energy.total()},
                   {"elastic_over_h2", d.energy.elastic / (a.h * a.h)}};
    j["gradient_norm"] = res.gradient_norm;
    j["gradient_scale"] = res.gradient_scale;
    j["iterations"] = res.iterations;
    j["at_roundoff_floor"] = res.at_roundoff_floor;
    j["rigidity_norm"] = d.rigidity_norm;
    j["symmetry_defect"] = d.symmetry_defect;
    j["linearization_defect"] = d.linearization_defect;
    j["moment_identity"] = {{"residual", d.moment_identity_residual}, {"scale", d.moment_identity_scale}};
    json st = json::array();
    for (std::size_t i = 0; i < d.moments.x1.size(); ++i)
        st.push_back({{"x1", d.moments.x1[i]},
                      {"mean", mat_json(d.moments.mean[i])},
                      {"first_x2", mat_json(d.moments.first_x2[i])},
                      {"first_x3", mat_json(d.moments.first_x3[i])}});
    j["moments"] = st;
    write_file_atomic(a.out / ("diag_h" + tag + ".json"), j.dump(2) + "\n");

    std::printf("h %g grid %d: energy/h^2 %.9e, rigidity %.6e, symmetry/h %.6e, iterations %d, gradient %.3e\n",
                a.h, n1, d.energy.elastic / (a.h * a.h), d.rigidity_norm, d.symmetry_defect / a.h, res.iterations,
                res.gradient_norm);
    return code;
}

int run_converge(const fs::path& config_path, const std::string& out, bool fresh)
{
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::from_yaml_file(config_path);
    if (!out.empty())
        cfg.output = out;
    if (fresh)
        fs::remove(cfg.output / "rows.json");
    const ConvergenceReport report = run_convergence(cfg);
    std::fputs(summary_text(report).c_str(), stdout);
    if (report.verdict.status == "pass")
        return 0;
    if (report.verdict.status == "fail")
        return 1;
    return 2;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cross-section cell problems, limit rods and thin-beam equilibria"};
    app.require_subcommand(1);

    auto* sec = app.add_subcommand("section", "solve the cell problem and assemble Q1");
    std::string mesh_path;
    int refine = 0;
    double lambda = 0.0, mu = 1.0;
    fs::path sec_out = ".";
    sec->add_option("--mesh", mesh_path, "cross-section mesh file");
    sec->add_option("--disc-refine", refine, "use the unit-area disc at this refinement instead");
    sec->add_option("--lambda", lambda, "Lame lambda")->capture_default_str();
    sec->add_option("--mu", mu, "Lame mu")->capture_default_str();
    sec->add_option("--out", sec_out, "output directory")->capture_default_str();

    auto* rod = app.add_subcommand("rod", "solve the limit rod");
    fs::path q1_path = "q1.json";
    std::string rod_load = "zero";
    int rod_grid = 200;
    double rod_tol = 1e-10, rod_length = 1.0;
    fs::path rod_out = ".";
    rod->add_option("--q1", q1_path, "q1.json from the section subcommand")->capture_default_str();
    rod->add_option("--load", rod_load, "zero | const:gx,gy,gz | file:PATH")->capture_default_str();
    rod->add_option("--grid", rod_grid, "intervals")->capture_default_str()->check(CLI::PositiveNumber);
    rod->add_option("--tol", rod_tol, "gradient tolerance")->capture_default_str();
    rod->add_option("--length", rod_length, "rod length")->capture_default_str();
    rod->add_option("--out", rod_out, "output directory")->capture_default_str();

    auto* beam = app.add_subcommand("beam", "solve the 3D thin-beam problem at one h");
    beam->set_help_flag("--help", "print this help and exit"); // -h would clash with --h
    BeamArgs ba;
    beam->add_option("--section", ba.section, "PATH or disc:K")->capture_default_str();
    beam->add_option("--h", ba.h, "thickness")->capture_default_str();
    beam->add_option("--grid", ba.grid, "axial intervals (default ceil(L/h))");
    beam->add_option("--lambda", ba.lambda, "Lame lambda")->capture_default_str();
    beam->add_option("--mu", ba.mu, "Lame mu")->capture_default_str();
    beam->add_option("--density", ba.density, "dist2 | svk")->capture_default_str()->check(
        CLI::IsMember({"dist2", "svk"}));
    beam->add_option("--load", ba.load, "zero | const:gx,gy,gz | file:PATH")->capture_default_str();
    beam->add_option("--tol", ba.tol, "relative gradient tolerance")->capture_default_str();
    beam->add_option("--length", ba.length, "beam length")->capture_default_str();
    beam->add_option("--quadrature", ba.quadrature, "midpoint | gauss2")->capture_default_str()->check(
        CLI::IsMember({"midpoint", "gauss2"}));
    beam->add_option("--init", ba.init, "lift | identity")->capture_default_str()->check(
        CLI::IsMember({"lift", "identity"}));
    beam->add_option("--out", ba.out, "output directory")->capture_default_str();

    auto* conv = app.add_subcommand("converge", "run the h-sweep and compare with the rod");
    fs::path config_path;
    std::string conv_out;
    bool fresh = false;
    conv->add_option("--config", config_path, "YAML config (defaults are used when omitted)");
    conv->add_option("--out", conv_out, "output directory (overrides the config)");
    conv->add_flag("--fresh", fresh, "discard persisted rows");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*sec)
            return run_section(mesh_path, refine, lambda, mu, sec_out);
        if (*rod)
            return run_rod(q1_path, rod_load, rod_grid, rod_tol, rod_length, rod_out);
        if (*beam)
            return run_beam(ba);
        if (*conv)
            return run_converge(config_path, conv_out, fresh);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "rodlimit: error: %s\n", e.what());
        return 2;
    }
    return 2;
}
