#include "rodlimit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "rodlimit/errors.hpp"
#include "rodlimit/rod1d.hpp"

namespace rodlimit {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt_e(double v)
{
    if (!std::isfinite(v))
        return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
}

std::string fmt_g(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The bytes a load or section spec refers to, so that editing a referenced
// file changes the config hash.
std::string referenced_digest(const std::string& spec, const char* prefix)
{
    const std::string p = prefix;
    if (!p.empty() && spec.rfind(p, 0) != 0)
        return "";
    const std::string path = spec.substr(p.size());
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        return "missing";
    return hex64(fnv1a64(read_file(path)));
}

std::string quadrature_name(AxialQuadrature q) { return q == AxialQuadrature::Midpoint ? "midpoint" : "gauss2"; }
std::string init_name(BeamInit i) { return i == BeamInit::Lift ? "lift" : "identity"; }

std::string resolve(const std::string& path, const std::filesystem::path& base)
{
    if (base.empty() || path.empty() || std::filesystem::path(path).is_absolute())
        return path;
    return (base / path).lexically_normal().string();
}

template <class T> T yaml_get(const YAML::Node& node, const std::string& key)
{
    try {
        return node.as<T>();
    } catch (const YAML::Exception& e) {
        throw ParseError("bad value for '" + key + "'", e.mark.line + 1);
    }
}

void check_keys(const YAML::Node& map, std::initializer_list<const char*> allowed, const std::string& where)
{
    for (const auto& kv : map) {
        const std::string k = kv.first.as<std::string>();
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
            throw ParseError("unknown key '" + k + "'" + (where.empty() ? "" : " in " + where), kv.first.Mark().line + 1);
    }
}

// Piecewise-linear value of nodal data on a uniform grid of (0, L).
Vec3 interpolate(const std::vector<Vec3>& v, double length, double x)
{
    const int n = static_cast<int>(v.size()) - 1;
    if (n == 0)
        return v[0];
    const double s = std::clamp(x / length * n, 0.0, static_cast<double>(n));
    const int i = std::min(n - 1, static_cast<int>(std::floor(s)));
    const double t = s - i;
    return (1.0 - t) * v[i] + t * v[i + 1];
}

std::vector<double> common_breakpoints(std::size_t na, std::size_t nb, double length)
{
    std::vector<double> x;
    for (std::size_t i = 0; i < na; ++i)
        x.push_back(length * static_cast<double>(i) / static_cast<double>(na - 1));
    for (std::size_t i = 0; i < nb; ++i)
        x.push_back(length * static_cast<double>(i) / static_cast<double>(nb - 1));
    std::sort(x.begin(), x.end());
    const double eps = 1e-12 * length;
    x.erase(std::unique(x.begin(), x.end(), [eps](double p, double q) { return q - p <= eps; }), x.end());
    return x;
}

std::pair<double, double> profile_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double length)
{
    if (a.size() < 2 || b.size() < 2)
        throw InputError("profile distance: need at least two nodes per profile");
    const auto x = common_breakpoints(a.size(), b.size(), length);
    double l2 = 0.0, semi = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double dx = x[k + 1] - x[k];
        const Vec3 d0 = interpolate(a, length, x[k]) - interpolate(b, length, x[k]);
        const Vec3 d1 = interpolate(a, length, x[k + 1]) - interpolate(b, length, x[k + 1]);
        l2 += dx * (d0.squaredNorm() + d0.dot(d1) + d1.squaredNorm()) / 3.0;
        semi += (d1 - d0).squaredNorm() / dx;
    }
    return {l2, semi};
}

Vec3 moment_triple(const Mat3& first_x2, const Mat3& first_x3)
{
    return {first_x2(0, 0), first_x3(0, 0), first_x3(1, 0) - first_x2(2, 0)};
}

ordered_json optional_json(const std::optional<double>& v)
{
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json row_json(const ConvergenceRow& r, bool timing)
{
    ordered_json j;
    j["h"] = r.h;
    j["grid"] = r.grid;
    j["config_hash"] = r.config_hash;
    j["ok"] = r.ok;
    j["error"] = r.error;
    j["energy_over_h2"] = r.energy_over_h2;
    j["rigidity_norm"] = r.rigidity_norm;
    j["rigidity_norm_renormalized"] = r.rigidity_norm_renormalized;
    j["symmetry_over_h"] = r.symmetry_over_h;
    j["linearization_defect"] = r.linearization_defect;
    j["midline_w12"] = r.midline_w12;
    j["midline_l2"] = r.midline_l2;
    j["director2_l2"] = r.director2_l2;
    j["director3_l2"] = r.director3_l2;
    j["moment_distance"] = r.moment_distance;
    j["moment_identity_residual"] = r.moment_identity_residual;
    j["moment_identity_scale"] = r.moment_identity_scale;
    j["gradient_norm"] = r.gradient_norm;
    j["gradient_scale"] = r.gradient_scale;
    j["iterations"] = r.iterations;
    if (timing)
        j["wall_seconds"] = r.wall_seconds;
    return j;
}

ConvergenceRow row_from_json(const nlohmann::json& j)
{
    ConvergenceRow r;
    r.h = j.at("h");
    r.grid = j.at("grid");
    r.config_hash = j.at("config_hash");
    r.ok = j.at("ok");
    r.error = j.at("error");
    r.energy_over_h2 = j.at("energy_over_h2");
    r.rigidity_norm = j.at("rigidity_norm");
    r.rigidity_norm_renormalized = j.at("rigidity_norm_renormalized");
    r.symmetry_over_h = j.at("symmetry_over_h");
    r.linearization_defect = j.at("linearization_defect");
    r.midline_w12 = j.at("midline_w12");
    r.midline_l2 = j.at("midline_l2");
    r.director2_l2 = j.at("director2_l2");
    r.director3_l2 = j.at("director3_l2");
    r.moment_distance = j.at("moment_distance");
    r.moment_identity_residual = j.at("moment_identity_residual");
    r.moment_identity_scale = j.at("moment_identity_scale");
    r.gradient_norm = j.at("gradient_norm");
    r.gradient_scale = j.at("gradient_scale");
    r.iterations = j.at("iterations");
    r.wall_seconds = j.value("wall_seconds", 0.0);
    return r;
}

const char* kRowsFile = "rows.json";

} // namespace

std::uint64_t fnv1a64(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

CrossSectionMesh build_section(const std::string& spec)
{
    if (spec.rfind("disc:", 0) == 0) {
        int k = 0;
        std::size_t used = 0;
        try {
            k = std::stoi(spec.substr(5), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != spec.size() - 5)
            throw InputError("bad section spec '" + spec + "': expected disc:K");
        return normalize_section(generate_disc(1.0, k)).first;
    }
    return normalize_section(load_mesh(spec)).first;
}

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::from_yaml_file(const std::filesystem::path& path)
{
    return from_yaml_text(read_file(path), path.parent_path());
}

ExperimentConfig ExperimentConfig::from_yaml_text(const std::string& text, const std::filesystem::path& base)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ParseError(e.msg, e.mark.line + 1);
    }
    ExperimentConfig c;
    if (root.IsNull())
        return c;
    if (!root.IsMap())
        throw ParseError("config must be a mapping", 1);
    check_keys(root, {"section", "material", "load", "length", "h", "grid", "rod", "beam", "output"}, "");

    if (root["section"]) {
        const auto s = yaml_get<std::string>(root["section"], "section");
        c.section = s.rfind("disc:", 0) == 0 ? s : resolve(s, base);
    }
    if (const auto m = root["material"]) {
        if (!m.IsMap())
            throw ParseError("'material' must be a mapping", m.Mark().line + 1);
        check_keys(m, {"density", "lambda", "mu"}, "material");
        if (m["density"])
            c.material.kind = density_kind_from_string(yaml_get<std::string>(m["density"], "material.density"));
        if (m["lambda"])
            c.material.lame_lambda = yaml_get<double>(m["lambda"], "material.lambda");
        if (m["mu"])
            c.material.lame_mu = yaml_get<double>(m["mu"], "material.mu");
        if (c.material.kind == DensityKind::DistanceSquaredToSO3) {
            c.material.lame_lambda = 0.0;
            c.material.lame_mu = 1.0;
        }
    }
    if (root["load"]) {
        const auto s = yaml_get<std::string>(root["load"], "load");
        c.load = s.rfind("file:", 0) == 0 ? "file:" + resolve(s.substr(5), base) : s;
    }
    if (root["length"])
        c.length = yaml_get<double>(root["length"], "length");
    if (root["h"])
        c.h = yaml_get<std::vector<double>>(root["h"], "h");
    if (root["grid"])
        c.grid = yaml_get<std::vector<int>>(root["grid"], "grid");
    if (const auto r = root["rod"]) {
        check_keys(r, {"grid", "tol"}, "rod");
        if (r["grid"])
            c.rod_grid = yaml_get<int>(r["grid"], "rod.grid");
        if (r["tol"])
            c.rod_tol = yaml_get<double>(r["tol"], "rod.tol");
    }
    if (const auto b = root["beam"]) {
        check_keys(b, {"tol", "max_iters", "quadrature", "init"}, "beam");
        if (b["tol"])
            c.beam_tol = yaml_get<double>(b["tol"], "beam.tol");
        if (b["max_iters"])
            c.beam_max_iters = yaml_get<int>(b["max_iters"], "beam.max_iters");
        if (b["quadrature"]) {
            const auto q = yaml_get<std::string>(b["quadrature"], "beam.quadrature");
            if (q == "midpoint")
                c.quadrature = AxialQuadrature::Midpoint;
            else if (q == "gauss2")
                c.quadrature = AxialQuadrature::Gauss2;
            else
                throw ParseError("beam.quadrature must be midpoint or gauss2", b["quadrature"].Mark().line + 1);
        }
        if (b["init"]) {
            const auto i = yaml_get<std::string>(b["init"], "beam.init");
            if (i == "lift")
                c.init = BeamInit::Lift;
            else if (i == "identity")
                c.init = BeamInit::Identity;
            else
                throw ParseError("beam.init must be lift or identity", b["init"].Mark().line + 1);
        }
    }
    if (root["output"])
        c.output = resolve(yaml_get<std::string>(root["output"], "output"), base);
    c.validate();
    return c;
}

std::string ExperimentConfig::to_yaml() const
{
    std::ostringstream os;
    os << "section: " << section << "\n";
    os << "material:\n  density: " << (material.kind == DensityKind::DistanceSquaredToSO3 ? "dist2" : "svk") << "\n";
    os << "  lambda: " << fmt_g(material.lame_lambda) << "\n  mu: " << fmt_g(material.lame_mu) << "\n";
    os << "load: \"" << load << "\"\n";
    os << "length: " << fmt_g(length) << "\n";
    os << "h: [";
    for (std::size_t i = 0; i < h.size(); ++i)
        os << (i ? ", " : "") << fmt_g(h[i]);
    os << "]\n";
    if (!grid.empty()) {
        os << "grid: [";
        for (std::size_t i = 0; i < grid.size(); ++i)
            os << (i ? ", " : "") << grid[i];
        os << "]\n";
    }
    os << "rod:\n  grid: " << rod_grid << "\n  tol: " << fmt_g(rod_tol) << "\n";
    os << "beam:\n  tol: " << fmt_g(beam_tol) << "\n  max_iters: " << beam_max_iters
       << "\n  quadrature: " << quadrature_name(quadrature) << "\n  init: " << init_name(init) << "\n";
    os << "output: \"" << output.string() << "\"\n";
    return os.str();
}

int ExperimentConfig::grid_for(std::size_t i) const
{
    if (!grid.empty())
        return grid.at(i);
    return std::max(1, static_cast<int>(std::ceil(length / h.at(i) - 1e-9)));
}

void ExperimentConfig::validate() const
{
    if (!(length > 0.0) || !std::isfinite(length))
        throw InputError("config: length must be positive");
    if (h.empty())
        throw InputError("config: h list is empty");
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!(h[i] > 0.0) || !std::isfinite(h[i]))
            throw InputError("config: h values must be positive");
        if (i > 0 && !(h[i] < h[i - 1]))
            throw InputError("config: h list must be strictly decreasing");
    }
    if (!grid.empty() && grid.size() != h.size())
        throw InputError("config: grid must list one size per h");
    for (std::size_t i = 0; i < h.size(); ++i) {
        const int n = grid_for(i);
        if (n < 1)
            throw InputError("config: grid sizes must be positive");
        if (length / n > h[i] * (1.0 + 1e-12))
            throw InputError("config: grid " + std::to_string(n) + " gives dx1 > h = " + fmt_g(h[i]));
    }
    if (rod_grid < 2)
        throw InputError("config: rod grid needs at least 2 intervals");
    if (!(rod_tol > 0.0) || !(beam_tol > 0.0))
        throw InputError("config: solver tolerances must be positive");
    if (beam_max_iters < 1)
        throw InputError("config: beam max_iters must be positive");
    if (material.kind == DensityKind::IsotropicQuadraticStrain &&
        !(material.lame_mu > 0.0 && 3.0 * material.lame_lambda + 2.0 * material.lame_mu > 0.0))
        throw InputError("config: need mu > 0 and 3 lambda + 2 mu > 0");
    LoadSpec::parse(load);
}

std::string ExperimentConfig::canonical() const
{
    std::ostringstream os;
    os << "section=" << section << "\n";
    if (section.rfind("disc:", 0) != 0)
        os << "section_digest=" << referenced_digest(section, "") << "\n";
    os << "density=" << to_string(material.kind) << "\n";
    os << "lambda=" << fmt_g(material.lame_lambda) << "\nmu=" << fmt_g(material.lame_mu) << "\n";
    os << "load=" << load << "\n";
    if (load.rfind("file:", 0) == 0)
        os << "load_digest=" << referenced_digest(load, "file:") << "\n";
    os << "length=" << fmt_g(length) << "\n";
    for (std::size_t i = 0; i < h.size(); ++i)
        os << "h[" << i << "]=" << fmt_g(h[i]) << " grid=" << grid_for(i) << "\n";
    os << "rod_grid=" << rod_grid << "\nrod_tol=" << fmt_g(rod_tol) << "\n";
    os << "beam_tol=" << fmt_g(beam_tol) << "\nbeam_max_iters=" << beam_max_iters << "\n";
    os << "quadrature=" << quadrature_name(quadrature) << "\ninit=" << init_name(init) << "\n";
    return os.str();
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical())); }

// ---------------------------------------------------------------------------
// Distances

double l2_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double length)
{
    return std::sqrt(profile_distance(a, b, length).first);
}

double w12_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double length)
{
    const auto [l2, semi] = profile_distance(a, b, length);
    return std::sqrt(l2 + semi);
}

// ---------------------------------------------------------------------------
// Running

RodReference solve_rod_reference(const ExperimentConfig& cfg, const CrossSectionMesh& section)
{
    const auto t0 = std::chrono::steady_clock::now();
    RodReference ref;
    const auto L = linearized_tensor(cfg.material);
    CellProblem cell(section, L);
    const Q1Form q1 = assemble_q1(cell);
    const MomentMap map = moment_map(cell);
    const LoadProfile load = LoadSpec::parse(cfg.load).sample(cfg.length, cfg.rod_grid);

    RodSummary& s = ref.summary;
    s.grid = cfg.rod_grid;
    RodSolverOptions opts;
    opts.tol = cfg.rod_tol;
    try {
        ref.solution = minimize_j2(RodConfig::straight(cfg.length, cfg.rod_grid), q1, load, opts);
        s.converged = true;
    } catch (const RodNonConvergence& e) {
        ref.solution.config = e.last_iterate();
        ref.solution.gradient_norm = e.gradient_norm();
        s.error = e.what();
    }
    const RodEnergy parts = energy_parts(ref.solution.config, q1, load);
    s.elastic = parts.elastic;
    s.total = parts.total();
    s.gradient_norm = ref.solution.gradient_norm;
    s.iterations = ref.solution.iterations;
    ref.frame = frame_from_rotations(ref.solution.config);

    const ElResidual el = el_residual(ref.solution.config, load, map);
    s.el_interior_max = el.interior_max;
    s.el_boundary_max = el.boundary_max;
    for (const Vec3& g : tilde_g(load))
        s.load_scale = std::max(s.load_scale, g.norm());
    s.moment_scale = el.moment_scale;
    // Independent of the solver tolerance, so a loose tolerance cannot pass
    // itself; the floor only admits round-off in the zero-load case.
    s.el_gate = 1e-3 * s.load_scale + 1e-12;
    s.el_boundary_gate = 1e-3 * s.moment_scale + 1e-12;
    s.stationary = s.converged && s.el_interior_max <= s.el_gate && s.el_boundary_max <= s.el_boundary_gate;

    for (const SkewCoords& a : curvature_torsion(ref.solution.config))
        ref.moments.push_back(map.apply(a));
    s.wall_seconds = seconds_since(t0);
    return ref;
}

ConvergenceRow run_row(const ExperimentConfig& cfg, const CrossSectionMesh& section, const RodReference& rod,
                       std::size_t index)
{
    const auto t0 = std::chrono::steady_clock::now();
    ConvergenceRow row;
    row.h = cfg.h.at(index);
    row.grid = cfg.grid_for(index);
    row.config_hash = cfg.hash();
    try {
        const BeamMesh mesh(section, cfg.length, row.grid, row.h, cfg.quadrature);
        const LoadProfile load = LoadSpec::parse(cfg.load).sample(cfg.length, row.grid);
        const BeamState init = cfg.init == BeamInit::Lift ? BeamState::lift(mesh, rod.solution.config)
                                                          : BeamState::identity(mesh);
        BeamSolverOptions opts;
        opts.tol = cfg.beam_tol;
        opts.max_iters = cfg.beam_max_iters;
        const BeamSolveResult res = minimize_jh(init, mesh, cfg.material, load, opts);
        const BeamDiagnostics d = compute_diagnostics(res.state, mesh, cfg.material, load);

        row.energy_over_h2 = d.energy.elastic / (row.h * row.h);
        row.rigidity_norm = d.rigidity_norm;
        row.rigidity_norm_renormalized = d.rigidity_norm_renormalized;
        row.symmetry_over_h = d.symmetry_defect / row.h;
        row.linearization_defect = d.linearization_defect;
        row.midline_w12 = w12_distance(d.profiles.midline, rod.frame.y, cfg.length);
        row.midline_l2 = l2_distance(d.profiles.midline, rod.frame.y, cfg.length);
        row.director2_l2 = l2_distance(d.profiles.director2, rod.frame.d2, cfg.length);
        row.director3_l2 = l2_distance(d.profiles.director3, rod.frame.d3, cfg.length);

        // Rod moments live at interval midpoints; interpolate to the stations.
        const int n = static_cast<int>(rod.moments.size());
        const double dr = cfg.length / n;
        const int na = mesh.axial_points();
        double md = 0.0;
        for (std::size_t st = 0; st < d.moments.x1.size(); ++st) {
            const double s = std::clamp(d.moments.x1[st] / dr - 0.5, 0.0, static_cast<double>(n - 1));
            const int i = std::min(n - 2, static_cast<int>(std::floor(s)));
            const Vec3 m = n == 1 ? rod.moments[0] : (1.0 - (s - i)) * rod.moments[i] + (s - i) * rod.moments[i + 1];
            const double w = mesh.dx1() / na;
            md += w * (moment_triple(d.moments.first_x2[st], d.moments.first_x3[st]) - m).squaredNorm();
        }
        row.moment_distance = std::sqrt(md);
        row.moment_identity_residual = d.moment_identity_residual;
        row.moment_identity_scale = d.moment_identity_scale;
        row.gradient_norm = res.gradient_norm;
        row.gradient_scale = res.gradient_scale;
        row.iterations = res.iterations;
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    row.wall_seconds = seconds_since(t0);
    return row;
}

ConvergenceReport run_convergence(const ExperimentConfig& cfg, const RunOptions& opts)
{
    cfg.validate();
    ConvergenceReport report;
    report.config_hash = cfg.hash();
    report.config_text = cfg.canonical();

    std::error_code ec;
    std::filesystem::create_directories(cfg.output, ec);
    if (ec)
        throw IoError("cannot create output directory " + cfg.output.string() + ": " + ec.message());
    const auto rows_path = cfg.output / kRowsFile;

    std::vector<std::optional<ConvergenceRow>> done(cfg.h.size());
    if (opts.resume && std::filesystem::exists(rows_path)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(rows_path));
        } catch (const nlohmann::json::exception& e) {
            throw InputError("corrupt " + rows_path.string() + ": " + e.what());
        }
        if (j.value("config_hash", "") != report.config_hash)
            throw InputError(rows_path.string() + " holds rows of config " + j.value("config_hash", "?") +
                             ", not " + report.config_hash + "; use a fresh output directory");
        for (const auto& jr : j.at("rows")) {
            ConvergenceRow r = row_from_json(jr);
            if (r.config_hash != report.config_hash)
                throw InputError("persisted row with foreign config hash " + r.config_hash);
            for (std::size_t i = 0; i < cfg.h.size(); ++i)
                if (r.ok && r.h == cfg.h[i] && r.grid == cfg.grid_for(i))
                    done[i] = r;
        }
    }

    const CrossSectionMesh section = build_section(cfg.section);
    const RodReference rod = solve_rod_reference(cfg, section);
    report.rod = rod.summary;

    int computed = 0;
    for (std::size_t i = 0; i < cfg.h.size(); ++i) {
        if (!done[i]) {
            if (opts.max_new_rows >= 0 && computed >= opts.max_new_rows)
                break;
            done[i] = run_row(cfg, section, rod, i);
            ++computed;
            ordered_json j;
            j["config_hash"] = report.config_hash;
            j["rows"] = ordered_json::array();
            for (const auto& r : done)
                if (r)
                    j["rows"].push_back(row_json(*r, true));
            write_file_atomic(rows_path, j.dump(1) + "\n");
        }
    }
    for (const auto& r : done)
        if (r)
            report.rows.push_back(*r);

    report.slopes = fit_slopes(report.rows);
    try {
        report.verdict = compare_equilibria(report);
    } catch (const InsufficientData& e) {
        report.verdict.pass = false;
        report.verdict.status = report.rows.empty() ? "no data" : "insufficient data";
        report.verdict.reasons = {e.what()};
    }
    emit_report(report, cfg.output);
    return report;
}

// ---------------------------------------------------------------------------
// Verdict

std::optional<double> loglog_slope(const std::vector<double>& h, const std::vector<double>& value)
{
    std::vector<double> x, y;
    for (std::size_t i = 0; i < h.size() && i < value.size(); ++i)
        if (h[i] > 0.0 && value[i] > 0.0 && std::isfinite(value[i])) {
            x.push_back(std::log(h[i]));
            y.push_back(std::log(value[i]));
        }
    if (x.size() < 2)
        return std::nullopt;
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    if (!(std::abs(den) > 0.0))
        return std::nullopt;
    return (n * sxy - sx * sy) / den;
}

Slopes fit_slopes(const std::vector<ConvergenceRow>& rows)
{
    std::vector<double> h;
    std::vector<double> rig, rig0, sym, mid, d2, d3, mom;
    for (const auto& r : rows) {
        if (!r.ok)
            continue;
        h.push_back(r.h);
        rig.push_back(r.rigidity_norm);
        rig0.push_back(r.rigidity_norm_renormalized);
        sym.push_back(r.symmetry_over_h);
        mid.push_back(r.midline_w12);
        d2.push_back(r.director2_l2);
        d3.push_back(r.director3_l2);
        mom.push_back(r.moment_distance);
    }
    // Values at round-off level carry no rate information.
    auto clean = [](std::vector<double> v) {
        for (double& x : v)
            if (x <= 1e-12)
                x = 0.0;
        return v;
    };
    Slopes s;
    s.rigidity = loglog_slope(h, clean(rig));
    s.rigidity_renormalized = loglog_slope(h, clean(rig0));
    s.symmetry_over_h = loglog_slope(h, clean(sym));
    s.midline_w12 = loglog_slope(h, clean(mid));
    s.director2 = loglog_slope(h, clean(d2));
    s.director3 = loglog_slope(h, clean(d3));
    s.moment_distance = loglog_slope(h, clean(mom));
    return s;
}

namespace {

constexpr double kZero = 1e-12;

// Strictly decreasing along the sweep, or identically zero.
VerdictCheck decreasing(const std::string& name, const std::vector<double>& v, bool gating = true)
{
    VerdictCheck c{name, true, gating, ""};
    const bool all_zero = std::all_of(v.begin(), v.end(), [](double x) { return std::abs(x) <= kZero; });
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i)
        os << (i ? " > " : "") << fmt_e(v[i]);
    if (all_zero) {
        c.detail = "all zero";
        return c;
    }
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1]))
            c.pass = false;
    c.detail = os.str();
    return c;
}

} // namespace

Verdict compare_equilibria(const ConvergenceReport& report)
{
    std::vector<const ConvergenceRow*> ok;
    for (const auto& r : report.rows)
        if (r.ok)
            ok.push_back(&r);
    if (ok.size() < 2)
        throw InsufficientData("need at least 2 successful rows, have " + std::to_string(ok.size()));

    Verdict v;
    auto column = [&](double ConvergenceRow::*m) {
        std::vector<double> out;
        for (const auto* r : ok)
            out.push_back(r->*m);
        return out;
    };

    v.checks.push_back(decreasing("midline W12 distance decreasing", column(&ConvergenceRow::midline_w12)));
    {
        auto c2 = decreasing("director d2 distance decreasing", column(&ConvergenceRow::director2_l2));
        auto c3 = decreasing("director d3 distance decreasing", column(&ConvergenceRow::director3_l2));
        VerdictCheck c{"director distances decreasing", c2.pass && c3.pass, true,
                       "d2: " + c2.detail + "; d3: " + c3.detail};
        v.checks.push_back(c);
    }
    {
        const auto& rod = report.rod;
        VerdictCheck c{"rod stationarity", rod.stationary, true, ""};
        c.detail = "EL residual interior " + fmt_e(rod.el_interior_max) + " (gate " + fmt_e(rod.el_gate) +
                   "), boundary " + fmt_e(rod.el_boundary_max) + " (gate " + fmt_e(rod.el_boundary_gate) + ")" +
                   (rod.converged ? "" : ", solver did not converge");
        v.checks.push_back(c);
    }
    v.checks.push_back(decreasing("rigidity norm decreasing", column(&ConvergenceRow::rigidity_norm)));
    {
        VerdictCheck c{"rigidity slope in [0.85, 1.15]", true, ok.size() >= 3, ""};
        if (report.slopes.rigidity) {
            c.pass = *report.slopes.rigidity >= 0.85 && *report.slopes.rigidity <= 1.15;
            c.detail = "slope " + fmt_e(*report.slopes.rigidity);
        } else {
            c.detail = "undefined";
        }
        v.checks.push_back(c);
    }

    // Reported only.
    {
        VerdictCheck c{"energy/h^2 approaches rod energy within 10%", true, false, ""};
        const double target = report.rod.elastic;
        std::ostringstream os;
        if (std::abs(target) <= kZero) {
            for (const auto* r : ok)
                c.pass = c.pass && std::abs(r->energy_over_h2) <= kZero;
            os << "rod energy zero";
        } else {
            double prev = std::numeric_limits<double>::infinity();
            for (const auto* r : ok) {
                const double err = std::abs(r->energy_over_h2 - target) / std::abs(target);
                c.pass = c.pass && err < prev;
                prev = err;
                os << (r == ok.front() ? "" : ", ") << fmt_e(err);
            }
            c.pass = c.pass && prev <= 0.1;
            os << " relative to " << fmt_e(target);
        }
        c.detail = os.str();
        v.checks.push_back(c);
    }
    {
        VerdictCheck c{"symmetry defect / h bounded (max <= 2x first)", true, false, ""};
        const auto s = column(&ConvergenceRow::symmetry_over_h);
        const double mx = *std::max_element(s.begin(), s.end());
        c.pass = mx <= 2.0 * s.front() || mx <= kZero;
        c.detail = "max " + fmt_e(mx) + ", first " + fmt_e(s.front());
        v.checks.push_back(c);
    }
    {
        VerdictCheck c{"moment identity residual <= 5% of h|g~|", true, false, ""};
        double worst = 0.0;
        for (const auto* r : ok) {
            const double ratio = r->moment_identity_scale > 0.0 ? r->moment_identity_residual / r->moment_identity_scale
                                                                : (r->moment_identity_residual <= kZero ? 0.0 : 1.0);
            worst = std::max(worst, ratio);
        }
        c.pass = worst <= 0.05;
        c.detail = "worst ratio " + fmt_e(worst);
        v.checks.push_back(c);
    }

    v.pass = true;
    for (const auto& r : report.rows)
        if (!r.ok) {
            v.pass = false;
            v.reasons.push_back("row h=" + fmt_g(r.h) + " failed: " + r.error);
        }
    for (const auto& c : v.checks)
        if (c.gating && !c.pass) {
            v.pass = false;
            v.reasons.push_back(c.name == "rod stationarity" ? "rod stationarity unverified" : c.name + " failed");
        }
    v.status = v.pass ? "pass" : "fail";
    return v;
}

// ---------------------------------------------------------------------------
// Output

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp);
        out << contents;
        out.flush();
        if (!out)
            throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp + " to " + path.string() + ": " + ec.message());
}

std::string convergence_csv(const ConvergenceReport& report)
{
    std::ostringstream os;
    os << "h,grid,config_hash,status,energy_over_h2,rigidity_norm,rigidity_norm_renormalized,symmetry_over_h,"
          "linearization_defect,midline_w12,midline_l2,director2_l2,director3_l2,moment_distance,"
          "moment_identity_residual,moment_identity_scale,gradient_norm,gradient_scale,newton_iterations\n";
    for (const auto& r : report.rows) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        auto v = [&](double x) { return fmt_e(r.ok ? x : nan); };
        os << fmt_e(r.h) << ',' << r.grid << ',' << r.config_hash << ',' << (r.ok ? "ok" : "failed") << ','
           << v(r.energy_over_h2) << ',' << v(r.rigidity_norm) << ',' << v(r.rigidity_norm_renormalized) << ','
           << v(r.symmetry_over_h) << ',' << v(r.linearization_defect) << ',' << v(r.midline_w12) << ','
           << v(r.midline_l2) << ',' << v(r.director2_l2) << ',' << v(r.director3_l2) << ','
           << v(r.moment_distance) << ',' << v(r.moment_identity_residual) << ',' << v(r.moment_identity_scale)
           << ',' << v(r.gradient_norm) << ',' << v(r.gradient_scale) << ',' << (r.ok ? r.iterations : -1) << "\n";
    }
    return os.str();
}

std::string report_json(const ConvergenceReport& report, bool include_timing)
{
    ordered_json j;
    j["config_hash"] = report.config_hash;
    j["config"] = report.config_text;
    const auto& rod = report.rod;
    ordered_json jr;
    jr["grid"] = rod.grid;
    jr["elastic_energy"] = rod.elastic;
    jr["total_energy"] = rod.total;
    jr["gradient_norm"] = rod.gradient_norm;
    jr["iterations"] = rod.iterations;
    jr["converged"] = rod.converged;
    jr["el_residual_interior_max"] = rod.el_interior_max;
    jr["el_residual_boundary_max"] = rod.el_boundary_max;
    jr["el_gate"] = rod.el_gate;
    jr["el_boundary_gate"] = rod.el_boundary_gate;
    jr["load_scale"] = rod.load_scale;
    jr["moment_scale"] = rod.moment_scale;
    jr["stationary"] = rod.stationary;
    jr["error"] = rod.error;
    if (include_timing)
        jr["wall_seconds"] = rod.wall_seconds;
    j["rod"] = jr;
    j["rows"] = ordered_json::array();
    for (const auto& r : report.rows)
        j["rows"].push_back(row_json(r, include_timing));
    ordered_json js;
    js["rigidity_norm"] = optional_json(report.slopes.rigidity);
    js["rigidity_norm_renormalized"] = optional_json(report.slopes.rigidity_renormalized);
    js["symmetry_over_h"] = optional_json(report.slopes.symmetry_over_h);
    js["midline_w12"] = optional_json(report.slopes.midline_w12);
    js["director2_l2"] = optional_json(report.slopes.director2);
    js["director3_l2"] = optional_json(report.slopes.director3);
    js["moment_distance"] = optional_json(report.slopes.moment_distance);
    j["slopes"] = js;
    ordered_json jv;
    jv["status"] = report.verdict.status.empty() ? "no data" : report.verdict.status;
    jv["pass"] = report.verdict.pass;
    jv["reasons"] = report.verdict.reasons;
    jv["checks"] = ordered_json::array();
    for (const auto& c : report.verdict.checks)
        jv["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"gating", c.gating}, {"detail", c.detail}});
    j["verdict"] = jv;
    return j.dump(2) + "\n";
}

std::string summary_text(const ConvergenceReport& report)
{
    std::ostringstream os;
    const auto& v = report.verdict;
    os << "verdict: " << (v.status.empty() ? "no data" : v.status) << "\n";
    os << "config hash: " << report.config_hash << "\n";
    for (const auto& r : v.reasons)
        os << "  reason: " << r << "\n";
    if (!report.rows.empty() || report.rod.grid > 0) {
        os << "rod: grid " << report.rod.grid << ", elastic energy " << fmt_e(report.rod.elastic)
           << ", EL residual " << fmt_e(report.rod.el_interior_max) << " (gate " << fmt_e(report.rod.el_gate)
           << ")\n";
    }
    if (!report.rows.empty()) {
        os << "\n          h  grid  energy/h^2          rigidity            midline W12         d2 L2               "
              "d3 L2\n";
        for (const auto& r : report.rows) {
            char buf[256];
            if (r.ok)
                std::snprintf(buf, sizeof buf, "%11.4e %5d  %.12e %.12e %.12e %.12e %.12e\n", r.h, r.grid,
                              r.energy_over_h2, r.rigidity_norm, r.midline_w12, r.director2_l2, r.director3_l2);
            else
                std::snprintf(buf, sizeof buf, "%11.4e %5d  failed: %s\n", r.h, r.grid, r.error.c_str());
            os << buf;
        }
    }
    if (!v.checks.empty()) {
        os << "\nchecks:\n";
        for (const auto& c : v.checks)
            os << "  [" << (c.pass ? "pass" : "FAIL") << "]" << (c.gating ? " " : " (reported) ") << c.name << ": "
               << c.detail << "\n";
    }
    auto slope = [](const std::optional<double>& s) { return s ? fmt_e(*s) : std::string("undefined"); };
    if (!report.rows.empty()) {
        os << "\nlog-log slopes vs h:\n";
        os << "  rigidity norm            " << slope(report.slopes.rigidity) << "\n";
        os << "  rigidity (renormalised)  " << slope(report.slopes.rigidity_renormalized) << "\n";
        os << "  symmetry defect / h      " << slope(report.slopes.symmetry_over_h) << "\n";
        os << "  midline W12 distance     " << slope(report.slopes.midline_w12) << "\n";
        os << "  director d2 distance     " << slope(report.slopes.director2) << "\n";
        os << "  director d3 distance     " << slope(report.slopes.director3) << "\n";
        os << "  moment distance          " << slope(report.slopes.moment_distance) << "\n";
    }
    return os.str();
}

void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory " + dir.string());
    write_file_atomic(dir / "convergence.csv", convergence_csv(report));
    write_file_atomic(dir / "report.json", report_json(report));
    write_file_atomic(dir / "summary.txt", summary_text(report));
}

} // namespace rodlimit
