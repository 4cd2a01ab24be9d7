#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rodlimit/beam3d.hpp"
#include "rodlimit/cross_section.hpp"
#include "rodlimit/load_spec.hpp"
#include "rodlimit/material.hpp"

namespace rodlimit {

/// "disc:K" (unit-area disc, refinement K) or a mesh file path. The section is
/// always normalised before use.
CrossSectionMesh build_section(const std::string& spec);

enum class BeamInit { Lift, Identity };

struct ExperimentConfig {
    std::string section = "disc:4";
    EnergyDensity material = EnergyDensity::isotropic(0.0, 1.0);
    std::string load = "const:0,0,-0.1";
    double length = 1.0;
    std::vector<double> h = {0.2, 0.1, 0.05};
    std::vector<int> grid; ///< axial intervals per h; empty means ceil(L / h)
    int rod_grid = 200;
    double rod_tol = 1e-10;
    double beam_tol = 1e-8;
    int beam_max_iters = 50;
    AxialQuadrature quadrature = AxialQuadrature::Midpoint;
    BeamInit init = BeamInit::Lift;
    std::filesystem::path output = "rodlimit_out";

    /// Reads the YAML layout written by to_yaml(); relative paths are taken
    /// relative to the file. Throws InputError / ParseError.
    static ExperimentConfig from_yaml_file(const std::filesystem::path& path);
    static ExperimentConfig from_yaml_text(const std::string& text,
                                           const std::filesystem::path& base = {});
    std::string to_yaml() const;

    int grid_for(std::size_t i) const;
    /// Throws InputError on a non-decreasing or non-positive h list, grids
    /// with Δx1 > h, and out-of-range solver settings.
    void validate() const;
    /// Canonical text of everything that affects the results (not the output
    /// directory) and its 64-bit FNV-1a hash in hex.
    std::string canonical() const;
    std::string hash() const;
};

std::uint64_t fnv1a64(const std::string& bytes);

/// One h of the sweep. Failed rows keep h, grid, hash and the error text.
struct ConvergenceRow {
    double h = 0.0;
    int grid = 0;
    std::string config_hash;
    bool ok = false;
    std::string error;

    double energy_over_h2 = 0.0;
    double rigidity_norm = 0.0;
    double rigidity_norm_renormalized = 0.0;
    double symmetry_over_h = 0.0;
    double linearization_defect = 0.0;
    double midline_w12 = 0.0;
    double midline_l2 = 0.0;
    double director2_l2 = 0.0;
    double director3_l2 = 0.0;
    double moment_distance = 0.0;
    double moment_identity_residual = 0.0;
    double moment_identity_scale = 0.0;
    double gradient_norm = 0.0;
    double gradient_scale = 0.0;
    int iterations = 0;
    double wall_seconds = 0.0; ///< report.json only; never in the CSV
};

struct RodSummary {
    int grid = 0;
    double elastic = 0.0;
    double total = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    double el_interior_max = 0.0;
    double el_boundary_max = 0.0;
    double el_gate = 0.0;          ///< interior threshold: 1e-3 sup|g̃| + 1e-12
    double el_boundary_gate = 0.0; ///< boundary threshold: 1e-3 moment scale + 1e-12
    double load_scale = 0.0;       ///< sup |g̃|
    double moment_scale = 0.0;
    bool converged = false;
    bool stationary = false;
    std::string error;
    double wall_seconds = 0.0;
};

struct Slopes {
    std::optional<double> rigidity;
    std::optional<double> rigidity_renormalized;
    std::optional<double> symmetry_over_h;
    std::optional<double> midline_w12;
    std::optional<double> director2;
    std::optional<double> director3;
    std::optional<double> moment_distance;
};

struct VerdictCheck {
    std::string name;
    bool pass = false;
    bool gating = true; ///< part of the overall verdict, else reported only
    std::string detail;
};

struct Verdict {
    bool pass = false;
    std::string status; ///< "pass", "fail", "no data", "insufficient data"
    std::vector<std::string> reasons;
    std::vector<VerdictCheck> checks;
};

struct ConvergenceReport {
    std::string config_hash;
    std::string config_text; ///< canonical form
    std::vector<ConvergenceRow> rows;
    RodSummary rod;
    Slopes slopes;
    Verdict verdict;
};

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything the rod side of the comparison needs.
struct RodReference {
    RodSolveResult solution;
    RodFrame frame;
    std::vector<Vec3> moments; ///< (Ẽ11, Ê11, Ê21 - Ẽ31) per interval midpoint
    RodSummary summary;
};

RodReference solve_rod_reference(const ExperimentConfig& cfg, const CrossSectionMesh& section);

/// One row of the sweep, compared against the rod reference.
ConvergenceRow run_row(const ExperimentConfig& cfg, const CrossSectionMesh& section, const RodReference& rod,
                       std::size_t index);

struct RunOptions {
    bool resume = true;
    /// Stop after this many rows have been computed in this call (for tests
    /// of resumability); negative means no limit.
    int max_new_rows = -1;
};

/// Solves the rod once and every h row (reusing rows persisted in
/// cfg.output), persisting after each row, then computes slopes and the
/// verdict and emits the report. Throws InputError when the persisted rows
/// carry a different config hash.
ConvergenceReport run_convergence(const ExperimentConfig& cfg, const RunOptions& opts = {});

Slopes fit_slopes(const std::vector<ConvergenceRow>& rows);
/// Least-squares slope of log(value) against log(h); empty when fewer than
/// two positive values remain.
std::optional<double> loglog_slope(const std::vector<double>& h, const std::vector<double>& value);

/// Throws InsufficientData with fewer than two successful rows.
Verdict compare_equilibria(const ConvergenceReport& report);

/// Writes convergence.csv, report.json and summary.txt atomically.
/// Throws IoError when the directory cannot be written.
void emit_report(const ConvergenceReport& report, const std::filesystem::path& dir);

std::string convergence_csv(const ConvergenceReport& report);
std::string report_json(const ConvergenceReport& report, bool include_timing = true);
std::string summary_text(const ConvergenceReport& report);

/// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Distances between piecewise-linear profiles on (0, L) given at uniform
/// nodes, integrated exactly on the common refinement of the two grids.
double l2_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double length);
double w12_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double length);

} // namespace rodlimit
