#include "rodlimit/cross_section.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/Sparse>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rodlimit/errors.hpp"

namespace rodlimit {

// ---------------------------------------------------------------------------
// Mesh geometry

namespace {

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c)
{
    return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

struct TriangleGeometry {
    double area;
    Vec2 centroid;
    std::array<Vec2, 3> grad; ///< gradients of the three hat functions
    Mat2 central_second;      ///< ∫_T (x - c)(x - c)ᵀ
};

TriangleGeometry triangle_geometry(const CrossSectionMesh& mesh, std::size_t t)
{
    const auto& tri = mesh.triangles[t];
    const Vec2& p0 = mesh.nodes[tri[0]];
    const Vec2& p1 = mesh.nodes[tri[1]];
    const Vec2& p2 = mesh.nodes[tri[2]];
    TriangleGeometry g;
    g.area = signed_area(p0, p1, p2);
    g.centroid = (p0 + p1 + p2) / 3.0;
    Mat2 J;
    J.col(0) = p1 - p0;
    J.col(1) = p2 - p0;
    const Mat2 Jinvt = J.inverse().transpose();
    g.grad[1] = Jinvt.col(0);
    g.grad[2] = Jinvt.col(1);
    g.grad[0] = -g.grad[1] - g.grad[2];
    g.central_second = Mat2::Zero();
    for (const Vec2* p : {&p0, &p1, &p2}) {
        const Vec2 d = *p - g.centroid;
        g.central_second += d * d.transpose();
    }
    g.central_second *= g.area / 12.0;
    return g;
}

// Affine part of the cell-problem strain: (x2 A e2 + x3 A e3) ⊗ e1.
Mat3 affine_strain(const Mat3& A, const Vec2& x)
{
    Mat3 M = Mat3::Zero();
    M.col(0) = x.x() * A.col(1) + x.y() * A.col(2);
    return M;
}

// (0 | ∂2α | ∂3α) on a triangle.
Mat3 warping_strain(const TriangleGeometry& g, const std::array<int, 3>& tri, const std::vector<Vec3>& alpha)
{
    Mat3 D = Mat3::Zero();
    for (int k = 0; k < 3; ++k) {
        D.col(1) += g.grad[k].x() * alpha[tri[k]];
        D.col(2) += g.grad[k].y() * alpha[tri[k]];
    }
    return D;
}

// Maps the 9 local dofs (3 * local node + component) to the flattened
// warping strain.
Eigen::Matrix<double, 9, 9> warping_operator(const TriangleGeometry& g)
{
    Eigen::Matrix<double, 9, 9> B = Eigen::Matrix<double, 9, 9>::Zero();
    for (int ln = 0; ln < 3; ++ln)
        for (int i = 0; i < 3; ++i) {
            B(3 * i + 1, 3 * ln + i) = g.grad[ln].x();
            B(3 * i + 2, 3 * ln + i) = g.grad[ln].y();
        }
    return B;
}

std::array<Vec2, 3> edge_midpoints(const CrossSectionMesh& mesh, const std::array<int, 3>& tri)
{
    const Vec2& p0 = mesh.nodes[tri[0]];
    const Vec2& p1 = mesh.nodes[tri[1]];
    const Vec2& p2 = mesh.nodes[tri[2]];
    return {0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)};
}

} // namespace

void CrossSectionMesh::update_moments()
{
    area = 0.0;
    first_moments.setZero();
    second_moments.setZero();
    product_moment = 0.0;
    const int n = static_cast<int>(nodes.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        auto& tri = triangles[t];
        for (int v : tri)
            if (v < 0 || v >= n)
                throw InputError("triangle " + std::to_string(t) + " references missing node " + std::to_string(v));
        double a = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        if (std::abs(a) < 1e-14)
            throw InputError("degenerate triangle " + std::to_string(t) + " (area < 1e-14)");
        if (a < 0.0) {
            std::swap(tri[1], tri[2]);
            a = -a;
        }
        const Vec2& p0 = nodes[tri[0]];
        const Vec2& p1 = nodes[tri[1]];
        const Vec2& p2 = nodes[tri[2]];
        const Vec2 s = p0 + p1 + p2;
        area += a;
        first_moments += a * s / 3.0;
        auto second = [&](int i, int j) {
            return a / 12.0 * (p0[i] * p0[j] + p1[i] * p1[j] + p2[i] * p2[j] + s[i] * s[j]);
        };
        second_moments += Vec2(second(0, 0), second(1, 1));
        product_moment += second(0, 1);
    }
}

double CrossSectionMesh::diameter() const
{
    if (nodes.empty())
        return 0.0;
    Vec2 lo = nodes.front(), hi = nodes.front();
    for (const auto& p : nodes) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

double CrossSectionMesh::triangle_area(std::size_t t) const
{
    const auto& tri = triangles[t];
    return signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
}

std::vector<std::array<int, 2>> CrossSectionMesh::boundary_edges() const
{
    std::map<std::pair<int, int>, std::pair<int, std::array<int, 2>>> count;
    for (const auto& tri : triangles)
        for (int k = 0; k < 3; ++k) {
            const int a = tri[k], b = tri[(k + 1) % 3];
            auto& entry = count[{std::min(a, b), std::max(a, b)}];
            ++entry.first;
            entry.second = {a, b};
        }
    std::vector<std::array<int, 2>> edges;
    for (const auto& [key, entry] : count)
        if (entry.first == 1)
            edges.push_back(entry.second);
    return edges;
}

bool CrossSectionMesh::connected() const
{
    std::vector<int> parent(nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& tri : triangles) {
        parent[find(tri[1])] = find(tri[0]);
        parent[find(tri[2])] = find(tri[0]);
    }
    int roots = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        roots += find(static_cast<int>(i)) == static_cast<int>(i);
    return roots == 1;
}

CrossSectionMesh load_mesh(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open mesh file " + path.string());

    int lineno = 0;
    std::string line;
    auto next_line = [&]() -> std::istringstream {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                return std::istringstream(line);
        }
        throw ParseError("unexpected end of file", lineno + 1);
    };
    auto header = [&](const std::string& keyword) {
        auto ss = next_line();
        std::string word;
        long count = -1;
        if (!(ss >> word >> count) || word != keyword || count < 0)
            throw ParseError("expected '" + keyword + " <count>'", lineno);
        return static_cast<std::size_t>(count);
    };

    CrossSectionMesh mesh;
    const std::size_t n = header("nodes");
    mesh.nodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto ss = next_line();
        double x2, x3;
        if (!(ss >> x2 >> x3) || !std::isfinite(x2) || !std::isfinite(x3))
            throw ParseError("expected node coordinates 'x2 x3'", lineno);
        mesh.nodes.emplace_back(x2, x3);
    }
    const std::size_t m = header("triangles");
    mesh.triangles.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto ss = next_line();
        long a, b, c;
        if (!(ss >> a >> b >> c))
            throw ParseError("expected triangle 'i j k'", lineno);
        for (long v : {a, b, c})
            if (v < 0 || v >= static_cast<long>(n))
                throw ParseError("node index " + std::to_string(v) + " out of range", lineno);
        mesh.triangles.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
    }
    mesh.update_moments();
    return mesh;
}

void save_mesh(const CrossSectionMesh& mesh, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write mesh file " + path.string());
    out.precision(17);
    out << "nodes " << mesh.nodes.size() << '\n';
    for (const auto& p : mesh.nodes)
        out << p.x() << ' ' << p.y() << '\n';
    out << "triangles " << mesh.triangles.size() << '\n';
    for (const auto& t : mesh.triangles)
        out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

CrossSectionMesh generate_disc(double radius, int refinement)
{
    if (!(radius > 0.0) || refinement < 1)
        throw InputError("generate_disc: need radius > 0 and refinement >= 1");
    const int n = 1 << refinement;
    const double sqrt3 = std::sqrt(3.0);
    const double pi = std::numbers::pi;

    auto inside = [n](int i, int j) { return std::abs(i) <= n && std::abs(j) <= n && std::abs(i + j) <= n; };
    std::map<std::pair<int, int>, int> index;
    CrossSectionMesh mesh;
    for (int j = -n; j <= n; ++j)
        for (int i = -n; i <= n; ++i) {
            if (!inside(i, j))
                continue;
            Vec2 p = (radius / n) * Vec2(i + 0.5 * j, 0.5 * sqrt3 * j);
            const double r = p.norm();
            if (r > 0.0) {
                // Radial map taking the hexagon boundary onto the circle.
                const double theta = std::atan2(p.y(), p.x());
                const double sector = pi / 6.0 + (pi / 3.0) * std::round((theta - pi / 6.0) / (pi / 3.0));
                const double hex_r = 0.5 * sqrt3 * radius / std::cos(theta - sector);
                p *= radius / hex_r;
            }
            index[{i, j}] = static_cast<int>(mesh.nodes.size());
            mesh.nodes.push_back(p);
        }
    for (int j = -n; j < n; ++j)
        for (int i = -n; i < n; ++i) {
            if (inside(i, j) && inside(i + 1, j) && inside(i, j + 1))
                mesh.triangles.push_back({index[{i, j}], index[{i + 1, j}], index[{i, j + 1}]});
            if (inside(i + 1, j) && inside(i + 1, j + 1) && inside(i, j + 1))
                mesh.triangles.push_back({index[{i + 1, j}], index[{i + 1, j + 1}], index[{i, j + 1}]});
        }
    mesh.update_moments();
    return mesh;
}

Vec2 SectionTransform::apply(const Vec2& x) const
{
    const double c = std::cos(angle), s = std::sin(angle);
    const Vec2 y = x + shift;
    return scale * Vec2(c * y.x() + s * y.y(), -s * y.x() + c * y.y());
}

Vec2 SectionTransform::invert(const Vec2& x) const
{
    const double c = std::cos(angle), s = std::sin(angle);
    const Vec2 y = x / scale;
    return Vec2(c * y.x() - s * y.y(), s * y.x() + c * y.y()) - shift;
}

std::pair<CrossSectionMesh, SectionTransform> normalize_section(const CrossSectionMesh& mesh)
{
    if (!(mesh.area > 0.0))
        throw InputError("normalize_section: zero-area mesh");
    SectionTransform tr;
    const Vec2 c = mesh.centroid();
    tr.shift = -c;
    const double ixx = mesh.second_moments.x() - mesh.area * c.x() * c.x();
    const double iyy = mesh.second_moments.y() - mesh.area * c.y() * c.y();
    const double ixy = mesh.product_moment - mesh.area * c.x() * c.y();
    if (std::abs(ixy) > 1e-14 * (ixx + iyy))
        tr.angle = 0.5 * std::atan2(2.0 * ixy, ixx - iyy);
    tr.scale = 1.0 / std::sqrt(mesh.area);

    CrossSectionMesh out;
    out.triangles = mesh.triangles;
    out.nodes.reserve(mesh.nodes.size());
    for (const auto& p : mesh.nodes)
        out.nodes.push_back(tr.apply(p));
    out.update_moments();
    return {std::move(out), tr};
}

double ConstraintResiduals::max_abs() const
{
    return std::max({mean.cwiseAbs().maxCoeff(), mean_d2.cwiseAbs().maxCoeff(), mean_d3.cwiseAbs().maxCoeff()});
}

double q1_eval(const Q1Form& form, const SkewCoords& a)
{
    const Vec3 v = a.vec();
    return v.dot(form.matrix * v);
}

// ---------------------------------------------------------------------------
// Cell problem

struct CellProblem::Impl {
    CrossSectionMesh mesh;
    ElasticityTensor L;
    std::vector<TriangleGeometry> geometry;
    Eigen::SparseMatrix<double> K;
    Eigen::SparseMatrix<double> C; ///< the 9 class-B constraint rows
    std::array<int, 4> pinned{};
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> factor;
    Eigen::MatrixXd kernel; ///< basis of ker K: constant fields and the in-plane rotation
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> kernel_constraints;

    Eigen::VectorXd load(const SkewCoords& a) const
    {
        const Mat3 A = a.matrix();
        Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * mesh.nodes.size());
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
            const auto& g = geometry[t];
            const Vec9 s = L.matrix() * flatten(affine_strain(A, g.centroid));
            const Vec9 fl = g.area * warping_operator(g).transpose() * s;
            for (int ln = 0; ln < 3; ++ln)
                f.segment<3>(3 * mesh.triangles[t][ln]) += fl.segment<3>(3 * ln);
        }
        return f;
    }

    static Eigen::VectorXd pack(const std::vector<Vec3>& alpha)
    {
        Eigen::VectorXd v(3 * alpha.size());
        for (std::size_t i = 0; i < alpha.size(); ++i)
            v.segment<3>(3 * i) = alpha[i];
        return v;
    }
};

// The constrained minimiser has zero multipliers: ker K (constants and the
// in-plane rotation) is transversal to the constraints and the remaining
// constraints hold for every minimiser. We therefore solve Kα = -f with the
// kernel pinned, then add the kernel component that satisfies Cα = 0.
CellProblem::CellProblem(const CrossSectionMesh& mesh, const ElasticityTensor& L) : impl_(std::make_unique<Impl>())
{
    auto& m = *impl_;
    m.mesh = mesh;
    m.L = L;
    if (mesh.triangles.empty())
        throw InputError("cell problem: empty mesh");
    if (!mesh.connected())
        throw SolverError("cell problem: constrained system is singular (mesh is not connected)");
    const double centroid_tol = 1e-8 * std::max(1.0, mesh.diameter()) * mesh.area;
    if (mesh.first_moments.cwiseAbs().maxCoeff() > centroid_tol)
        throw InputError("cell problem: section centroid must be at the origin (normalize the section first)");

    const int n = static_cast<int>(mesh.nodes.size());
    const int ndof = 3 * n;

    // Pin all components at node 0 and one in-plane component at the node
    // farthest from it.
    int far = 0;
    for (int i = 1; i < n; ++i)
        if ((mesh.nodes[i] - mesh.nodes[0]).norm() > (mesh.nodes[far] - mesh.nodes[0]).norm())
            far = i;
    const Vec2 d = mesh.nodes[far] - mesh.nodes[0];
    m.pinned = {0, 1, 2, 3 * far + (std::abs(d.x()) >= std::abs(d.y()) ? 2 : 1)};
    std::vector<char> is_pinned(ndof, 0);
    for (int p : m.pinned)
        is_pinned[p] = 1;

    m.geometry.reserve(mesh.triangles.size());
    std::vector<Eigen::Triplet<double>> kt, pt, ct;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto g = triangle_geometry(mesh, t);
        m.geometry.push_back(g);
        const auto B = warping_operator(g);
        const Eigen::Matrix<double, 9, 9> Ke = g.area * B.transpose() * L.matrix() * B;
        const auto& tri = mesh.triangles[t];
        for (int a = 0; a < 9; ++a)
            for (int b = 0; b < 9; ++b) {
                const int r = 3 * tri[a / 3] + a % 3, c = 3 * tri[b / 3] + b % 3;
                kt.emplace_back(r, c, Ke(a, b));
                if (!is_pinned[r] && !is_pinned[c])
                    pt.emplace_back(r, c, Ke(a, b));
            }
        // Constraint rows: ∫α (rows 0-2), ∫∂2α (3-5), ∫∂3α (6-8).
        for (int ln = 0; ln < 3; ++ln)
            for (int i = 0; i < 3; ++i) {
                const int dof = 3 * tri[ln] + i;
                const double vals[3] = {g.area / 3.0, g.area * g.grad[ln].x(), g.area * g.grad[ln].y()};
                for (int r = 0; r < 3; ++r)
                    ct.emplace_back(3 * r + i, dof, vals[r]);
            }
    }
    double diag_scale = 0.0;
    for (const auto& e : kt)
        if (e.row() == e.col())
            diag_scale = std::max(diag_scale, std::abs(e.value()));
    for (int p : m.pinned)
        pt.emplace_back(p, p, diag_scale > 0.0 ? diag_scale : 1.0);

    m.K.resize(ndof, ndof);
    m.K.setFromTriplets(kt.begin(), kt.end());
    m.C.resize(9, ndof);
    m.C.setFromTriplets(ct.begin(), ct.end());
    Eigen::SparseMatrix<double> P(ndof, ndof);
    P.setFromTriplets(pt.begin(), pt.end());
    m.factor.compute(P);
    if (m.factor.info() != Eigen::Success)
        throw SolverError("cell problem: constrained system is singular (factorisation failed)");

    m.kernel = Eigen::MatrixXd::Zero(ndof, 4);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c)
            m.kernel(3 * i + c, c) = 1.0;
        m.kernel(3 * i + 1, 3) = -mesh.nodes[i].y();
        m.kernel(3 * i + 2, 3) = mesh.nodes[i].x();
    }
    const Eigen::MatrixXd CZ = m.C * m.kernel;
    m.kernel_constraints.compute(CZ);
    if (m.kernel_constraints.rank() < 4)
        throw SolverError("cell problem: constraints do not fix the kernel");
}

CellProblem::~CellProblem() = default;
CellProblem::CellProblem(CellProblem&&) noexcept = default;
CellProblem& CellProblem::operator=(CellProblem&&) noexcept = default;

const CrossSectionMesh& CellProblem::mesh() const { return impl_->mesh; }
const ElasticityTensor& CellProblem::tensor() const { return impl_->L; }

WarpingField CellProblem::solve(const SkewCoords& a) const
{
    const auto& m = *impl_;
    const std::size_t n = m.mesh.nodes.size();
    Eigen::VectorXd rhs = -m.load(a);
    for (int p : m.pinned)
        rhs[p] = 0.0;
    Eigen::VectorXd sol = m.factor.solve(rhs);
    if (m.factor.info() != Eigen::Success || !sol.allFinite())
        throw SolverError("cell problem: solve failed");
    const Eigen::VectorXd c = m.kernel_constraints.solve(-(m.C * sol));
    sol += m.kernel * c;

    WarpingField field;
    field.source = a;
    field.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        field.values[i] = sol.segment<3>(3 * i);
    field.weak_residual = weak_residual(a, field.values);
    field.constraints = constraints(field.values);
    return field;
}

double CellProblem::bilinear(const SkewCoords& a, const std::vector<Vec3>& alpha, const SkewCoords& b,
                             const std::vector<Vec3>& beta) const
{
    const auto& m = *impl_;
    const Mat3 A = a.matrix(), Bm = b.matrix();
    double total = 0.0;
    for (std::size_t t = 0; t < m.mesh.triangles.size(); ++t) {
        const auto& g = m.geometry[t];
        const auto& tri = m.mesh.triangles[t];
        const Mat3 Da = warping_strain(g, tri, alpha);
        const Mat3 Db = warping_strain(g, tri, beta);
        double s = 0.0;
        // Edge-midpoint rule, exact for the quadratic integrand.
        for (const Vec2& x : edge_midpoints(m.mesh, tri))
            s += m.L.contract(affine_strain(A, x) + Da, affine_strain(Bm, x) + Db);
        total += g.area / 3.0 * s;
    }
    return total;
}

double CellProblem::energy(const SkewCoords& a, const std::vector<Vec3>& alpha) const
{
    return bilinear(a, alpha, a, alpha);
}

double CellProblem::weak_residual(const SkewCoords& a, const std::vector<Vec3>& alpha) const
{
    const auto& m = *impl_;
    const Eigen::VectorXd f = m.load(a);
    const Eigen::VectorXd r = m.K * Impl::pack(alpha) + f;
    const double scale = f.cwiseAbs().maxCoeff();
    const double res = r.cwiseAbs().maxCoeff();
    return scale > 0.0 ? res / scale : res;
}

ConstraintResiduals CellProblem::constraints(const std::vector<Vec3>& alpha) const
{
    const auto& m = *impl_;
    ConstraintResiduals c;
    for (std::size_t t = 0; t < m.mesh.triangles.size(); ++t) {
        const auto& g = m.geometry[t];
        const auto& tri = m.mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            c.mean += g.area / 3.0 * alpha[tri[k]];
            c.mean_d2 += g.area * g.grad[k].x() * alpha[tri[k]];
            c.mean_d3 += g.area * g.grad[k].y() * alpha[tri[k]];
        }
    }
    return c;
}

WarpingField solve_cell_problem(const CrossSectionMesh& mesh, const ElasticityTensor& L, const SkewCoords& a)
{
    return CellProblem(mesh, L).solve(a);
}

namespace {
const std::array<SkewCoords, 3> kSkewBasis = {SkewCoords{1, 0, 0}, SkewCoords{0, 1, 0}, SkewCoords{0, 0, 1}};
}

Q1Form assemble_q1(const CellProblem& cell)
{
    std::array<WarpingField, 3> fields;
    for (int k = 0; k < 3; ++k)
        fields[k] = cell.solve(kSkewBasis[k]);
    Q1Form form;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j)
            form.matrix(i, j) = form.matrix(j, i) =
                cell.bilinear(kSkewBasis[i], fields[i].values, kSkewBasis[j], fields[j].values);
    return form;
}

Q1Form assemble_q1(const CrossSectionMesh& mesh, const ElasticityTensor& L)
{
    return assemble_q1(CellProblem(mesh, L));
}

SectionStress stress_field(const CrossSectionMesh& mesh, const ElasticityTensor& L, const SkewCoords& a,
                           const WarpingField& alpha)
{
    if (alpha.values.size() != mesh.nodes.size())
        throw InputError("stress_field: warping field does not match the mesh");
    const Mat3 A = a.matrix();
    SectionStress out;
    out.centroid.reserve(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto g = triangle_geometry(mesh, t);
        out.centroid.push_back(L.apply(affine_strain(A, g.centroid) + warping_strain(g, mesh.triangles[t], alpha.values)));
    }
    out.d_x2 = L.apply(affine_strain(A, Vec2(1.0, 0.0)));
    out.d_x3 = L.apply(affine_strain(A, Vec2(0.0, 1.0)));
    return out;
}

BendingMoments bending_moments(const SectionStress& stress, const CrossSectionMesh& mesh)
{
    if (stress.centroid.size() != mesh.triangles.size())
        throw InputError("bending_moments: stress field does not match the mesh");
    BendingMoments m;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto g = triangle_geometry(mesh, t);
        const Mat3& E = stress.centroid[t];
        m.mean += g.area * E;
        m.first_x2 += g.area * g.centroid.x() * E + g.central_second(0, 0) * stress.d_x2 + g.central_second(0, 1) * stress.d_x3;
        m.first_x3 += g.area * g.centroid.y() * E + g.central_second(1, 0) * stress.d_x2 + g.central_second(1, 1) * stress.d_x3;
    }
    return m;
}

MomentMap moment_map(const CellProblem& cell)
{
    MomentMap map;
    for (int k = 0; k < 3; ++k) {
        const auto field = cell.solve(kSkewBasis[k]);
        const auto m = bending_moments(stress_field(cell.mesh(), cell.tensor(), kSkewBasis[k], field), cell.mesh());
        map.matrix.col(k) = Vec3(m.first_x2(0, 0), m.first_x3(0, 0), m.first_x3(1, 0) - m.first_x2(2, 0));
    }
    return map;
}

MomentMap moment_map(const CrossSectionMesh& mesh, const ElasticityTensor& L)
{
    return moment_map(CellProblem(mesh, L));
}

} // namespace rodlimit
