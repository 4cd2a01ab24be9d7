#include "rodlimit/spd_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>
#ifdef RODLIMIT_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

namespace rodlimit {

struct SpdSolver::Impl {
    using Sparse = Eigen::SparseMatrix<double>;
    const Sparse* K = nullptr;
    double norm = 0.0; // max absolute column sum
    Eigen::SimplicialLLT<Sparse> simplicial;
    bool simplicial_analysed = false;
#ifdef RODLIMIT_HAVE_CHOLMOD
    Eigen::CholmodSupernodalLLT<Sparse> supernodal;
    bool supernodal_analysed = false;
    bool use_cholmod = true;
#else
    bool use_cholmod = false;
#endif

    bool factorize_simplicial()
    {
        if (!simplicial_analysed) {
            simplicial.analyzePattern(*K);
            simplicial_analysed = true;
        }
        simplicial.factorize(*K);
        return simplicial.info() == Eigen::Success;
    }
};

SpdSolver::SpdSolver() : impl_(std::make_unique<Impl>())
{
#ifdef RODLIMIT_HAVE_CHOLMOD
    impl_->supernodal.cholmod().print = 0;
#endif
}

SpdSolver::~SpdSolver() = default;

bool SpdSolver::factorize(const Eigen::SparseMatrix<double>& K)
{
    impl_->K = &K;
    impl_->norm = 0.0;
    for (int j = 0; j < K.outerSize(); ++j) {
        double c = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(K, j); it; ++it)
            c += std::abs(it.value());
        impl_->norm = std::max(impl_->norm, c);
    }
#ifdef RODLIMIT_HAVE_CHOLMOD
    if (impl_->use_cholmod) {
        if (!impl_->supernodal_analysed) {
            impl_->supernodal.analyzePattern(K);
            impl_->supernodal_analysed = true;
        }
        impl_->supernodal.factorize(K);
        if (impl_->supernodal.info() == Eigen::Success)
            return true;
        // A genuine indefinite matrix fails in both; a BLAS fault only here.
        if (!impl_->factorize_simplicial())
            return false;
        impl_->use_cholmod = false;
        return true;
    }
#endif
    return impl_->factorize_simplicial();
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b)
{
#ifdef RODLIMIT_HAVE_CHOLMOD
    if (impl_->use_cholmod) {
        Eigen::VectorXd x = impl_->supernodal.solve(b);
        const double r = (*impl_->K * x - b).norm();
        if (x.allFinite() && r <= 1e-10 * (impl_->norm * x.norm() + b.norm()))
            return x;
        impl_->use_cholmod = false;
        if (!impl_->factorize_simplicial())
            return Eigen::VectorXd::Constant(b.size(), std::numeric_limits<double>::quiet_NaN());
    }
#endif
    return impl_->simplicial.solve(b);
}

const char* SpdSolver::backend() const
{
    return impl_->use_cholmod ? "cholmod-supernodal" : "eigen-simplicial";
}

} // namespace rodlimit
