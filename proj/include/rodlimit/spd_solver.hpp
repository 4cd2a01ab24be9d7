#pragma once

#include <memory>

#include <Eigen/Sparse>

namespace rodlimit {

// Sparse symmetric positive definite solver for a fixed sparsity pattern.
// Uses CHOLMOD's supernodal factorisation when it was found at build time and
// falls back to Eigen's simplicial Cholesky if CHOLMOD fails or returns an
// inaccurate solve (both have been seen with mis-detected BLAS kernels).
class SpdSolver {
public:
    SpdSolver();
    ~SpdSolver();
    SpdSolver(const SpdSolver&) = delete;
    SpdSolver& operator=(const SpdSolver&) = delete;

    // False when the matrix is not numerically positive definite.
    bool factorize(const Eigen::SparseMatrix<double>& K);
    Eigen::VectorXd solve(const Eigen::VectorXd& b);
    const char* backend() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace rodlimit
