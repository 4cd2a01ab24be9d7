#pragma once

#include <Eigen/Dense>

namespace rodlimit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

// Matrices are flattened row-major: entry F(i, j) lives at index 3 * i + j.
inline Vec9 flatten(const Mat3& F)
{
    Vec9 v;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            v[3 * i + j] = F(i, j);
    return v;
}

inline Mat3 unflatten(const Vec9& v)
{
    Mat3 F;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            F(i, j) = v[3 * i + j];
    return F;
}

inline Mat3 sym(const Mat3& F) { return 0.5 * (F + F.transpose()); }
inline Mat3 skw(const Mat3& F) { return 0.5 * (F - F.transpose()); }

/// hat(w) x = w × x.
inline Mat3 hat(const Vec3& w)
{
    Mat3 W;
    W << 0.0, -w[2], w[1],
         w[2], 0.0, -w[0],
        -w[1], w[0], 0.0;
    return W;
}

/// Inverse of hat() applied to the skew part of W.
inline Vec3 vee(const Mat3& W)
{
    return Vec3(0.5 * (W(2, 1) - W(1, 2)), 0.5 * (W(0, 2) - W(2, 0)), 0.5 * (W(1, 0) - W(0, 1)));
}

Mat3 so3_exp(const Vec3& w);

/// Principal logarithm; the returned rotation vector has norm in [0, π].
Vec3 so3_log(const Mat3& R);

/// Inverse right Jacobian: log(exp(w) exp(d)) = w + Jr⁻¹(w) d + O(|d|²).
Mat3 so3_right_jacobian_inv(const Vec3& w);

/// Nearest rotation in the Frobenius norm (rotation factor of the polar
/// decomposition). Throws DomainError when det F <= 0.
Mat3 nearest_rotation(const Mat3& F);

Mat3 geodesic_interpolate(const Mat3& R0, const Mat3& R1, double t);

/// |RᵀR - Id| (Frobenius).
double orthogonality_defect(const Mat3& R);

/// A skew-symmetric matrix in coordinates (A12, A13, A23).
struct SkewCoords {
    double a12 = 0.0;
    double a13 = 0.0;
    double a23 = 0.0;

    Vec3 vec() const { return {a12, a13, a23}; }
    static SkewCoords from(const Vec3& v) { return {v[0], v[1], v[2]}; }

    Mat3 matrix() const
    {
        Mat3 A;
        A << 0.0, a12, a13,
            -a12, 0.0, a23,
            -a13, -a23, 0.0;
        return A;
    }
    static SkewCoords of(const Mat3& A)
    {
        return {0.5 * (A(0, 1) - A(1, 0)), 0.5 * (A(0, 2) - A(2, 0)), 0.5 * (A(1, 2) - A(2, 1))};
    }

    // hat(w) has (1,2) entry -w3, (1,3) entry w2, (2,3) entry -w1.
    Vec3 rotation_vector() const { return {-a23, a13, -a12}; }
    static SkewCoords from_rotation_vector(const Vec3& w) { return {-w[2], w[1], -w[0]}; }

    /// d(coords)/d(rotation vector).
    static Mat3 from_rotation_vector_jacobian()
    {
        Mat3 P;
        P << 0, 0, -1,
             0, 1, 0,
            -1, 0, 0;
        return P;
    }
};

} // namespace rodlimit
