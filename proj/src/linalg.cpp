#include "rodlimit/linalg.hpp"

#include <cmath>
#include <numbers>

#include "rodlimit/errors.hpp"

namespace rodlimit {

Mat3 so3_exp(const Vec3& w)
{
    const double theta2 = w.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 W = hat(w);
    double a, b;
    if (theta < 1e-4) {
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat3::Identity() + a * W + b * W * W;
}

Vec3 so3_log(const Mat3& R)
{
    const Vec3 v = vee(R); // sin(theta) * axis
    const double s = v.norm();
    const double c = 0.5 * (R.trace() - 1.0);
    const double theta = std::atan2(s, c);

    if (theta < 1e-4) {
        const double t2 = theta * theta;
        return v * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0);
    }
    if (theta < std::numbers::pi - 1e-3)
        return v * (theta / s);

    // Near pi the skew part carries no accuracy; read the axis off the
    // symmetric part, R + Rᵀ - 2c Id = 2(1 - c) n nᵀ.
    const Mat3 B = (0.5 * (R + R.transpose()) - c * Mat3::Identity()) / (1.0 - c);
    int k = 0;
    B.diagonal().maxCoeff(&k);
    Vec3 n = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
    n.normalize();
    if (n.dot(v) < 0.0)
        n = -n;
    return theta * n;
}

Mat3 so3_right_jacobian_inv(const Vec3& w)
{
    const double theta2 = w.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 W = hat(w);
    double coef;
    if (theta < 1e-3)
        coef = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
    else
        coef = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    return Mat3::Identity() + 0.5 * W + coef * W * W;
}

Mat3 nearest_rotation(const Mat3& F)
{
    if (!(F.determinant() > 0.0))
        throw DomainError("nearest_rotation: matrix has non-positive determinant");
    Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

Mat3 geodesic_interpolate(const Mat3& R0, const Mat3& R1, double t)
{
    return R0 * so3_exp(t * so3_log(R0.transpose() * R1));
}

double orthogonality_defect(const Mat3& R)
{
    return (R.transpose() * R - Mat3::Identity()).norm();
}

} // namespace rodlimit
