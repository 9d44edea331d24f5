#include "usm/geometry.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace usm {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

Mat3 rodrigues(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 k = skew(phi);
    if (theta < kSmallAngle) return Mat3::Identity() + k + 0.5 * k * k;
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * k + b * k * k;
}

Mat3 so3_right_jacobian(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 k = skew(phi);
    if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
    const double t2 = theta * theta;
    const double a = (1.0 - std::cos(theta)) / t2;
    const double b = (theta - std::sin(theta)) / (t2 * theta);
    return Mat3::Identity() - a * k + b * k * k;
}

Mat4 Pose9::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rodrigues(phi) * s.asDiagonal();
    m.topRightCorner<3, 1>() = t;
    return m;
}

Mat3 Pose9::rotation() const { return rodrigues(phi); }

Mat4 Pose9::inverse_matrix() const {
    const Mat3 r = rodrigues(phi);
    Mat4 m = Mat4::Identity();
    const Vec3 inv_s = s.cwiseInverse();
    m.topLeftCorner<3, 3>() = inv_s.asDiagonal() * r.transpose();
    m.topRightCorner<3, 1>() = -(inv_s.asDiagonal() * (r.transpose() * t));
    return m;
}

Vec9 Pose9::to_vector() const {
    Vec9 v;
    v << t, phi, s;
    return v;
}

Pose9 Pose9::from_vector(const Vec9& v) {
    Pose9 p;
    p.t = v.segment<3>(0);
    p.phi = v.segment<3>(3);
    p.s = v.segment<3>(6);
    if ((p.s.array() <= 0.0).any()) throw InvalidInput("Pose9: scales must be positive");
    return p;
}

Vec9 Pose9::to_xi() const {
    Vec9 v;
    v << t, phi, s.array().log().matrix();
    return v;
}

Pose9 Pose9::from_xi(const Vec9& xi) {
    Pose9 p;
    p.t = xi.segment<3>(0);
    p.phi = xi.segment<3>(3);
    p.s = xi.segment<3>(6).array().exp().matrix();
    return p;
}

Pose9 Pose9::from_matrix(const Mat4& m) {
    const Mat3 rs = m.topLeftCorner<3, 3>();
    Pose9 p;
    p.t = m.topRightCorner<3, 1>();
    for (int i = 0; i < 3; ++i) {
        p.s[i] = rs.col(i).norm();
        if (p.s[i] <= 0.0) throw InvalidInput("Pose9::from_matrix: degenerate scale column");
    }
    Mat3 r = rs * p.s.cwiseInverse().asDiagonal();
    if (r.determinant() < 0.0) throw InvalidInput("Pose9::from_matrix: reflection in rotation block");

    // Axis-angle log with the theta ~ pi branch handled via the symmetric part.
    const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
    const double theta = std::acos(c);
    Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    if (theta < 1e-7) {
        p.phi = 0.5 * w;
    } else if (theta < M_PI - 1e-5) {
        p.phi = (theta / (2.0 * std::sin(theta))) * w;
    } else {
        const Mat3 b = 0.5 * (r + Mat3::Identity());
        Vec3 axis(std::sqrt(std::max(0.0, b(0, 0))), std::sqrt(std::max(0.0, b(1, 1))),
                  std::sqrt(std::max(0.0, b(2, 2))));
        int k = 0;
        b.diagonal().maxCoeff(&k);
        for (int i = 0; i < 3; ++i)
            if (i != k && b(k, i) < 0.0) axis[i] = -axis[i];
        if (axis.norm() > 0.0) axis.normalize();
        p.phi = theta * axis;
    }
    return p;
}

PoseGaussian PoseGaussian::from_pose(const Pose9& p, const Vec9& cov) {
    PoseGaussian g;
    g.xi = p.to_xi();
    g.cov_diag = cov;
    g.validate();
    return g;
}

void PoseGaussian::validate() const {
    if ((cov_diag.array() < 0.0).any())
        throw InvalidInput("PoseGaussian: covariance diagonal must be nonnegative");
}

Mat4 exp_pose(const Vec9& xi) { return Pose9::from_xi(xi).matrix(); }

Vec3 transform_point(const Pose9& pose, const Vec3& p_world) {
    return rodrigues(pose.phi) * (pose.s.cwiseProduct(p_world)) + pose.t;
}

Eigen::Matrix<double, 3, 9> point_pose_jacobian(const Pose9& pose, const Vec3& p_world) {
    Eigen::Matrix<double, 3, 9> j;
    const Mat3 r = rodrigues(pose.phi);
    const Vec3 v = pose.s.cwiseProduct(p_world);  // pre-rotation point
    j.block<3, 3>(0, 0) = Mat3::Identity();
    j.block<3, 3>(0, 3) = -r * skew(v) * so3_right_jacobian(pose.phi);
    // d/d(log s_i) = R * e_i * s_i * p_i
    j.block<3, 3>(0, 6) = r * v.asDiagonal();
    return j;
}

double rotation_angle(const Mat3& r_a, const Mat3& r_b) {
    const Mat3 rel = r_a * r_b.transpose();
    const double c = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
    return std::acos(c);
}

void write_pose_text(std::ostream& os, const Mat4& m) {
    os.precision(17);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) os << m(r, c) << (r == 2 && c == 3 ? "\n" : " ");
}

Mat4 read_pose_text(std::istream& is, const std::string& what) {
    Mat4 m = Mat4::Identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            if (!(is >> m(r, c))) throw FormatError("pose text " + what + ": expected 12 numbers");
    return m;
}

void validate_rigid(const Mat4& m, const std::string& what) {
    const Mat3 r = m.topLeftCorner<3, 3>();
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw FormatError(what + ": rotation block is not orthonormal");
    if (m.row(3).head<3>().cwiseAbs().maxCoeff() > 1e-12 || std::abs(m(3, 3) - 1.0) > 1e-12)
        throw FormatError(what + ": bottom row must be (0,0,0,1)");
}

}  // namespace usm
