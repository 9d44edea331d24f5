#pragma once

#include "usm/common.hpp"

#include <iosfwd>

namespace usm {

/// 9-DoF pose: translation, axis-angle rotation, per-axis scale. Acts on world
/// points as p_obj = R(phi) * diag(s) * p_world + t, i.e. the matrix maps the
/// world frame into the object canonical frame. Scales are strictly positive;
/// objects larger than canonical size therefore carry s < 1.
struct Pose9 {
    Vec3 t = Vec3::Zero();
    Vec3 phi = Vec3::Zero();
    Vec3 s = Vec3::Ones();

    Mat4 matrix() const;
    Mat3 rotation() const;

    /// Inverse as a plain 4x4 (object -> world).
    Mat4 inverse_matrix() const;

    /// Raw 9-vector (t, phi, s); round-trips exactly.
    Vec9 to_vector() const;
    static Pose9 from_vector(const Vec9& v);

    /// Internal optimization coordinates (t, phi, log s).
    Vec9 to_xi() const;
    static Pose9 from_xi(const Vec9& xi);

    /// Recovers (t, phi, s) from a rigid-times-scale upper 3x4 block.
    static Pose9 from_matrix(const Mat4& m);
};

/// Diagonal Gaussian over the internal 9-vector xi = (t, phi, log s).
struct PoseGaussian {
    Vec9 xi = Vec9::Zero();
    Vec9 cov_diag = Vec9::Zero();

    Pose9 mean_pose() const { return Pose9::from_xi(xi); }
    static PoseGaussian from_pose(const Pose9& p, const Vec9& cov);
    void validate() const;
};

/// Rodrigues rotation from an axis-angle vector (Taylor fallback near 0).
Mat3 rodrigues(const Vec3& phi);

/// Right Jacobian of SO(3): R(phi + d) ~= R(phi) * exp((Jr(phi) d)^).
Mat3 so3_right_jacobian(const Vec3& phi);

Mat3 skew(const Vec3& v);

/// 4x4 pose matrix from the internal coordinates (t, phi, log s).
Mat4 exp_pose(const Vec9& xi);

Vec3 transform_point(const Pose9& pose, const Vec3& p_world);

/// d(transformed point)/d(xi) at the given pose, xi = (t, phi, log s).
/// Columns: translation (identity), rotation (axis-angle), log-scale.
Eigen::Matrix<double, 3, 9> point_pose_jacobian(const Pose9& pose, const Vec3& p_world);

/// Geodesic angle between two rotations, radians.
double rotation_angle(const Mat3& r_a, const Mat3& r_b);

/// Pose text format: 12 whitespace-separated decimals, row-major upper 3x4.
void write_pose_text(std::ostream& os, const Mat4& m);
Mat4 read_pose_text(std::istream& is, const std::string& what);

/// Rigid 4x4 with orthonormality check (tolerance 1e-6) for camera poses.
void validate_rigid(const Mat4& m, const std::string& what);

}  // namespace usm
