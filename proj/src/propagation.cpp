#include "usm/propagation.hpp"

namespace usm {

void SdfLinearization::accumulate(double dL_dmean, double dL_dvar, const VecX& z_cov,
                                  const Vec9& xi_cov, const ParamLayout& layout,
                                  VecX& grad) const {
    const int L = layout.latent_dim;
    grad.segment(layout.mu_z(), L) += dL_dmean * d_mean_d_z;
    grad.segment(layout.pose_xi(), 9) += dL_dmean * d_mean_d_xi;
    if (dL_dvar != 0.0) {
        // d var / d log Sigma_ii = J_i^2 * Sigma_ii
        grad.segment(layout.log_var_z(), L) +=
            dL_dvar * d_mean_d_z.array().square().matrix().cwiseProduct(z_cov);
        grad.segment(layout.log_var_xi(), 9) +=
            dL_dvar * d_mean_d_xi.array().square().matrix().cwiseProduct(xi_cov);
    }
}

SdfLinearization linearize_sdf(const Decoder& decoder, const VecX& z_mean, const Pose9& pose_mean,
                               const Vec3& p_world) {
    SdfLinearization lin;
    const Vec3 p_obj = transform_point(pose_mean, p_world);
    Vec3 d_p;
    lin.mean = decoder.decode_grad(z_mean, p_obj, lin.d_mean_d_z, d_p);
    lin.d_mean_d_xi = (d_p.transpose() * point_pose_jacobian(pose_mean, p_world)).transpose();
    return lin;
}

SdfGaussian sdf_distribution(const Decoder& decoder, const LatentGaussian& z,
                             const PoseGaussian& pose, const Vec3& p_world) {
    z.validate();
    pose.validate();
    const SdfLinearization lin = linearize_sdf(decoder, z.mean, pose.mean_pose(), p_world);
    return SdfGaussian{lin.mean, lin.variance(z.cov_diag, pose.cov_diag)};
}

}  // namespace usm
