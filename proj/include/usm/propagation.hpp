#pragma once

#include "usm/decoder.hpp"
#include "usm/geometry.hpp"
#include "usm/params.hpp"

namespace usm {

/// Per-point SDF distribution.
struct SdfGaussian {
    double mean = 0.0;
    double var = 0.0;
};

/// First-order propagation record for one query point: the SDF mean and the
/// Jacobians with respect to the latent code and the pose coordinates,
/// evaluated at the distribution means. Losses treat the Jacobians as
/// constants when differentiating (no second derivatives of the decoder).
struct SdfLinearization {
    double mean = 0.0;
    VecX d_mean_d_z;   // latent_dim
    Vec9 d_mean_d_xi;  // (t, phi, log s)

    double variance(const VecX& z_cov, const Vec9& xi_cov) const {
        return d_mean_d_z.array().square().matrix().dot(z_cov) +
               d_mean_d_xi.array().square().matrix().dot(xi_cov);
    }

    /// Chain rule into the flat parameter gradient. dL_dvar reaches the
    /// log-variance blocks; dL_dmean reaches the mean blocks.
    void accumulate(double dL_dmean, double dL_dvar, const VecX& z_cov, const Vec9& xi_cov,
                    const ParamLayout& layout, VecX& grad) const;
};

/// Linearize the decoder + pose chain at the distribution means (Jacobian of
/// the SDF with respect to latent code and pose via the decoder gradient and
/// the point-pose Jacobian).
SdfLinearization linearize_sdf(const Decoder& decoder, const VecX& z_mean, const Pose9& pose_mean,
                               const Vec3& p_world);

/// Forward-propagated SDF distribution at a world point: mean through the
/// decoder at the means, variance by the first-order (delta-method) rule with
/// diagonal covariances.
SdfGaussian sdf_distribution(const Decoder& decoder, const LatentGaussian& z,
                             const PoseGaussian& pose, const Vec3& p_world);

}  // namespace usm
