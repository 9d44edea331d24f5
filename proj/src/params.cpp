#include "usm/params.hpp"

namespace usm {

VecX pack_params(const LatentGaussian& z, const PoseGaussian& pose, const ParamLayout& layout) {
    if (z.mean.size() != layout.latent_dim) throw InvalidInput("pack_params: latent size mismatch");
    VecX p(layout.size());
    p.segment(layout.mu_z(), layout.latent_dim) = z.mean;
    p.segment(layout.log_var_z(), layout.latent_dim) = z.cov_diag.array().log().matrix();
    p.segment(layout.pose_xi(), 9) = pose.xi;
    p.segment(layout.log_var_xi(), 9) = pose.cov_diag.array().log().matrix();
    return p;
}

void unpack_params(const VecX& params, const ParamLayout& layout, LatentGaussian& z,
                   PoseGaussian& pose) {
    if (params.size() != layout.size()) throw InvalidInput("unpack_params: size mismatch");
    z.mean = params.segment(layout.mu_z(), layout.latent_dim);
    z.cov_diag = params.segment(layout.log_var_z(), layout.latent_dim).array().exp().matrix();
    pose.xi = params.segment(layout.pose_xi(), 9);
    pose.cov_diag = params.segment(layout.log_var_xi(), 9).array().exp().matrix();
}

}  // namespace usm
