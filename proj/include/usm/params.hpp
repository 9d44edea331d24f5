#pragma once

#include "usm/common.hpp"
#include "usm/decoder.hpp"
#include "usm/geometry.hpp"

namespace usm {

/// Flat layout of the optimized state:
///   [mu_z (L), log diag Sigma_z (L), t (3), phi (3), log s (3),
///    log diag Sigma_xi (9)]
/// Log parametrization keeps every covariance diagonal strictly positive.
struct ParamLayout {
    int latent_dim = 64;

    int size() const { return 2 * latent_dim + 18; }
    int mu_z() const { return 0; }
    int log_var_z() const { return latent_dim; }
    int pose_xi() const { return 2 * latent_dim; }
    int log_var_xi() const { return 2 * latent_dim + 9; }
};

/// Packs (latent Gaussian, pose Gaussian) into the flat vector and back.
VecX pack_params(const LatentGaussian& z, const PoseGaussian& pose, const ParamLayout& layout);
void unpack_params(const VecX& params, const ParamLayout& layout, LatentGaussian& z,
                   PoseGaussian& pose);

}  // namespace usm
