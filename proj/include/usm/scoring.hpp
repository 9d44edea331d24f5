#pragma once

#include "usm/propagation.hpp"

#include <optional>
#include <span>

namespace usm {

/// Monte-Carlo energy-score settings. The seed names the exact sample stream;
/// derived per-(iteration, point) seeds make parallel evaluation order
/// irrelevant.
struct EsConfig {
    int sample_count = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        if (sample_count < 2) throw InvalidInput("EsConfig: sample_count must be >= 2");
    }
};

/// Energy score of N(mu, var) against a scalar target, estimated with M
/// reparameterized samples s_m = mu + sqrt(var) * eps_m:
///   (1/M) sum |s_m - target| - (1/(2(M-1))) sum |s_m - s_{m+1}|
/// Exact |mu - target| when var == 0. Optional analytic derivatives with
/// respect to mu and var (same samples, so they match finite differences of
/// this function at fixed seed).
double energy_score_gaussian(double mu, double var, double target, const EsConfig& cfg,
                             double* d_mu = nullptr, double* d_var = nullptr);

/// Mean energy score of the propagated SDF distributions against target 0
/// over a world-frame point set. With grad/layout given, accumulates the
/// parameter gradient (Jacobians held constant per the delta-method rule).
double loss_3d(const Decoder& decoder, const LatentGaussian& z, const PoseGaussian& pose,
               std::span<const Vec3> points_w, const EsConfig& cfg, VecX* grad = nullptr,
               const ParamLayout* layout = nullptr);

/// Squared Euclidean norm of the latent mean.
double latent_regularizer(const LatentGaussian& z);

}  // namespace usm
