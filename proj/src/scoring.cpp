#include "usm/scoring.hpp"

#include "usm/random.hpp"

#include <cmath>

namespace usm {

namespace {
inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}

double energy_score_gaussian(double mu, double var, double target, const EsConfig& cfg,
                             double* d_mu, double* d_var) {
    cfg.validate();
    if (var < 0.0) throw InvalidInput("energy_score_gaussian: negative variance");
    if (var == 0.0) {
        if (d_mu) *d_mu = sign_of(mu - target);
        if (d_var) *d_var = 0.0;
        return std::abs(mu - target);
    }

    const int m = cfg.sample_count;
    const double sigma = std::sqrt(var);
    Rng rng(cfg.seed);

    double sum_abs = 0.0, sum_pair = 0.0;
    double g_mu = 0.0, g_sigma_data = 0.0, g_sigma_pair = 0.0;
    double prev_eps = 0.0;
    for (int i = 0; i < m; ++i) {
        const double eps = rng.normal();
        const double resid = mu + sigma * eps - target;
        sum_abs += std::abs(resid);
        const double sg = sign_of(resid);
        g_mu += sg;
        g_sigma_data += sg * eps;
        if (i > 0) {
            const double d = eps - prev_eps;  // pair gap is sigma * |d|
            sum_pair += std::abs(d);
            g_sigma_pair += std::abs(d);
        }
        prev_eps = eps;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    const double inv_pair = 0.5 / static_cast<double>(m - 1);
    const double value = inv_m * sum_abs - inv_pair * sigma * sum_pair;
    if (d_mu) *d_mu = inv_m * g_mu;
    if (d_var) {
        const double d_sigma = inv_m * g_sigma_data - inv_pair * g_sigma_pair;
        *d_var = d_sigma / (2.0 * sigma);
    }
    return value;
}

double loss_3d(const Decoder& decoder, const LatentGaussian& z, const PoseGaussian& pose,
               std::span<const Vec3> points_w, const EsConfig& cfg, VecX* grad,
               const ParamLayout* layout) {
    cfg.validate();
    z.validate();
    pose.validate();
    if (points_w.empty()) throw InvalidInput("loss_3d: empty point set");
    if (grad && !layout) throw InvalidInput("loss_3d: gradient requested without layout");

    const Pose9 pose_mean = pose.mean_pose();
    const std::size_t n = points_w.size();
    const std::size_t grain = 256;
    const std::size_t chunks = (n + grain - 1) / grain;
    std::vector<double> chunk_value(chunks, 0.0);
    std::vector<VecX> chunk_grad;
    if (grad) chunk_grad.assign(chunks, VecX::Zero(layout->size()));

    parallel_for(
        n,
        [&](std::size_t begin, std::size_t end) {
            const std::size_t c = begin / grain;
            double acc = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const SdfLinearization lin = linearize_sdf(decoder, z.mean, pose_mean, points_w[i]);
                const double var = lin.variance(z.cov_diag, pose.cov_diag);
                EsConfig point_cfg = cfg;
                point_cfg.seed = mix_seed({cfg.seed, 0x3d3dull, static_cast<std::uint64_t>(i)});
                double d_mu = 0.0, d_var = 0.0;
                const double es = energy_score_gaussian(lin.mean, var, 0.0, point_cfg,
                                                        grad ? &d_mu : nullptr,
                                                        grad ? &d_var : nullptr);
                acc += es;
                if (grad)
                    lin.accumulate(d_mu, d_var, z.cov_diag, pose.cov_diag, *layout,
                                   chunk_grad[c]);
            }
            chunk_value[c] += acc;
        },
        grain);

    double total = 0.0;
    for (double v : chunk_value) total += v;
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad) {
        VecX g = VecX::Zero(layout->size());
        for (const auto& cg : chunk_grad) g += cg;
        *grad += inv_n * g;
    }
    return inv_n * total;
}

double latent_regularizer(const LatentGaussian& z) { return z.mean.squaredNorm(); }

}  // namespace usm
