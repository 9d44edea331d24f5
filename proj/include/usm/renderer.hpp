#pragma once

#include "usm/ingestion.hpp"
#include "usm/propagation.hpp"
#include "usm/scoring.hpp"
#include "usm/sobol.hpp"

#include <optional>

namespace usm {

struct RayConfig {
    int samples_per_ray = 32;
    double d_min = 0.2;   // defaults for direct ray_sample calls; the renderer
    double d_max = 6.0;   // derives per-ray ranges from the bounding sphere
    double surface_band = 0.05;
    double slope = 400.0;
    int sobol_count = 128;
    double background_depth_factor = 1.1;
    double bound_pad = 0.1;
    std::uint64_t scramble_seed = 0;

    void validate() const {
        if (samples_per_ray < 1) throw InvalidInput("RayConfig: samples_per_ray must be >= 1");
        if (!(d_min < d_max)) throw InvalidInput("RayConfig: requires d_min < d_max");
        if (surface_band <= 0) throw InvalidInput("RayConfig: surface_band must be positive");
        if (slope <= 0) throw InvalidInput("RayConfig: slope must be positive");
        if (sobol_count < 2) throw InvalidInput("RayConfig: sobol_count must be >= 2");
        if (background_depth_factor <= 1.0)
            throw InvalidInput("RayConfig: background_depth_factor must exceed 1");
    }
};

/// Occupancy of Eq-style mirrored sigmoid: 1 / (1 + exp(slope * sdf)).
double occupancy_from_sdf(double sdf, double slope);

/// Logit-normal density/CDF/quantile of the occupancy of N(mu_s, var_s)
/// through the mirrored sigmoid with the given slope.
double logit_normal_pdf(double o, double mu_s, double var_s, double slope);
double logit_normal_cdf(double o, double mu_s, double var_s, double slope);
double logit_normal_quantile(double u, double mu_s, double var_s, double slope);

/// Beta distribution matched to (mean, var) by the first two moments.
struct BetaFit {
    double alpha = 0.0;
    double beta = 0.0;
    enum class Flag { Ok, ClampedVariance, Degenerate } flag = Flag::Ok;
};
BetaFit beta_moment_match(double mean, double var);

/// Uniformly spaced samples along a back-projected pixel ray:
/// depths d_i = d_min + (i/M)(d_max - d_min), i = 1..M, world-frame points.
/// Depth parametrizes the z=1 camera ray, so it matches depth rasters.
struct RaySamples {
    Vec3 origin_w = Vec3::Zero();
    Vec3 dir_w = Vec3::Zero();  // camera ray K^-1 (u,v,1) rotated to world
    VecX depths;
    std::vector<Vec3> points_w;
};
RaySamples ray_sample(double u, double v, const Intrinsics& k, const Mat4& t_wc, double d_min,
                      double d_max, int count);

/// Termination/escape distribution of one ray from its per-sample SDF
/// Gaussians, estimated over quasi-Monte-Carlo occupancy draws.
struct TerminationResult {
    VecX mean;          // size M+1, escape event last; sums to 1
    VecX var;           // population variance across draws
    MatX draw_weights;  // sobol_count x (M+1); each row sums to 1
};

/// Rendered depth distribution of one pixel.
struct RayRender {
    RaySamples samples;
    TerminationResult termination;
    double background_depth = 0.0;
    double depth_mean = 0.0;
    double depth_var = 0.0;
};

/// Probabilistic SDF renderer. Owns the Sobol table for the configured ray
/// sample count; immutable after construction and safe for concurrent use.
///
/// Draw u-values use binned midpoints: the top bits of the scrambled Sobol
/// integer pick one of 2^k bins (k = floor(log2(sobol_count))) and the draw
/// lands at the bin center. Per-dimension prefixes remain perfectly
/// stratified, which keeps the occupancy-moment estimates within the
/// documented 1e-3 of dense Monte Carlo.
class Renderer {
public:
    explicit Renderer(RayConfig cfg);

    const RayConfig& config() const { return cfg_; }

    TerminationResult termination_distributions(std::span<const SdfGaussian> sdf,
                                                std::uint64_t ray_seed) const;

    /// Full pixel render under the current state distributions; nullopt when
    /// the ray misses the (padded) bounding sphere of the posed shape.
    std::optional<RayRender> render_pixel(const Decoder& decoder, const LatentGaussian& z,
                                          const PoseGaussian& pose, double u, double v,
                                          const Intrinsics& k, const Mat4& t_wc) const;

    /// Mean 2D energy score over the pixel set: masked pixels score the
    /// rendered depth distribution against measured depth, background pixels
    /// against the per-ray escape depth. Pixels with invalid measured depth
    /// or rays missing the bounding sphere are skipped.
    double loss_2d(const Decoder& decoder, const LatentGaussian& z, const PoseGaussian& pose,
                   const DepthFrame& frame, std::span<const Eigen::Vector2i> pixel_set,
                   const EsConfig& es_cfg, VecX* grad = nullptr,
                   const ParamLayout* layout = nullptr) const;

    /// Ray/sphere range for the posed canonical bound, padded; nullopt = miss.
    std::optional<std::pair<double, double>> ray_range(const Vec3& origin_w, const Vec3& dir_w,
                                                       const Vec3& center_w,
                                                       double radius_w) const;

    /// World-frame center and radius of the bounding sphere of the shape
    /// under the given pose.
    std::pair<Vec3, double> bounding_sphere(const Decoder& decoder, const VecX& z_mean,
                                            const Pose9& pose) const;

    // Pieces shared with the optimizer's per-iteration plan.
    struct PixelWork {
        RaySamples ray;
        double background_depth = 0.0;
        double target = 0.0;
        std::uint64_t ray_seed = 0;
        std::uint64_t es_seed = 0;
        std::vector<SdfLinearization> lin;  // per sample, at the plan state
    };

    /// Builds the linearizations of one pixel at the given state. The ray
    /// range comes from (range_z, range_pose) when given, otherwise from the
    /// linearization state; a positive measured depth widens the range so the
    /// pixel's observation always lies among the samples.
    bool prepare_pixel(const Decoder& decoder, const VecX& z_mean, const Pose9& pose_mean,
                       double u, double v, const Intrinsics& k, const Mat4& t_wc, PixelWork& work,
                       const VecX* range_z = nullptr, const Pose9* range_pose = nullptr,
                       double measured_depth = 0.0) const;

    /// Energy score of one prepared pixel at the (possibly shifted) state.
    /// Means are re-decoded when `reuse_means` is false; variances always use
    /// the prepared Jacobians (delta-method with frozen linearization).
    double pixel_energy_score(const Decoder& decoder, const LatentGaussian& z,
                              const PoseGaussian& pose, const PixelWork& work, int es_samples,
                              bool reuse_means, VecX* grad, const ParamLayout* layout) const;

private:
    struct DrawTables;
    void draw_occupancies(const std::vector<double>& mu, const std::vector<double>& sigma,
                          const std::vector<bool>& probabilistic, std::uint64_t ray_seed,
                          DrawTables& out) const;

    RayConfig cfg_;
    SobolSequence sobol_;
    std::vector<std::uint32_t> sobol_raw_;  // [draw * dims + dim], indices 1..count
    std::vector<double> bin_normal_;        // normal quantile at each bin midpoint
    int bin_bits_ = 0;
};

}  // namespace usm
