#pragma once

#include "usm/ingestion.hpp"
#include "usm/renderer.hpp"

#include <optional>

namespace usm {

struct OptimConfig {
    int iters = 200;
    double lr = 0.005;
    // The 2D term runs on a small pixel subsample, so its gradient noise is
    // large per unit weight; 0.1 keeps its silhouette constraint active
    // without drowning the surface term's signal in Adam's second moment.
    double lambda_surface = 1.0;  // 3D term weight
    double lambda_render = 0.1;   // 2D term weight
    double lambda_code = 1e-3;    // latent regularizer weight
    EsConfig es;
    RayConfig ray;
    int pixels_per_view = 64;
    std::size_t max_world_points = 2048;
    int icp_iters = 30;
    double init_latent_var = 1e-6;
    double init_pose_var = 1e-4;
    std::uint64_t seed = 0;

    void validate() const {
        if (iters < 0) throw InvalidInput("OptimConfig: iters must be >= 0");
        if (lr <= 0.0) throw InvalidInput("OptimConfig: lr must be positive");
        if (lambda_surface < 0 || lambda_render < 0 || lambda_code < 0)
            throw InvalidInput("OptimConfig: loss weights must be nonnegative");
        es.validate();
        ray.validate();
        if (pixels_per_view < 2) throw InvalidInput("OptimConfig: pixels_per_view must be >= 2");
    }
};

struct LossTerms {
    double l3d = 0.0;   // unweighted 3D surface term
    double l2d = 0.0;   // unweighted 2D rendering term
    double reg = 0.0;   // unweighted |mu_z|^2
    double total = 0.0; // weighted sum
};

struct OptimState {
    LatentGaussian z;
    PoseGaussian pose;
    int iteration = 0;
    std::vector<LossTerms> history;
};

/// Similarity registration of the observed world points onto the canonical
/// points: per-axis scale seeded from axis-aligned extent ratios, then
/// alternating nearest-neighbor matching with a closed-form rotation +
/// translation + uniform scale solve. Throws InvalidInput on fewer than 10
/// points per set or rank-deficient geometry.
Pose9 icp_init(std::span<const Vec3> canonical_points, std::span<const Vec3> observed_points_w,
               int max_iters);

/// z = 0, diagonal covariances at their configured constants, pose from ICP
/// against the z = 0 shape (or the caller-supplied pose, stored verbatim).
OptimState init_state(const Decoder& decoder, std::span<const Vec3> points_w,
                      const OptimConfig& cfg, const std::optional<Pose9>& initial_pose = {});

struct AdamState {
    VecX m, v;
    int t = 0;
};

/// Standard Adam update with bias correction (beta1 0.9, beta2 0.999).
void adam_step(VecX& params, const VecX& grad, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Everything one loss evaluation needs that is held fixed while the
/// parameters move: the pixel subset, ray geometry, sample/scramble seeds,
/// and the linearization point. Finite-difference checks of the gradient
/// evaluate the plan at shifted parameters.
struct IterationPlan {
    ParamLayout layout;
    VecX params;  // linearization point
    int iteration = 0;
    std::uint64_t es3d_seed = 0;
    std::vector<Vec3> points;
    std::vector<SdfLinearization> point_lin;
    struct PlanPixel {
        Renderer::PixelWork work;
        int frame = 0;
    };
    std::vector<PlanPixel> pixels;
};

/// Ray ranges and the background depth come from the bounding sphere of the
/// initialization state (range_z, range_pose), not the moving iterate; a
/// shrinking estimate therefore cannot silently drop silhouette pixels from
/// the 2D term. Mask-pixel ranges are widened to cover the measured depth.
IterationPlan build_plan(const VecX& params, const ParamLayout& layout, const Decoder& decoder,
                         std::span<const DepthFrame> frames, std::span<const Vec3> points_w,
                         const OptimConfig& cfg, const Renderer& renderer, int iteration,
                         const VecX& range_z, const Pose9& range_pose);

/// Weighted loss (and gradient) of the plan at the given parameters. Means
/// re-decode when the parameters differ from the plan's linearization point;
/// variances always use the plan Jacobians.
LossTerms eval_plan(const VecX& params, const IterationPlan& plan, const Decoder& decoder,
                    const OptimConfig& cfg, const Renderer& renderer, VecX* grad = nullptr);

/// One-call total loss at a state (builds the plan for `iteration` first).
LossTerms total_loss(const OptimState& state, const Decoder& decoder,
                     std::span<const DepthFrame> frames, std::span<const Vec3> points_w,
                     const OptimConfig& cfg, int iteration, VecX* grad = nullptr);

/// Joint Adam optimization of {mu_z, Sigma_z, mu_xi, Sigma_xi}. Deterministic
/// for a given config/seed. Throws NumericalError (naming the term and
/// iteration) if the loss turns non-finite.
OptimState fit(const Decoder& decoder, std::span<const DepthFrame> frames, const OptimConfig& cfg,
               const std::optional<Pose9>& initial_pose = {});

/// Result file (JSON): state, config echo, loss history.
void write_result_json(const std::string& path, const OptimState& state,
                       const std::string& decoder_selector, const OptimConfig& cfg);
struct LoadedResult {
    OptimState state;
    std::string decoder_selector;
    std::uint64_t seed = 0;
};
LoadedResult read_result_json(const std::string& path);

/// history CSV: "iter,L3D,L2D,reg,total", one row per iteration.
void write_history_csv(const std::string& path, const std::vector<LossTerms>& history);

}  // namespace usm
