#include "usm/renderer.hpp"

#include "usm/random.hpp"
#include "usm/stats.hpp"

#include <bit>
#include <cmath>

namespace usm {

namespace {
constexpr double kVarFloor = 1e-12;

double logit(double o) { return std::log(o / (1.0 - o)); }
}  // namespace

double occupancy_from_sdf(double sdf, double slope) { return sigmoid(-slope * sdf); }

double logit_normal_pdf(double o, double mu_s, double var_s, double slope) {
    if (!(o > 0.0 && o < 1.0)) throw InvalidInput("logit_normal_pdf: o must lie in (0,1)");
    if (!(var_s > 0.0)) throw InvalidInput("logit_normal_pdf: var_s must be positive");
    const double z = (-logit(o) / slope - mu_s);
    return 1.0 / (o * (1.0 - o) * slope * std::sqrt(2.0 * M_PI * var_s)) *
           std::exp(-z * z / (2.0 * var_s));
}

double logit_normal_cdf(double o, double mu_s, double var_s, double slope) {
    if (!(o > 0.0 && o < 1.0)) throw InvalidInput("logit_normal_cdf: o must lie in (0,1)");
    if (!(var_s > 0.0)) throw InvalidInput("logit_normal_cdf: var_s must be positive");
    return normal_cdf((mu_s + logit(o) / slope) / std::sqrt(var_s));
}

double logit_normal_quantile(double u, double mu_s, double var_s, double slope) {
    if (!(u > 0.0 && u < 1.0)) throw InvalidInput("logit_normal_quantile: u must lie in (0,1)");
    if (var_s < 0.0) throw InvalidInput("logit_normal_quantile: negative variance");
    // sqrt(2 var) * erfinv(2u - 1) computed as sigma * Phi^-1(u); same map,
    // conditioned well for u near the endpoints.
    return sigmoid(slope * std::sqrt(var_s) * normal_quantile(u) - slope * mu_s);
}

BetaFit beta_moment_match(double mean, double var) {
    BetaFit fit;
    if (!(mean > 0.0 && mean < 1.0) || var <= 0.0) {
        fit.flag = BetaFit::Flag::Degenerate;
        return fit;
    }
    const double bound = mean * (1.0 - mean);
    if (var >= bound) {
        var = 0.99 * bound;
        fit.flag = BetaFit::Flag::ClampedVariance;
    }
    const double nu = bound / var - 1.0;
    fit.alpha = mean * nu;
    fit.beta = (1.0 - mean) * nu;
    return fit;
}

RaySamples ray_sample(double u, double v, const Intrinsics& k, const Mat4& t_wc, double d_min,
                      double d_max, int count) {
    if (u < 0 || u >= k.width || v < 0 || v >= k.height)
        throw InvalidInput("ray_sample: pixel outside image bounds");
    if (!(d_min < d_max)) throw InvalidInput("ray_sample: requires d_min < d_max");
    if (count < 1) throw InvalidInput("ray_sample: count must be >= 1");
    RaySamples out;
    out.origin_w = t_wc.topRightCorner<3, 1>();
    out.dir_w = t_wc.topLeftCorner<3, 3>() * k.ray(u, v);
    out.depths.resize(count);
    out.points_w.resize(count);
    const double span = d_max - d_min;
    for (int i = 1; i <= count; ++i) {
        const double d = d_min + (static_cast<double>(i) / count) * span;
        out.depths[i - 1] = d;
        out.points_w[i - 1] = out.origin_w + d * out.dir_w;
    }
    return out;
}

Renderer::Renderer(RayConfig cfg) : cfg_(cfg), sobol_(cfg.samples_per_ray) {
    cfg_.validate();
    const int draws = cfg_.sobol_count;
    const int dims = cfg_.samples_per_ray;
    sobol_raw_.resize(std::size_t(draws) * dims);
    for (int m = 0; m < draws; ++m)
        for (int j = 0; j < dims; ++j)
            sobol_raw_[std::size_t(m) * dims + j] = sobol_.raw(static_cast<std::uint32_t>(m + 1), j);

    bin_bits_ = 0;
    while ((2 << bin_bits_) <= draws) ++bin_bits_;  // floor(log2(draws))
    bin_bits_ = std::max(1, bin_bits_);
    const int bins = 1 << bin_bits_;
    bin_normal_.resize(bins);
    for (int b = 0; b < bins; ++b)
        bin_normal_[b] = normal_quantile((b + 0.5) / static_cast<double>(bins));
}

struct Renderer::DrawTables {
    int draws = 0;
    int samples = 0;
    std::vector<double> o;   // draws x samples
    std::vector<double> zq;  // draw normal quantile (0 where deterministic)
};

void Renderer::draw_occupancies(const std::vector<double>& mu, const std::vector<double>& sigma,
                                const std::vector<bool>& probabilistic, std::uint64_t ray_seed,
                                DrawTables& out) const {
    const int draws = cfg_.sobol_count;
    const int s = static_cast<int>(mu.size());
    out.draws = draws;
    out.samples = s;
    out.o.assign(std::size_t(draws) * s, 0.0);
    out.zq.assign(std::size_t(draws) * s, 0.0);

    const int shift_down = 32 - bin_bits_;
    const double l = cfg_.slope;
    for (int j = 0; j < s; ++j) {
        if (!probabilistic[j]) {
            const double det = sigmoid(-l * mu[j]);
            for (int m = 0; m < draws; ++m) out.o[std::size_t(m) * s + j] = det;
            continue;
        }
        const std::uint32_t shift = static_cast<std::uint32_t>(
            mix_seed({ray_seed, 0x5348ull, static_cast<std::uint64_t>(j)}) >> 32);
        for (int m = 0; m < draws; ++m) {
            const std::uint32_t x = sobol_raw_[std::size_t(m) * cfg_.samples_per_ray + j] ^ shift;
            const double zq = bin_normal_[x >> shift_down];
            out.zq[std::size_t(m) * s + j] = zq;
            out.o[std::size_t(m) * s + j] = sigmoid(l * sigma[j] * zq - l * mu[j]);
        }
    }
}

TerminationResult Renderer::termination_distributions(std::span<const SdfGaussian> sdf,
                                                      std::uint64_t ray_seed) const {
    const int s = static_cast<int>(sdf.size());
    if (s < 1) throw InvalidInput("termination_distributions: empty sample list");
    if (s > cfg_.samples_per_ray)
        throw InvalidInput("termination_distributions: more samples than samples_per_ray");

    std::vector<double> mu(s), sigma(s);
    std::vector<bool> prob(s);
    for (int j = 0; j < s; ++j) {
        if (sdf[j].var < 0.0) throw InvalidInput("termination_distributions: negative variance");
        mu[j] = sdf[j].mean;
        sigma[j] = std::sqrt(std::max(sdf[j].var, kVarFloor));
        // Below the variance floor a sample is numerically deterministic.
        prob[j] = std::abs(sdf[j].mean) <= cfg_.surface_band && sdf[j].var > kVarFloor;
    }
    DrawTables tables;
    draw_occupancies(mu, sigma, prob, ray_seed, tables);

    TerminationResult result;
    const int draws = tables.draws;
    result.draw_weights.resize(draws, s + 1);
    for (int m = 0; m < draws; ++m) {
        double transmit = 1.0;
        double total = 0.0;
        for (int j = 0; j < s; ++j) {
            const double o = tables.o[std::size_t(m) * s + j];
            const double w = o * transmit;
            result.draw_weights(m, j) = w;
            total += w;
            transmit *= (1.0 - o);
        }
        result.draw_weights(m, s) = std::max(0.0, 1.0 - total);
    }
    result.mean = result.draw_weights.colwise().mean().transpose();
    result.var.resize(s + 1);
    for (int j = 0; j <= s; ++j)
        result.var[j] = (result.draw_weights.col(j).array() - result.mean[j]).square().mean();
    return result;
}

std::pair<Vec3, double> Renderer::bounding_sphere(const Decoder& decoder, const VecX& z_mean,
                                                  const Pose9& pose) const {
    const Mat4 t_ow_inv = pose.inverse_matrix();
    const Vec3 center = t_ow_inv.topRightCorner<3, 1>();
    const double radius = decoder.canonical_bound(z_mean) / pose.s.minCoeff();
    return {center, radius};
}

std::optional<std::pair<double, double>> Renderer::ray_range(const Vec3& origin_w,
                                                             const Vec3& dir_w,
                                                             const Vec3& center_w,
                                                             double radius_w) const {
    const double r = radius_w * (1.0 + cfg_.bound_pad);
    const Vec3 oc = origin_w - center_w;
    const double a = dir_w.squaredNorm();
    const double b = 2.0 * dir_w.dot(oc);
    const double c = oc.squaredNorm() - r * r;
    const double disc = b * b - 4.0 * a * c;
    if (disc <= 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double d0 = (-b - sq) / (2.0 * a);
    double d1 = (-b + sq) / (2.0 * a);
    d0 = std::max(d0, 1e-4);
    if (d1 <= d0) return std::nullopt;
    return std::make_pair(d0, d1);
}

bool Renderer::prepare_pixel(const Decoder& decoder, const VecX& z_mean, const Pose9& pose_mean,
                             double u, double v, const Intrinsics& k, const Mat4& t_wc,
                             PixelWork& work, const VecX* range_z, const Pose9* range_pose,
                             double measured_depth) const {
    const auto [center, radius] = bounding_sphere(decoder, range_z ? *range_z : z_mean,
                                                  range_pose ? *range_pose : pose_mean);
    const Vec3 origin = t_wc.topRightCorner<3, 1>();
    const Vec3 dir = t_wc.topLeftCorner<3, 3>() * k.ray(u, v);
    auto range = ray_range(origin, dir, center, radius);
    if (!range) {
        if (measured_depth <= 0.0) return false;
        range = std::make_pair(0.85 * measured_depth, 1.15 * measured_depth);
    } else if (measured_depth > 0.0) {
        range->first = std::min(range->first, 0.85 * measured_depth);
        range->second = std::max(range->second, 1.15 * measured_depth);
    }
    work.ray = ray_sample(u, v, k, t_wc, range->first, range->second, cfg_.samples_per_ray);
    work.background_depth = cfg_.background_depth_factor * range->second;
    work.lin.resize(cfg_.samples_per_ray);
    for (int j = 0; j < cfg_.samples_per_ray; ++j)
        work.lin[j] = linearize_sdf(decoder, z_mean, pose_mean, work.ray.points_w[j]);
    return true;
}

double Renderer::pixel_energy_score(const Decoder& decoder, const LatentGaussian& z,
                                    const PoseGaussian& pose, const PixelWork& work,
                                    int es_samples, bool reuse_means, VecX* grad,
                                    const ParamLayout* layout) const {
    const int s = cfg_.samples_per_ray;
    const Pose9 pose_mean = pose.mean_pose();
    std::vector<double> mu(s), sigma(s);
    std::vector<bool> prob(s), clamped(s);
    for (int j = 0; j < s; ++j) {
        mu[j] = reuse_means
                    ? work.lin[j].mean
                    : decoder.decode(z.mean, transform_point(pose_mean, work.ray.points_w[j]));
        const double var = work.lin[j].variance(z.cov_diag, pose.cov_diag);
        clamped[j] = var <= kVarFloor;
        sigma[j] = std::sqrt(std::max(var, kVarFloor));
        prob[j] = std::abs(mu[j]) <= cfg_.surface_band && !clamped[j];
    }

    DrawTables tables;
    draw_occupancies(mu, sigma, prob, work.ray_seed, tables);

    const int draws = tables.draws;
    const double bg = work.background_depth;
    std::vector<double> transmit(std::size_t(draws) * s);
    std::vector<double> depth(draws);
    for (int m = 0; m < draws; ++m) {
        double t = 1.0;
        double total_w = 0.0;
        double d = 0.0;
        for (int j = 0; j < s; ++j) {
            transmit[std::size_t(m) * s + j] = t;
            const double o = tables.o[std::size_t(m) * s + j];
            const double w = o * t;
            d += w * work.ray.depths[j];
            total_w += w;
            t *= (1.0 - o);
        }
        d += std::max(0.0, 1.0 - total_w) * bg;
        depth[m] = d;
    }
    double depth_mean = 0.0;
    for (double d : depth) depth_mean += d;
    depth_mean /= draws;
    double depth_var = 0.0;
    for (double d : depth) depth_var += (d - depth_mean) * (d - depth_mean);
    depth_var /= draws;

    EsConfig es_cfg;
    es_cfg.sample_count = es_samples;
    es_cfg.seed = work.es_seed;
    double d_mean = 0.0, d_var = 0.0;
    const double value = energy_score_gaussian(depth_mean, depth_var, work.target, es_cfg,
                                               grad ? &d_mean : nullptr, grad ? &d_var : nullptr);
    if (!grad) return value;

    // Backward: ES -> per-draw depth -> occupancies -> (mu_j, var_j).
    const double l = cfg_.slope;
    std::vector<double> g_mu(s, 0.0), g_var(s, 0.0);
    for (int m = 0; m < draws; ++m) {
        const double w_m = d_mean / draws + d_var * 2.0 * (depth[m] - depth_mean) / draws;
        if (w_m == 0.0) continue;
        double downstream = bg;  // conditional depth given survival past j
        for (int j = s - 1; j >= 0; --j) {
            const double o = tables.o[std::size_t(m) * s + j];
            const double t = transmit[std::size_t(m) * s + j];
            const double dd_do = t * (work.ray.depths[j] - downstream);
            const double oo = o * (1.0 - o);
            g_mu[j] += w_m * dd_do * (-l * oo);
            if (prob[j] && !clamped[j])
                g_var[j] += w_m * dd_do * (oo * l * tables.zq[std::size_t(m) * s + j] /
                                           (2.0 * sigma[j]));
            downstream = o * work.ray.depths[j] + (1.0 - o) * downstream;
        }
    }
    for (int j = 0; j < s; ++j)
        work.lin[j].accumulate(g_mu[j], g_var[j], z.cov_diag, pose.cov_diag, *layout, *grad);
    return value;
}

std::optional<RayRender> Renderer::render_pixel(const Decoder& decoder, const LatentGaussian& z,
                                                const PoseGaussian& pose, double u, double v,
                                                const Intrinsics& k, const Mat4& t_wc) const {
    z.validate();
    pose.validate();
    PixelWork work;
    if (!prepare_pixel(decoder, z.mean, pose.mean_pose(), u, v, k, t_wc, work)) return std::nullopt;
    work.ray_seed = mix_seed({cfg_.scramble_seed, std::bit_cast<std::uint64_t>(u),
                              std::bit_cast<std::uint64_t>(v)});

    RayRender render;
    render.samples = work.ray;
    render.background_depth = work.background_depth;
    std::vector<SdfGaussian> sdf(cfg_.samples_per_ray);
    for (int j = 0; j < cfg_.samples_per_ray; ++j)
        sdf[j] = SdfGaussian{work.lin[j].mean, work.lin[j].variance(z.cov_diag, pose.cov_diag)};
    render.termination = termination_distributions(sdf, work.ray_seed);

    VecX depth_axis(cfg_.samples_per_ray + 1);
    depth_axis << work.ray.depths, work.background_depth;
    VecX per_draw = render.termination.draw_weights * depth_axis;
    render.depth_mean = per_draw.mean();
    render.depth_var = (per_draw.array() - render.depth_mean).square().mean();
    return render;
}

double Renderer::loss_2d(const Decoder& decoder, const LatentGaussian& z, const PoseGaussian& pose,
                         const DepthFrame& frame, std::span<const Eigen::Vector2i> pixel_set,
                         const EsConfig& es_cfg, VecX* grad, const ParamLayout* layout) const {
    z.validate();
    pose.validate();
    es_cfg.validate();
    if (pixel_set.empty()) throw InvalidInput("loss_2d: empty pixel set");
    if (grad && !layout) throw InvalidInput("loss_2d: gradient requested without layout");

    const Pose9 pose_mean = pose.mean_pose();
    double total = 0.0;
    std::size_t used = 0;
    VecX accum;
    if (grad) accum = VecX::Zero(layout->size());
    for (std::size_t i = 0; i < pixel_set.size(); ++i) {
        const int px = pixel_set[i].x();
        const int py = pixel_set[i].y();
        if (px < 0 || px >= frame.intrinsics.width || py < 0 || py >= frame.intrinsics.height)
            throw InvalidInput("loss_2d: pixel outside image bounds");
        double measured = 0.0;
        if (frame.mask.object(px, py)) {
            measured = frame.depth.at(px, py);
            if (measured <= 0.0) continue;
        }
        PixelWork work;
        if (!prepare_pixel(decoder, z.mean, pose_mean, px, py, frame.intrinsics, frame.t_wc, work,
                           nullptr, nullptr, measured))
            continue;
        work.target = measured > 0.0 ? measured : work.background_depth;
        work.ray_seed = mix_seed({cfg_.scramble_seed, static_cast<std::uint64_t>(px),
                                  static_cast<std::uint64_t>(py)});
        work.es_seed = mix_seed({es_cfg.seed, 0x3244ull, static_cast<std::uint64_t>(i)});
        total += pixel_energy_score(decoder, z, pose, work, es_cfg.sample_count, true,
                                    grad ? &accum : nullptr, layout);
        ++used;
    }
    if (used == 0) throw InvalidInput("loss_2d: no usable pixels (all skipped)");
    if (grad) *grad += accum / static_cast<double>(used);
    return total / static_cast<double>(used);
}

}  // namespace usm
