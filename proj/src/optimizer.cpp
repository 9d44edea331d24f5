#include "usm/optimizer.hpp"

#include "usm/mesh.hpp"
#include "usm/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace usm {

using nlohmann::json;

namespace {

Mat3 covariance_of(std::span<const Vec3> pts, Vec3& centroid) {
    centroid = Vec3::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) {
        const Vec3 d = p - centroid;
        cov += d * d.transpose();
    }
    return cov / static_cast<double>(pts.size());
}

void check_rank(std::span<const Vec3> pts, const char* what) {
    Vec3 centroid;
    const Mat3 cov = covariance_of(pts, centroid);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const double largest = eig.eigenvalues()[2];
    if (largest <= 0.0 || eig.eigenvalues()[1] < 1e-10 * largest)
        throw InvalidInput(std::string("icp_init: ") + what + " points are rank-deficient");
}

Vec3 extent_of(std::span<const Vec3> pts) {
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return hi - lo;
}

}  // namespace

Pose9 icp_init(std::span<const Vec3> canonical_points, std::span<const Vec3> observed_points_w,
               int max_iters) {
    if (canonical_points.size() < 10 || observed_points_w.size() < 10)
        throw InvalidInput("icp_init: need at least 10 points per set");
    check_rank(canonical_points, "canonical");
    check_rank(observed_points_w, "observed");

    // Rotation of a near-isotropic canonical is unidentifiable; nearest-point
    // residuals to a sphere carry no orientation signal, so the rotation
    // estimate is pinned at identity in that case.
    bool solve_rotation = true;
    {
        Vec3 centroid;
        const Mat3 cov = covariance_of(canonical_points, centroid);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        if (eig.eigenvalues()[2] <= 0.0 ||
            eig.eigenvalues()[0] / eig.eigenvalues()[2] > 1.0 / 1.3)
            solve_rotation = false;
    }

    const Vec3 ext_c = extent_of(canonical_points);
    const Vec3 ext_p = extent_of(observed_points_w);
    if ((ext_p.array() <= 0.0).any()) throw InvalidInput("icp_init: observed extent degenerate");
    const Vec3 s0 = ext_c.cwiseQuotient(ext_p);

    // Pre-scale the observed points once; the loop refines a uniform factor.
    std::vector<Vec3> scaled(observed_points_w.size());
    for (std::size_t i = 0; i < scaled.size(); ++i)
        scaled[i] = s0.cwiseProduct(observed_points_w[i]);

    Vec3 centroid_c;
    covariance_of(canonical_points, centroid_c);
    Vec3 centroid_y;
    covariance_of(scaled, centroid_y);

    Mat3 rot = Mat3::Identity();
    double uniform = 1.0;
    Vec3 trans = centroid_c - centroid_y;
    double prev_err = std::numeric_limits<double>::max();

    for (int iter = 0; iter < max_iters; ++iter) {
        // Correspondences: nearest canonical point to each mapped observation.
        std::vector<Vec3> matched(scaled.size());
        double err = 0.0;
        parallel_for(scaled.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const Vec3 q = uniform * (rot * scaled[i]) + trans;
                double best = std::numeric_limits<double>::max();
                std::size_t best_j = 0;
                for (std::size_t j = 0; j < canonical_points.size(); ++j) {
                    const double d2 = (canonical_points[j] - q).squaredNorm();
                    if (d2 < best) {
                        best = d2;
                        best_j = j;
                    }
                }
                matched[i] = canonical_points[best_j];
            }
        });
        for (std::size_t i = 0; i < scaled.size(); ++i)
            err += (matched[i] - (uniform * (rot * scaled[i]) + trans)).squaredNorm();
        err /= static_cast<double>(scaled.size());

        // Closed-form similarity (Umeyama) on the current correspondences.
        Vec3 mu_y = Vec3::Zero(), mu_c = Vec3::Zero();
        for (std::size_t i = 0; i < scaled.size(); ++i) {
            mu_y += scaled[i];
            mu_c += matched[i];
        }
        mu_y /= static_cast<double>(scaled.size());
        mu_c /= static_cast<double>(scaled.size());
        Mat3 cross = Mat3::Zero();
        double var_y = 0.0;
        for (std::size_t i = 0; i < scaled.size(); ++i) {
            const Vec3 dy = scaled[i] - mu_y;
            cross += (matched[i] - mu_c) * dy.transpose();
            var_y += dy.squaredNorm();
        }
        cross /= static_cast<double>(scaled.size());
        var_y /= static_cast<double>(scaled.size());
        if (solve_rotation) {
            Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Vec3 d = Vec3::Ones();
            if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d[2] = -1.0;
            rot = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
            uniform = svd.singularValues().dot(d) / var_y;
        } else {
            uniform = cross.trace() / var_y;
        }
        if (!(uniform > 0.0)) throw InvalidInput("icp_init: degenerate similarity solve");
        trans = mu_c - uniform * (rot * mu_y);

        if (std::abs(prev_err - err) < 1e-12) break;
        prev_err = err;
    }

    Pose9 pose;
    pose.t = trans;
    pose.s = uniform * s0;
    pose.phi = Pose9::from_matrix((Mat4() << rot, Vec3::Zero(), 0, 0, 0, 1).finished()).phi;
    return pose;
}

OptimState init_state(const Decoder& decoder, std::span<const Vec3> points_w,
                      const OptimConfig& cfg, const std::optional<Pose9>& initial_pose) {
    cfg.validate();
    if (points_w.empty()) throw InvalidInput("init_state: empty point set");
    OptimState state;
    state.z = LatentGaussian::zeros(decoder.latent_dim(), cfg.init_latent_var);
    Pose9 pose;
    if (initial_pose) {
        pose = *initial_pose;
    } else {
        const TriMesh canonical = extract_mesh(decoder, state.z.mean, 32);
        if (canonical.empty()) throw InvalidInput("init_state: canonical shape has no surface");
        const auto canonical_pts =
            sample_mesh_surface(canonical, 2048, mix_seed({cfg.seed, 0x1c90ull}));
        pose = icp_init(canonical_pts, points_w, cfg.icp_iters);
    }
    state.pose = PoseGaussian::from_pose(pose, Vec9::Constant(cfg.init_pose_var));
    return state;
}

void adam_step(VecX& params, const VecX& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (state.t == 0) {
        state.m = VecX::Zero(params.size());
        state.v = VecX::Zero(params.size());
    }
    state.t += 1;
    state.m = beta1 * state.m + (1.0 - beta1) * grad;
    state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, state.t);
    const double c2 = 1.0 - std::pow(beta2, state.t);
    params -= (lr * (state.m / c1).array() / ((state.v / c2).array().sqrt() + eps)).matrix();
}

namespace {

std::vector<Eigen::Vector2i> sample_view_pixels(const DepthFrame& frame, int count, Rng& rng) {
    std::vector<Eigen::Vector2i> object, background;
    int lo_x = frame.mask.width, hi_x = -1, lo_y = frame.mask.height, hi_y = -1;
    for (int y = 0; y < frame.mask.height; ++y) {
        for (int x = 0; x < frame.mask.width; ++x) {
            if (frame.mask.object(x, y)) {
                if (frame.depth.at(x, y) > 0.0) object.emplace_back(x, y);
                lo_x = std::min(lo_x, x);
                hi_x = std::max(hi_x, x);
                lo_y = std::min(lo_y, y);
                hi_y = std::max(hi_y, y);
            }
        }
    }
    if (hi_x < lo_x) return {};
    const int dx = std::max(1, (hi_x - lo_x + 1) / 10);
    const int dy = std::max(1, (hi_y - lo_y + 1) / 10);
    lo_x = std::max(0, lo_x - dx);
    hi_x = std::min(frame.mask.width - 1, hi_x + dx);
    lo_y = std::max(0, lo_y - dy);
    hi_y = std::min(frame.mask.height - 1, hi_y + dy);
    for (int y = lo_y; y <= hi_y; ++y)
        for (int x = lo_x; x <= hi_x; ++x)
            if (!frame.mask.object(x, y)) background.emplace_back(x, y);

    auto pick = [&](std::vector<Eigen::Vector2i>& pool, int want,
                    std::vector<Eigen::Vector2i>& out) {
        const int take = std::min<int>(want, static_cast<int>(pool.size()));
        for (int i = 0; i < take; ++i) {
            const std::size_t j = i + rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    };
    std::vector<Eigen::Vector2i> picked;
    pick(object, count / 2, picked);
    pick(background, count - count / 2, picked);
    return picked;
}

}  // namespace

IterationPlan build_plan(const VecX& params, const ParamLayout& layout, const Decoder& decoder,
                         std::span<const DepthFrame> frames, std::span<const Vec3> points_w,
                         const OptimConfig& cfg, const Renderer& renderer, int iteration,
                         const VecX& range_z, const Pose9& range_pose) {
    IterationPlan plan;
    plan.layout = layout;
    plan.params = params;
    plan.iteration = iteration;
    plan.es3d_seed = mix_seed({cfg.seed, 0xe53dull, static_cast<std::uint64_t>(iteration)});

    LatentGaussian z;
    PoseGaussian pose;
    unpack_params(params, layout, z, pose);
    const Pose9 pose_mean = pose.mean_pose();

    if (cfg.lambda_surface > 0.0) {
        plan.points.assign(points_w.begin(), points_w.end());
        plan.point_lin.resize(plan.points.size());
        parallel_for(plan.points.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i)
                plan.point_lin[i] = linearize_sdf(decoder, z.mean, pose_mean, plan.points[i]);
        });
    }

    if (cfg.lambda_render > 0.0) {
        for (std::size_t k = 0; k < frames.size(); ++k) {
            Rng rng(mix_seed({cfg.seed, 0x9144ull, static_cast<std::uint64_t>(iteration), k}));
            const auto pixels = sample_view_pixels(frames[k], cfg.pixels_per_view, rng);
            for (const auto& px : pixels) {
                IterationPlan::PlanPixel pp;
                pp.frame = static_cast<int>(k);
                double measured = 0.0;
                if (frames[k].mask.object(px.x(), px.y())) {
                    measured = frames[k].depth.at(px.x(), px.y());
                    if (measured <= 0.0) continue;
                }
                if (!renderer.prepare_pixel(decoder, z.mean, pose_mean, px.x(), px.y(),
                                            frames[k].intrinsics, frames[k].t_wc, pp.work,
                                            &range_z, &range_pose, measured))
                    continue;
                pp.work.target = measured > 0.0 ? measured : pp.work.background_depth;
                pp.work.ray_seed = mix_seed({cfg.ray.scramble_seed, k,
                                             static_cast<std::uint64_t>(px.y()) << 20 |
                                                 static_cast<std::uint64_t>(px.x())});
                pp.work.es_seed =
                    mix_seed({cfg.seed, 0xe52dull, static_cast<std::uint64_t>(iteration), k,
                              static_cast<std::uint64_t>(px.y()) << 20 |
                                  static_cast<std::uint64_t>(px.x())});
                plan.pixels.push_back(std::move(pp));
            }
        }
    }
    return plan;
}

LossTerms eval_plan(const VecX& params, const IterationPlan& plan, const Decoder& decoder,
                    const OptimConfig& cfg, const Renderer& renderer, VecX* grad) {
    LatentGaussian z;
    PoseGaussian pose;
    unpack_params(params, plan.layout, z, pose);
    const Pose9 pose_mean = pose.mean_pose();
    const bool reuse_means =
        params.size() == plan.params.size() && (params.array() == plan.params.array()).all();

    LossTerms terms;

    if (cfg.lambda_surface > 0.0 && !plan.points.empty()) {
        const std::size_t n = plan.points.size();
        const std::size_t grain = 256;
        const std::size_t chunks = (n + grain - 1) / grain;
        std::vector<double> chunk_value(chunks, 0.0);
        std::vector<VecX> chunk_grad;
        if (grad) chunk_grad.assign(chunks, VecX::Zero(plan.layout.size()));
        parallel_for(
            n,
            [&](std::size_t begin, std::size_t end) {
                const std::size_t c = begin / grain;
                for (std::size_t i = begin; i < end; ++i) {
                    const SdfLinearization& lin = plan.point_lin[i];
                    const double mean =
                        reuse_means ? lin.mean
                                    : decoder.decode(z.mean,
                                                     transform_point(pose_mean, plan.points[i]));
                    const double var = lin.variance(z.cov_diag, pose.cov_diag);
                    EsConfig es = cfg.es;
                    es.seed = mix_seed({plan.es3d_seed, 0x3d3dull, static_cast<std::uint64_t>(i)});
                    double d_mu = 0.0, d_var = 0.0;
                    chunk_value[c] += energy_score_gaussian(mean, var, 0.0, es,
                                                            grad ? &d_mu : nullptr,
                                                            grad ? &d_var : nullptr);
                    if (grad)
                        lin.accumulate(d_mu, d_var, z.cov_diag, pose.cov_diag, plan.layout,
                                       chunk_grad[c]);
                }
            },
            grain);
        double total = 0.0;
        for (double v : chunk_value) total += v;
        terms.l3d = total / static_cast<double>(n);
        if (grad) {
            VecX g = VecX::Zero(plan.layout.size());
            for (const auto& cg : chunk_grad) g += cg;
            *grad += (cfg.lambda_surface / static_cast<double>(n)) * g;
        }
    }

    if (cfg.lambda_render > 0.0 && !plan.pixels.empty()) {
        const std::size_t n = plan.pixels.size();
        const std::size_t grain = 8;
        const std::size_t chunks = (n + grain - 1) / grain;
        std::vector<double> chunk_value(chunks, 0.0);
        std::vector<VecX> chunk_grad;
        if (grad) chunk_grad.assign(chunks, VecX::Zero(plan.layout.size()));
        parallel_for(
            n,
            [&](std::size_t begin, std::size_t end) {
                const std::size_t c = begin / grain;
                for (std::size_t i = begin; i < end; ++i)
                    chunk_value[c] += renderer.pixel_energy_score(
                        decoder, z, pose, plan.pixels[i].work, cfg.es.sample_count, reuse_means,
                        grad ? &chunk_grad[c] : nullptr, &plan.layout);
            },
            grain);
        double total = 0.0;
        for (double v : chunk_value) total += v;
        terms.l2d = total / static_cast<double>(n);
        if (grad) {
            VecX g = VecX::Zero(plan.layout.size());
            for (const auto& cg : chunk_grad) g += cg;
            *grad += (cfg.lambda_render / static_cast<double>(n)) * g;
        }
    }

    terms.reg = z.mean.squaredNorm();
    if (grad && cfg.lambda_code > 0.0)
        grad->segment(plan.layout.mu_z(), plan.layout.latent_dim) +=
            2.0 * cfg.lambda_code * z.mean;

    terms.total = cfg.lambda_surface * terms.l3d + cfg.lambda_render * terms.l2d +
                  cfg.lambda_code * terms.reg;
    return terms;
}

LossTerms total_loss(const OptimState& state, const Decoder& decoder,
                     std::span<const DepthFrame> frames, std::span<const Vec3> points_w,
                     const OptimConfig& cfg, int iteration, VecX* grad) {
    cfg.validate();
    const ParamLayout layout{decoder.latent_dim()};
    const Renderer renderer(cfg.ray);
    const VecX params = pack_params(state.z, state.pose, layout);
    const IterationPlan plan = build_plan(params, layout, decoder, frames, points_w, cfg, renderer,
                                          iteration, state.z.mean, state.pose.mean_pose());
    if (grad) *grad = VecX::Zero(layout.size());
    return eval_plan(params, plan, decoder, cfg, renderer, grad);
}

OptimState fit(const Decoder& decoder, std::span<const DepthFrame> frames, const OptimConfig& cfg_in,
               const std::optional<Pose9>& initial_pose) {
    OptimConfig cfg = cfg_in;
    cfg.validate();
    if (frames.empty()) throw InvalidInput("fit: no frames");
    cfg.ray.scramble_seed = mix_seed({cfg.seed, 0x5261ull});

    const auto points_w = assemble_world_points(frames, cfg.max_world_points, cfg.seed);
    OptimState state = init_state(decoder, points_w, cfg, initial_pose);
    const VecX range_z = state.z.mean;
    const Pose9 range_pose = state.pose.mean_pose();

    const ParamLayout layout{decoder.latent_dim()};
    const Renderer renderer(cfg.ray);
    VecX params = pack_params(state.z, state.pose, layout);
    AdamState adam;
    VecX grad(layout.size());

    for (int iter = 0; iter < cfg.iters; ++iter) {
        const IterationPlan plan = build_plan(params, layout, decoder, frames, points_w, cfg,
                                              renderer, iter, range_z, range_pose);
        grad.setZero();
        const LossTerms terms = eval_plan(params, plan, decoder, cfg, renderer, &grad);
        if (!std::isfinite(terms.total)) {
            const char* term = !std::isfinite(terms.l3d)   ? "3D surface term"
                               : !std::isfinite(terms.l2d) ? "2D rendering term"
                                                           : "regularizer";
            throw NumericalError("fit: non-finite " + std::string(term) + " at iteration " +
                                 std::to_string(iter));
        }
        state.history.push_back(terms);
        adam_step(params, grad, adam, cfg.lr);

        // Wrap the rotation back to the short representative when it leaves pi.
        auto phi = params.segment(layout.pose_xi() + 3, 3);
        const double angle = phi.norm();
        if (angle > M_PI) phi *= (1.0 - 2.0 * M_PI / angle);
    }

    unpack_params(params, layout, state.z, state.pose);
    state.iteration = cfg.iters;
    return state;
}

void write_result_json(const std::string& path, const OptimState& state,
                       const std::string& decoder_selector, const OptimConfig& cfg) {
    json doc;
    doc["decoder"] = decoder_selector;
    doc["mu_z"] = std::vector<double>(state.z.mean.data(), state.z.mean.data() + state.z.mean.size());
    doc["sigma_z_diag"] =
        std::vector<double>(state.z.cov_diag.data(), state.z.cov_diag.data() + state.z.cov_diag.size());
    const Pose9 pose = state.pose.mean_pose();
    doc["pose"]["t"] = {pose.t.x(), pose.t.y(), pose.t.z()};
    doc["pose"]["phi"] = {pose.phi.x(), pose.phi.y(), pose.phi.z()};
    doc["pose"]["scale"] = {pose.s.x(), pose.s.y(), pose.s.z()};
    const Mat4 m = pose.matrix();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
    doc["pose"]["matrix"] = flat;
    doc["sigma_xi_diag"] =
        std::vector<double>(state.pose.cov_diag.data(), state.pose.cov_diag.data() + 9);
    doc["iterations"] = state.iteration;
    doc["config"]["iters"] = cfg.iters;
    doc["config"]["lr"] = cfg.lr;
    doc["config"]["lambda_surface"] = cfg.lambda_surface;
    doc["config"]["lambda_render"] = cfg.lambda_render;
    doc["config"]["lambda_code"] = cfg.lambda_code;
    doc["config"]["es_samples"] = cfg.es.sample_count;
    doc["config"]["ray_samples"] = cfg.ray.samples_per_ray;
    doc["config"]["sobol_count"] = cfg.ray.sobol_count;
    doc["config"]["pixels_per_view"] = cfg.pixels_per_view;
    doc["config"]["max_world_points"] = cfg.max_world_points;
    doc["config"]["seed"] = cfg.seed;
    json hist = json::array();
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        const auto& h = state.history[i];
        hist.push_back({i, h.l3d, h.l2d, h.reg, h.total});
    }
    doc["loss_history"] = hist;
    write_text_file(path, doc.dump(2) + "\n");
}

LoadedResult read_result_json(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw FormatError("result " + path + ": " + e.what());
    }
    LoadedResult out;
    try {
        out.decoder_selector = doc.at("decoder").get<std::string>();
        const auto mu_z = doc.at("mu_z").get<std::vector<double>>();
        const auto sz = doc.at("sigma_z_diag").get<std::vector<double>>();
        out.state.z.mean = Eigen::Map<const VecX>(mu_z.data(), mu_z.size());
        out.state.z.cov_diag = Eigen::Map<const VecX>(sz.data(), sz.size());
        Pose9 pose;
        const auto t = doc.at("pose").at("t").get<std::vector<double>>();
        const auto phi = doc.at("pose").at("phi").get<std::vector<double>>();
        const auto scale = doc.at("pose").at("scale").get<std::vector<double>>();
        pose.t = Vec3(t[0], t[1], t[2]);
        pose.phi = Vec3(phi[0], phi[1], phi[2]);
        pose.s = Vec3(scale[0], scale[1], scale[2]);
        const auto sx = doc.at("sigma_xi_diag").get<std::vector<double>>();
        out.state.pose = PoseGaussian::from_pose(pose, Eigen::Map<const Vec9>(sx.data()));
        out.state.iteration = doc.value("iterations", 0);
        out.seed = doc.at("config").value("seed", 0ull);
    } catch (const json::exception& e) {
        throw FormatError("result " + path + ": " + e.what());
    }
    out.state.z.validate();
    return out;
}

void write_history_csv(const std::string& path, const std::vector<LossTerms>& history) {
    std::ostringstream os;
    os.precision(17);
    os << "iter,L3D,L2D,reg,total\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        os << i << "," << history[i].l3d << "," << history[i].l2d << "," << history[i].reg << ","
           << history[i].total << "\n";
    write_text_file(path, os.str());
}

}  // namespace usm
