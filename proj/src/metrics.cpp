#include "usm/metrics.hpp"

#include "usm/io.hpp"
#include "usm/stats.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace usm {

PoseErrors pose_error(const Pose9& estimated, const Pose9& ground_truth) {
    PoseErrors e;
    e.translation = (estimated.t - ground_truth.t).norm();
    e.rotation = rotation_angle(estimated.rotation(), ground_truth.rotation()) * 180.0 / M_PI;
    e.scale = (estimated.s.cwiseQuotient(ground_truth.s).array() - 1.0).abs().maxCoeff();
    return e;
}

bool pose_correct(const PoseErrors& errors, const PoseThresholds& thresholds) {
    return errors.translation < thresholds.translation && errors.rotation < thresholds.rotation &&
           errors.scale < thresholds.scale;
}

namespace {

// World-frame axis-aligned box of the canonical domain under a pose.
void accumulate_world_bbox(const Pose9& pose, Vec3& lo, Vec3& hi) {
    const Mat4 to_world = pose.inverse_matrix();
    for (int corner = 0; corner < 8; ++corner) {
        const Vec3 c(corner & 1 ? 1.1 : -1.1, corner & 2 ? 1.1 : -1.1, corner & 4 ? 1.1 : -1.1);
        const Vec3 w = to_world.topLeftCorner<3, 3>() * c + to_world.topRightCorner<3, 1>();
        lo = lo.cwiseMin(w);
        hi = hi.cwiseMax(w);
    }
}

}  // namespace

double iou_3d(const Decoder& est_decoder, const VecX& est_z, const Pose9& est_pose,
              const Decoder& gt_decoder, const VecX& gt_z, const Pose9& gt_pose, int grid_res) {
    if (grid_res < 8) throw InvalidInput("iou_3d: grid_res must be >= 8");
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
    accumulate_world_bbox(est_pose, lo, hi);
    accumulate_world_bbox(gt_pose, lo, hi);
    const Vec3 pad = 0.1 * (hi - lo);
    lo -= pad;
    hi += pad;
    const Vec3 step = (hi - lo) / grid_res;

    const std::size_t n = std::size_t(grid_res) * grid_res * grid_res;
    std::size_t count_union = 0, count_inter = 0;
    const std::size_t grain = 4096;
    const std::size_t chunks = (n + grain - 1) / grain;
    std::vector<std::size_t> chunk_union(chunks, 0), chunk_inter(chunks, 0);
    parallel_for(
        n,
        [&](std::size_t begin, std::size_t end) {
            const std::size_t c = begin / grain;
            for (std::size_t i = begin; i < end; ++i) {
                const int x = static_cast<int>(i % grid_res);
                const int y = static_cast<int>((i / grid_res) % grid_res);
                const int z = static_cast<int>(i / (std::size_t(grid_res) * grid_res));
                const Vec3 p_w = lo + Vec3((x + 0.5) * step.x(), (y + 0.5) * step.y(),
                                           (z + 0.5) * step.z());
                const bool in_est =
                    est_decoder.decode(est_z, transform_point(est_pose, p_w)) <= 0.0;
                const bool in_gt = gt_decoder.decode(gt_z, transform_point(gt_pose, p_w)) <= 0.0;
                if (in_est || in_gt) ++chunk_union[c];
                if (in_est && in_gt) ++chunk_inter[c];
            }
        },
        grain);
    for (std::size_t c = 0; c < chunks; ++c) {
        count_union += chunk_union[c];
        count_inter += chunk_inter[c];
    }
    if (count_union == 0) throw InvalidInput("iou_3d: both shapes are empty on the grid");
    return static_cast<double>(count_inter) / static_cast<double>(count_union);
}

double chamfer(std::span<const Vec3> points_a, std::span<const Vec3> points_b) {
    if (points_a.empty() || points_b.empty()) throw InvalidInput("chamfer: empty point set");
    auto one_way = [](std::span<const Vec3> from, std::span<const Vec3> to) {
        const std::size_t n = from.size();
        const std::size_t grain = 64;
        const std::size_t chunks = (n + grain - 1) / grain;
        std::vector<double> chunk_sum(chunks, 0.0);
        parallel_for(
            n,
            [&](std::size_t begin, std::size_t end) {
                const std::size_t c = begin / grain;
                double acc = 0.0;
                for (std::size_t i = begin; i < end; ++i) {
                    double best = std::numeric_limits<double>::max();
                    for (const auto& q : to) best = std::min(best, (from[i] - q).squaredNorm());
                    acc += std::sqrt(best);
                }
                chunk_sum[c] += acc;
            },
            grain);
        double total = 0.0;
        for (double v : chunk_sum) total += v;
        return total / static_cast<double>(n);
    };
    return 0.5 * (one_way(points_a, points_b) + one_way(points_b, points_a));
}

CorrelationResult uncertainty_correlation(const Decoder& decoder, const LatentGaussian& z,
                                          const PoseGaussian& pose,
                                          std::span<const Vec3> gt_surface_points_w) {
    if (gt_surface_points_w.empty())
        throw InvalidInput("uncertainty_correlation: empty ground-truth sample set");
    CorrelationResult result;
    result.rows.resize(gt_surface_points_w.size());
    parallel_for(gt_surface_points_w.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const SdfGaussian g = sdf_distribution(decoder, z, pose, gt_surface_points_w[i]);
            result.rows[i] = CorrelationRow{gt_surface_points_w[i], g.mean, std::sqrt(g.var),
                                            std::abs(g.mean)};
        }
    });
    std::vector<double> stds(result.rows.size()), errs(result.rows.size());
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        stds[i] = result.rows[i].sdf_std;
        errs[i] = result.rows[i].abs_error;
    }
    try {
        result.pearson_r = pearson(stds, errs);
    } catch (const InvalidInput&) {
        throw InvalidInput(
            "uncertainty_correlation: undefined correlation (degenerate predictions)");
    }
    return result;
}

void write_correlation_csv(const std::string& path, const CorrelationResult& result) {
    std::ostringstream os;
    os.precision(10);
    os << "x,y,z,sdf_mean,sdf_std,abs_error\n";
    for (const auto& row : result.rows)
        os << row.point_w.x() << "," << row.point_w.y() << "," << row.point_w.z() << ","
           << row.sdf_mean << "," << row.sdf_std << "," << row.abs_error << "\n";
    write_text_file(path, os.str());
}

}  // namespace usm
