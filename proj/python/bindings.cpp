#include "usm/metrics.hpp"
#include "usm/optimizer.hpp"
#include "usm/stats.hpp"
#include "usm/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace usm;

namespace {

std::vector<Vec3> to_points(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    if (m.cols() != 3) throw InvalidInput("expected an N x 3 point array");
    std::vector<Vec3> pts(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) pts[i] = m.row(i).transpose();
    return pts;
}

Eigen::MatrixXd from_points(const std::vector<Vec3>& pts) {
    Eigen::MatrixXd m(pts.size(), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(i) = pts[i].transpose();
    return m;
}

}  // namespace

PYBIND11_MODULE(_usm, m) {
    m.doc() = "SDF shape + 9-DoF pose reconstruction with propagated uncertainties";

    py::register_exception<InvalidInput>(m, "InvalidInputError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<NumericalError>(m, "NumericalErrorAbort", PyExc_ArithmeticError);

    py::class_<Pose9>(m, "Pose9")
        .def(py::init<>())
        .def_readwrite("t", &Pose9::t)
        .def_readwrite("phi", &Pose9::phi)
        .def_readwrite("s", &Pose9::s)
        .def("matrix", &Pose9::matrix)
        .def("inverse_matrix", &Pose9::inverse_matrix)
        .def("to_vector", &Pose9::to_vector)
        .def_static("from_vector", &Pose9::from_vector)
        .def_static("from_matrix", &Pose9::from_matrix);

    py::class_<PoseGaussian>(m, "PoseGaussian")
        .def(py::init<>())
        .def_readwrite("xi", &PoseGaussian::xi)
        .def_readwrite("cov_diag", &PoseGaussian::cov_diag)
        .def("mean_pose", &PoseGaussian::mean_pose)
        .def_static("from_pose", &PoseGaussian::from_pose);

    py::class_<LatentGaussian>(m, "LatentGaussian")
        .def(py::init<>())
        .def_readwrite("mean", &LatentGaussian::mean)
        .def_readwrite("cov_diag", &LatentGaussian::cov_diag)
        .def_static("zeros", &LatentGaussian::zeros, py::arg("dim"), py::arg("var") = 0.0);

    m.def("exp_pose", &exp_pose, py::arg("xi"));
    m.def("transform_point", &transform_point);
    m.def("point_pose_jacobian", &point_pose_jacobian);

    py::class_<Decoder, std::shared_ptr<Decoder>>(m, "Decoder")
        .def_property_readonly("latent_dim", &Decoder::latent_dim)
        .def("decode", &Decoder::decode)
        .def("decode_grad",
             [](const Decoder& d, const VecX& z, const Vec3& p) {
                 VecX dz;
                 Vec3 dp;
                 const double s = d.decode_grad(z, p, dz, dp);
                 return py::make_tuple(s, dz, dp);
             })
        .def("canonical_bound", &Decoder::canonical_bound);

    m.def(
        "make_decoder",
        [](const std::string& selector, int latent_dim) {
            return std::shared_ptr<Decoder>(make_decoder(selector, latent_dim));
        },
        py::arg("selector"), py::arg("latent_dim") = 64);

    py::class_<SdfGaussian>(m, "SdfGaussian")
        .def_readonly("mean", &SdfGaussian::mean)
        .def_readonly("var", &SdfGaussian::var);

    m.def("sdf_distribution", &sdf_distribution);

    py::class_<EsConfig>(m, "EsConfig")
        .def(py::init<>())
        .def_readwrite("sample_count", &EsConfig::sample_count)
        .def_readwrite("seed", &EsConfig::seed);

    m.def(
        "energy_score_gaussian",
        [](double mu, double var, double target, const EsConfig& cfg) {
            return energy_score_gaussian(mu, var, target, cfg);
        },
        py::arg("mu"), py::arg("var"), py::arg("target"), py::arg("cfg") = EsConfig{});
    m.def("loss_3d",
          [](const Decoder& decoder, const LatentGaussian& z, const PoseGaussian& pose,
             const Eigen::Ref<const Eigen::MatrixXd>& points, const EsConfig& cfg) {
              const auto pts = to_points(points);
              return loss_3d(decoder, z, pose, pts, cfg);
          });
    m.def("latent_regularizer", &latent_regularizer);

    m.def("occupancy_from_sdf", &occupancy_from_sdf);
    m.def("logit_normal_pdf", &logit_normal_pdf);
    m.def("logit_normal_cdf", &logit_normal_cdf);
    m.def("logit_normal_quantile", &logit_normal_quantile);
    m.def("beta_moment_match", [](double mean, double var) {
        const BetaFit f = beta_moment_match(mean, var);
        const char* flag = f.flag == BetaFit::Flag::Ok                ? "ok"
                           : f.flag == BetaFit::Flag::ClampedVariance ? "clamped"
                                                                      : "degenerate";
        return py::make_tuple(f.alpha, f.beta, flag);
    });
    m.def("normal_quantile", &normal_quantile);
    m.def("erf_inv", &erf_inv);

    py::class_<RayConfig>(m, "RayConfig")
        .def(py::init<>())
        .def_readwrite("samples_per_ray", &RayConfig::samples_per_ray)
        .def_readwrite("d_min", &RayConfig::d_min)
        .def_readwrite("d_max", &RayConfig::d_max)
        .def_readwrite("surface_band", &RayConfig::surface_band)
        .def_readwrite("slope", &RayConfig::slope)
        .def_readwrite("sobol_count", &RayConfig::sobol_count)
        .def_readwrite("background_depth_factor", &RayConfig::background_depth_factor);

    py::class_<TerminationResult>(m, "TerminationResult")
        .def_readonly("mean", &TerminationResult::mean)
        .def_readonly("var", &TerminationResult::var)
        .def_readonly("draw_weights", &TerminationResult::draw_weights);

    py::class_<RayRender>(m, "RayRender")
        .def_readonly("termination", &RayRender::termination)
        .def_readonly("background_depth", &RayRender::background_depth)
        .def_readonly("depth_mean", &RayRender::depth_mean)
        .def_readonly("depth_var", &RayRender::depth_var)
        .def_property_readonly("sample_depths",
                               [](const RayRender& r) { return r.samples.depths; });

    py::class_<Intrinsics>(m, "Intrinsics")
        .def(py::init<>())
        .def_readwrite("fx", &Intrinsics::fx)
        .def_readwrite("fy", &Intrinsics::fy)
        .def_readwrite("cx", &Intrinsics::cx)
        .def_readwrite("cy", &Intrinsics::cy)
        .def_readwrite("width", &Intrinsics::width)
        .def_readwrite("height", &Intrinsics::height);

    py::class_<Renderer>(m, "Renderer")
        .def(py::init<RayConfig>())
        .def("termination_distributions",
             [](const Renderer& r, const std::vector<std::pair<double, double>>& sdf,
                std::uint64_t ray_seed) {
                 std::vector<SdfGaussian> gs(sdf.size());
                 for (std::size_t i = 0; i < sdf.size(); ++i)
                     gs[i] = SdfGaussian{sdf[i].first, sdf[i].second};
                 return r.termination_distributions(gs, ray_seed);
             })
        .def("render_pixel", &Renderer::render_pixel, py::arg("decoder"), py::arg("z"),
             py::arg("pose"), py::arg("u"), py::arg("v"), py::arg("intrinsics"), py::arg("t_wc"));

    py::class_<TriMesh>(m, "TriMesh")
        .def_property_readonly("vertices", [](const TriMesh& mesh) { return from_points(mesh.vertices); })
        .def_property_readonly("faces",
                               [](const TriMesh& mesh) {
                                   Eigen::MatrixXi f(mesh.faces.size(), 3);
                                   for (std::size_t i = 0; i < mesh.faces.size(); ++i)
                                       f.row(i) = mesh.faces[i].transpose();
                                   return f;
                               })
        .def("watertight", &mesh_watertight);

    m.def("extract_mesh", &extract_mesh);
    m.def("sample_mesh_surface", [](const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
        return from_points(sample_mesh_surface(mesh, count, seed));
    });
    m.def("write_obj", &write_obj);

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("gt_latent", &SynthSpec::gt_latent)
        .def_readwrite("gt_pose", &SynthSpec::gt_pose)
        .def_readwrite("views", &SynthSpec::views)
        .def_readwrite("ring_radius", &SynthSpec::ring_radius)
        .def_readwrite("elevation_deg", &SynthSpec::elevation_deg)
        .def_readwrite("image_size", &SynthSpec::image_size)
        .def_readwrite("noise_sigma", &SynthSpec::noise_sigma)
        .def_readwrite("seed", &SynthSpec::seed);

    m.def("generate_scene", &generate_scene);
    m.def("sphere_trace", &sphere_trace);

    py::class_<DepthFrame>(m, "DepthFrame")
        .def_readonly("intrinsics", &DepthFrame::intrinsics)
        .def_property_readonly("t_wc", [](const DepthFrame& f) { return f.t_wc; });

    py::class_<Scene>(m, "Scene")
        .def_readonly("frames", &Scene::frames)
        .def_readonly("has_ground_truth", &Scene::has_ground_truth)
        .def_readonly("gt_pose", &Scene::gt_pose)
        .def_readonly("gt_latent", &Scene::gt_latent);

    m.def("load_scene", &load_scene);
    m.def("back_project", [](const DepthFrame& f) { return from_points(back_project(f)); });
    m.def("assemble_world_points",
          [](const Scene& scene, std::size_t subsample, std::uint64_t seed) {
              return from_points(assemble_world_points(scene.frames, subsample, seed));
          });

    py::class_<OptimConfig>(m, "OptimConfig")
        .def(py::init<>())
        .def_readwrite("iters", &OptimConfig::iters)
        .def_readwrite("lr", &OptimConfig::lr)
        .def_readwrite("lambda_surface", &OptimConfig::lambda_surface)
        .def_readwrite("lambda_render", &OptimConfig::lambda_render)
        .def_readwrite("lambda_code", &OptimConfig::lambda_code)
        .def_readwrite("es", &OptimConfig::es)
        .def_readwrite("ray", &OptimConfig::ray)
        .def_readwrite("pixels_per_view", &OptimConfig::pixels_per_view)
        .def_readwrite("max_world_points", &OptimConfig::max_world_points)
        .def_readwrite("seed", &OptimConfig::seed);

    py::class_<LossTerms>(m, "LossTerms")
        .def_readonly("l3d", &LossTerms::l3d)
        .def_readonly("l2d", &LossTerms::l2d)
        .def_readonly("reg", &LossTerms::reg)
        .def_readonly("total", &LossTerms::total);

    py::class_<OptimState>(m, "OptimState")
        .def_readonly("z", &OptimState::z)
        .def_readonly("pose", &OptimState::pose)
        .def_readonly("iteration", &OptimState::iteration)
        .def_readonly("history", &OptimState::history);

    m.def(
        "fit",
        [](const Decoder& decoder, const Scene& scene, const OptimConfig& cfg,
           const std::optional<Pose9>& initial_pose) {
            return fit(decoder, scene.frames, cfg, initial_pose);
        },
        py::arg("decoder"), py::arg("scene"), py::arg("cfg"),
        py::arg("initial_pose") = std::nullopt);
    m.def("icp_init",
          [](const Eigen::Ref<const Eigen::MatrixXd>& canonical,
             const Eigen::Ref<const Eigen::MatrixXd>& observed, int max_iters) {
              const auto c = to_points(canonical);
              const auto o = to_points(observed);
              return icp_init(c, o, max_iters);
          });

    py::class_<PoseErrors>(m, "PoseErrors")
        .def_readonly("translation", &PoseErrors::translation)
        .def_readonly("rotation", &PoseErrors::rotation)
        .def_readonly("scale", &PoseErrors::scale);

    m.def("pose_error", &pose_error);
    m.def("pose_correct",
          [](const PoseErrors& e) { return pose_correct(e); });
    m.def("iou_3d", &iou_3d);
    m.def("chamfer", [](const Eigen::Ref<const Eigen::MatrixXd>& a,
                        const Eigen::Ref<const Eigen::MatrixXd>& b) {
        const auto pa = to_points(a);
        const auto pb = to_points(b);
        return chamfer(pa, pb);
    });
    m.def("uncertainty_correlation",
          [](const Decoder& decoder, const LatentGaussian& z, const PoseGaussian& pose,
             const Eigen::Ref<const Eigen::MatrixXd>& gt_points) {
              const auto pts = to_points(gt_points);
              return uncertainty_correlation(decoder, z, pose, pts).pearson_r;
          });

    m.attr("__version__") = "0.1.0";
}
