#pragma once

#include "usm/decoder.hpp"
#include "usm/geometry.hpp"
#include "usm/ingestion.hpp"

#include <optional>
#include <string>

namespace usm {

/// Synthetic scene recipe: a ground-truth decoder state observed by a ring of
/// cameras looking at the object, with optional Gaussian depth noise.
struct SynthSpec {
    VecX gt_latent;
    Pose9 gt_pose;
    int views = 3;
    double ring_radius = 2.5;
    double elevation_deg = 25.0;
    double azimuth_span_deg = 360.0;  // cameras spread over this arc
    int image_size = 128;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (views < 1) throw InvalidInput("SynthSpec: views must be >= 1");
        if (noise_sigma < 0.0) throw InvalidInput("SynthSpec: noise must be nonnegative");
        if (image_size < 8) throw InvalidInput("SynthSpec: image_size must be >= 8");
        if (ring_radius <= 0.0) throw InvalidInput("SynthSpec: ring_radius must be positive");
    }
};

/// Marches a normalized world ray against the posed decoder SDF until
/// |sdf| < 1e-5 (hit, returns world distance) or the ray leaves max_t (miss).
/// Steps are scaled by 1/max(s) so anisotropic poses cannot overshoot.
std::optional<double> sphere_trace(const Decoder& decoder, const VecX& z, const Pose9& pose,
                                   const Vec3& origin_w, const Vec3& dir_w, double max_t);

/// Camera-to-world pose looking from eye toward target (world +z up).
Mat4 look_at(const Vec3& eye, const Vec3& target);

/// Renders depth/mask frames for the spec, writes PFM/PGM/text/manifest under
/// out_dir, and returns the manifest path. Byte-identical for equal seeds.
std::string generate_scene(const Decoder& decoder, const SynthSpec& spec,
                           const std::string& out_dir);

}  // namespace usm
