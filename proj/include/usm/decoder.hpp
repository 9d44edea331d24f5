#pragma once

#include "usm/common.hpp"

#include <memory>
#include <string>

namespace usm {

/// Diagonal Gaussian over the latent shape code.
struct LatentGaussian {
    VecX mean;
    VecX cov_diag;

    static LatentGaussian zeros(int dim, double var = 0.0) {
        LatentGaussian g;
        g.mean = VecX::Zero(dim);
        g.cov_diag = VecX::Constant(dim, var);
        return g;
    }
    void validate() const {
        if (mean.size() != cov_diag.size())
            throw InvalidInput("LatentGaussian: mean/cov size mismatch");
        if ((cov_diag.array() < 0.0).any())
            throw InvalidInput("LatentGaussian: covariance diagonal must be nonnegative");
    }
};

enum class Activation : std::uint8_t { Softplus = 0, Relu = 1, Tanh = 2 };

/// Architecture summary carried by decoders and weight files.
struct DecoderSpec {
    std::string kind;  // "analytic-ellipsoid" | "mlp"
    int latent_dim = 64;
    std::vector<int> layer_widths;        // hidden widths, mlp only
    Activation activation = Activation::Softplus;
    int latent_injection_layer = 0;       // 0 = concatenated at the input
};

/// Latent-conditioned SDF with first derivatives. Immutable after
/// construction; decode calls are safe from any thread.
class Decoder {
public:
    virtual ~Decoder() = default;

    virtual const DecoderSpec& spec() const = 0;
    int latent_dim() const { return spec().latent_dim; }

    /// SDF value at an object-frame point (negative inside).
    virtual double decode(const VecX& z, const Vec3& p) const = 0;

    /// Value plus exact first derivatives d_s/d_z and d_s/d_p.
    virtual double decode_grad(const VecX& z, const Vec3& p, VecX& dz, Vec3& dp) const = 0;

    /// Radius of a canonical-frame ball that bounds the shape for this code.
    virtual double canonical_bound(const VecX& /*z*/) const { return 1.1; }

protected:
    void check_latent(const VecX& z) const {
        if (z.size() != latent_dim())
            throw InvalidInput("decoder: latent size " + std::to_string(z.size()) +
                               " does not match latent_dim " + std::to_string(latent_dim()));
    }
};

/// Analytic latent-ellipsoid SDF: radii r = exp(0.5 * z[0..2]); z = 0 is the
/// unit sphere (exact distance), other codes use the smooth k0(k0-1)/k1
/// approximation. Latent components past the first three do not change the
/// shape.
class AnalyticEllipsoidDecoder : public Decoder {
public:
    explicit AnalyticEllipsoidDecoder(int latent_dim = 64);

    const DecoderSpec& spec() const override { return spec_; }
    double decode(const VecX& z, const Vec3& p) const override;
    double decode_grad(const VecX& z, const Vec3& p, VecX& dz, Vec3& dp) const override;
    double canonical_bound(const VecX& z) const override;

    Vec3 radii(const VecX& z) const;

private:
    DecoderSpec spec_;
};

/// Fully-connected SDF decoder with the latent code concatenated to the query
/// point at the input, hidden activations per spec, and a tanh output.
class MlpDecoder : public Decoder {
public:
    struct Layer {
        MatX weights;  // rows x cols
        VecX biases;
    };

    MlpDecoder(DecoderSpec spec, std::vector<Layer> layers);

    const DecoderSpec& spec() const override { return spec_; }
    double decode(const VecX& z, const Vec3& p) const override;
    double decode_grad(const VecX& z, const Vec3& p, VecX& dz, Vec3& dp) const override;

    const std::vector<Layer>& layers() const { return layers_; }

private:
    VecX forward(const VecX& z, const Vec3& p, std::vector<VecX>* pre) const;

    DecoderSpec spec_;
    std::vector<Layer> layers_;
};

/// Weight file ("USMW"): version u32, layer count u32, per layer rows u32,
/// cols u32, row-major f32 weights, f32 biases; then activation code u8.
/// Little-endian throughout; loads bit-exactly.
std::unique_ptr<MlpDecoder> load_mlp_weights(const std::string& path);
void save_mlp_weights(const MlpDecoder& decoder, const std::string& path);

/// Builds a decoder from a CLI selector: "analytic" or "mlp:<path>".
std::unique_ptr<Decoder> make_decoder(const std::string& selector, int latent_dim = 64);

}  // namespace usm
