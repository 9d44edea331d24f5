#pragma once

// Hand-rolled decoders used as independent references in tests.

#include "usm/decoder.hpp"

namespace testsup {

/// s = a . z (ignores the query point). Linear-Gaussian propagation through
/// it has a closed form, which the variance tests exploit.
class LinearLatentDecoder : public usm::Decoder {
public:
    explicit LinearLatentDecoder(usm::VecX coeffs) : coeffs_(std::move(coeffs)) {
        spec_.kind = "test-linear";
        spec_.latent_dim = static_cast<int>(coeffs_.size());
    }
    const usm::DecoderSpec& spec() const override { return spec_; }
    double decode(const usm::VecX& z, const usm::Vec3&) const override {
        check_latent(z);
        return coeffs_.dot(z);
    }
    double decode_grad(const usm::VecX& z, const usm::Vec3&, usm::VecX& dz,
                       usm::Vec3& dp) const override {
        check_latent(z);
        dz = coeffs_;
        dp.setZero();
        return coeffs_.dot(z);
    }

private:
    usm::VecX coeffs_;
    usm::DecoderSpec spec_;
};

/// Exact SDF of an axis-aligned box with the given half-extents; latent inert.
class BoxDecoder : public usm::Decoder {
public:
    explicit BoxDecoder(usm::Vec3 half, int latent_dim = 4) : half_(half) {
        spec_.kind = "test-box";
        spec_.latent_dim = latent_dim;
    }
    const usm::DecoderSpec& spec() const override { return spec_; }
    double decode(const usm::VecX& z, const usm::Vec3& p) const override {
        check_latent(z);
        const usm::Vec3 q = p.cwiseAbs() - half_;
        const double outside = q.cwiseMax(0.0).norm();
        const double inside = std::min(q.maxCoeff(), 0.0);
        return outside + inside;
    }
    double decode_grad(const usm::VecX& z, const usm::Vec3& p, usm::VecX& dz,
                       usm::Vec3& dp) const override {
        const double h = 1e-6;
        dz = usm::VecX::Zero(spec_.latent_dim);
        for (int i = 0; i < 3; ++i) {
            usm::Vec3 pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            dp[i] = (decode(z, pp) - decode(z, pm)) / (2.0 * h);
        }
        return decode(z, p);
    }
    double canonical_bound(const usm::VecX&) const override { return half_.norm(); }

private:
    usm::Vec3 half_;
    usm::DecoderSpec spec_;
};

}  // namespace testsup
