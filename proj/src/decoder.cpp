#include "usm/decoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace usm {

namespace {

constexpr double kOriginBall = 1e-9;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double softplus_deriv(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(double x, Activation a) {
    switch (a) {
        case Activation::Softplus: return softplus(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

double activate_deriv(double x, Activation a) {
    switch (a) {
        case Activation::Softplus: return softplus_deriv(x);
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

}  // namespace

AnalyticEllipsoidDecoder::AnalyticEllipsoidDecoder(int latent_dim) {
    if (latent_dim < 3) throw InvalidInput("AnalyticEllipsoidDecoder: latent_dim must be >= 3");
    spec_.kind = "analytic-ellipsoid";
    spec_.latent_dim = latent_dim;
}

Vec3 AnalyticEllipsoidDecoder::radii(const VecX& z) const {
    check_latent(z);
    return (0.5 * z.head<3>()).array().exp().matrix();
}

double AnalyticEllipsoidDecoder::canonical_bound(const VecX& z) const {
    return 1.1 * radii(z).maxCoeff();
}

double AnalyticEllipsoidDecoder::decode(const VecX& z, const Vec3& p) const {
    const Vec3 r = radii(z);
    if (p.norm() < kOriginBall) return -r.minCoeff();
    const Vec3 w = p.cwiseQuotient(r);
    const Vec3 q = w.cwiseQuotient(r);
    const double k0 = w.norm();
    const double k1 = q.norm();
    return k0 * (k0 - 1.0) / k1;
}

double AnalyticEllipsoidDecoder::decode_grad(const VecX& z, const Vec3& p, VecX& dz,
                                             Vec3& dp) const {
    const Vec3 r = radii(z);
    dz = VecX::Zero(latent_dim());
    if (p.norm() < kOriginBall) {
        int k = 0;
        r.minCoeff(&k);
        dp.setZero();
        dz[k] = -0.5 * r[k];
        return -r.minCoeff();
    }
    const Vec3 w = p.cwiseQuotient(r);
    const Vec3 q = w.cwiseQuotient(r);
    const double k0 = w.norm();
    const double k1 = q.norm();
    const double value = k0 * (k0 - 1.0) / k1;

    const double ds_dk0 = (2.0 * k0 - 1.0) / k1;
    const double ds_dk1 = -k0 * (k0 - 1.0) / (k1 * k1);
    for (int i = 0; i < 3; ++i) {
        const double dk0_dpi = w[i] / (k0 * r[i]);
        const double dk1_dpi = q[i] / (k1 * r[i] * r[i]);
        dp[i] = ds_dk0 * dk0_dpi + ds_dk1 * dk1_dpi;
        // dr_i/dz_i = r_i / 2
        const double dk0_dri = -w[i] * w[i] / (r[i] * k0);
        const double dk1_dri = -2.0 * q[i] * q[i] / (r[i] * k1);
        dz[i] = (ds_dk0 * dk0_dri + ds_dk1 * dk1_dri) * 0.5 * r[i];
    }
    return value;
}

MlpDecoder::MlpDecoder(DecoderSpec spec, std::vector<Layer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidInput("MlpDecoder: at least one layer required");
    const int input = spec_.latent_dim + 3;
    int cur = input;
    spec_.layer_widths.clear();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weights.cols() != cur)
            throw InvalidInput("MlpDecoder: layer " + std::to_string(i) + " expects input " +
                               std::to_string(l.weights.cols()) + ", got " + std::to_string(cur));
        if (l.biases.size() != l.weights.rows())
            throw InvalidInput("MlpDecoder: layer " + std::to_string(i) + " bias size mismatch");
        cur = static_cast<int>(l.weights.rows());
        if (i + 1 < layers_.size()) spec_.layer_widths.push_back(cur);
    }
    if (cur != 1) throw InvalidInput("MlpDecoder: final layer must output one value");
    spec_.kind = "mlp";
    spec_.latent_injection_layer = 0;
}

VecX MlpDecoder::forward(const VecX& z, const Vec3& p, std::vector<VecX>* pre) const {
    check_latent(z);
    VecX h(latent_dim() + 3);
    h << z, p;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        VecX a = layers_[i].weights * h + layers_[i].biases;
        if (pre) pre->push_back(a);
        if (i + 1 < layers_.size()) {
            for (Eigen::Index k = 0; k < a.size(); ++k) a[k] = activate(a[k], spec_.activation);
        } else {
            a[0] = std::tanh(a[0]);
        }
        h = std::move(a);
    }
    return h;
}

double MlpDecoder::decode(const VecX& z, const Vec3& p) const { return forward(z, p, nullptr)[0]; }

double MlpDecoder::decode_grad(const VecX& z, const Vec3& p, VecX& dz, Vec3& dp) const {
    std::vector<VecX> pre;
    pre.reserve(layers_.size());
    const double value = forward(z, p, &pre)[0];

    // Reverse accumulation: delta through the tanh output, then each layer.
    VecX delta(1);
    const double out_pre = pre.back()[0];
    const double th = std::tanh(out_pre);
    delta[0] = 1.0 - th * th;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        if (i + 1 < layers_.size()) {
            for (Eigen::Index k = 0; k < delta.size(); ++k)
                delta[k] *= activate_deriv(pre[i][k], spec_.activation);
        }
        delta = (layers_[i].weights.transpose() * delta).eval();
    }
    dz = delta.head(latent_dim());
    dp = delta.tail<3>();
    return value;
}

namespace {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& path, const std::string& field) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError("weight file " + path + ": truncated while reading " + field);
    return v;
}

}  // namespace

void save_mlp_weights(const MlpDecoder& decoder, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("weight file " + path + ": cannot open for writing");
    os.write("USMW", 4);
    write_raw<std::uint32_t>(os, 1u);
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(decoder.layers().size()));
    for (const auto& l : decoder.layers()) {
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(l.weights.rows()));
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(l.weights.cols()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                write_raw<float>(os, static_cast<float>(l.weights(r, c)));
        for (Eigen::Index r = 0; r < l.biases.size(); ++r)
            write_raw<float>(os, static_cast<float>(l.biases[r]));
    }
    write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(decoder.spec().activation));
    if (!os) throw FormatError("weight file " + path + ": write failed");
}

std::unique_ptr<MlpDecoder> load_mlp_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("weight file " + path + ": cannot open");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "USMW", 4) != 0)
        throw FormatError("weight file " + path + ": bad magic (expected USMW)");
    const auto version = read_raw<std::uint32_t>(is, path, "version");
    if (version != 1) throw FormatError("weight file " + path + ": unsupported version");
    const auto count = read_raw<std::uint32_t>(is, path, "layer count");
    if (count == 0 || count > 64) throw FormatError("weight file " + path + ": bad layer count");

    std::vector<MlpDecoder::Layer> layers;
    layers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto rows = read_raw<std::uint32_t>(is, path, "rows of layer " + std::to_string(i));
        const auto cols = read_raw<std::uint32_t>(is, path, "cols of layer " + std::to_string(i));
        if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536)
            throw FormatError("weight file " + path + ": bad dimensions in layer " +
                              std::to_string(i));
        MlpDecoder::Layer l;
        l.weights.resize(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c)
                l.weights(r, c) = read_raw<float>(is, path, "weights of layer " + std::to_string(i));
        l.biases.resize(rows);
        for (std::uint32_t r = 0; r < rows; ++r)
            l.biases[r] = read_raw<float>(is, path, "biases of layer " + std::to_string(i));
        layers.push_back(std::move(l));
    }
    const auto act = read_raw<std::uint8_t>(is, path, "activation code");
    if (act > 2) throw FormatError("weight file " + path + ": unknown activation code");

    DecoderSpec spec;
    spec.kind = "mlp";
    spec.activation = static_cast<Activation>(act);
    const int input = static_cast<int>(layers.front().weights.cols());
    if (input <= 3) throw FormatError("weight file " + path + ": first layer narrower than a query point");
    spec.latent_dim = input - 3;
    try {
        return std::make_unique<MlpDecoder>(spec, std::move(layers));
    } catch (const InvalidInput& e) {
        throw FormatError("weight file " + path + ": " + e.what());
    }
}

std::unique_ptr<Decoder> make_decoder(const std::string& selector, int latent_dim) {
    if (selector == "analytic") return std::make_unique<AnalyticEllipsoidDecoder>(latent_dim);
    if (selector.rfind("mlp:", 0) == 0) return load_mlp_weights(selector.substr(4));
    throw InvalidInput("decoder selector must be 'analytic' or 'mlp:<path>', got '" + selector +
                       "'");
}

}  // namespace usm
