#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <vector>

#include "smashvat/grid.hpp"

namespace smashvat {

enum class NeuronMode { ReLU, LIF };

struct LIFParams {
    enum class Reset { SoftSubtract, HardToRest };
    double tau = 2.0;
    double v_rest = 0.0;
    double v_threshold = 0.5;
    Reset reset_mode = Reset::SoftSubtract;
    int timesteps = 4;
    double surrogate_width = 2.0;  // the width parameter of the spike surrogate
};

/// Surrogate derivative of the spike nonlinearity at membrane distance x
/// from threshold: 0 outside |x| <= 1/alpha, else alpha - alpha^2 * |x|.
/// Peaks at alpha for x = 0 and integrates to 1.
template <typename Scalar>
Scalar surrogate_grad(Scalar x, Scalar alpha) {
    Scalar ax = std::abs(x);
    if (ax > Scalar(1) / alpha) return Scalar(0);
    return alpha - alpha * alpha * ax;
}

namespace detail {

/// Static geometry of one 3x3, stride-1 convolution plus the im2col gather
/// table. Patch rows are ordered pixel-major (kernel pixel outer, input
/// channel inner), so each of the 9 kernel pixels maps to a contiguous run
/// of in_c scalars in both the patch column and the channel-major activation
/// block; im2col/col2im then reduce to block copies.
struct ConvGeom {
    int in_c, in_h, in_w, out_c, out_h, out_w, pad;
    int patch() const { return in_c * 9; }
    int out_positions() const { return out_h * out_w; }
    int in_positions() const { return in_h * in_w; }
    // (pixel, p) -> flat offset of that pixel's channel run inside one
    // sample's in_c x in_positions() column-major block, or -1 for padding.
    Eigen::MatrixXi pixel_off;

    ConvGeom(int ic, int ih, int iw, int oc, int p)
        : in_c(ic), in_h(ih), in_w(iw), out_c(oc),
          out_h(ih + 2 * p - 2), out_w(iw + 2 * p - 2), pad(p) {
        pixel_off.resize(9, out_positions());
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                int op = oy * out_w + ox;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        int iy = oy + ky - pad, ix = ox + kx - pad;
                        bool out_of_range = iy < 0 || iy >= in_h || ix < 0 || ix >= in_w;
                        pixel_off(ky * 3 + kx, op) =
                            out_of_range ? -1 : (iy * in_w + ix) * in_c;
                    }
            }
    }
};

inline const ConvGeom& conv_geom(int layer) {
    static const ConvGeom g1(kObsChannels, kRows, kCols, 16, 1);
    static const ConvGeom g2(16, 7, 5, 32, 0);
    static const ConvGeom g3(32, 5, 3, 64, 0);
    switch (layer) {
        case 0: return g1;
        case 1: return g2;
        case 2: return g3;
    }
    throw std::logic_error("conv layer index out of range");
}

}  // namespace detail

/// Trainable parameters of the fixed Q-network:
/// 3x7x5 -> conv(16,3x3,p1) -> conv(32,3x3) -> conv(64,3x3) -> global average
/// pool -> fc 64->128 -> fc 128->6. Conv weights are stored im2col-style as
/// out_channels x (in_channels*9).
template <typename Scalar>
struct NetworkParams {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Mat conv1_w, conv2_w, conv3_w, fc1_w, fc2_w;
    Vec conv1_b, conv2_b, conv3_b, fc1_b, fc2_b;
    NeuronMode mode = NeuronMode::ReLU;

    static NetworkParams zeros(NeuronMode mode = NeuronMode::ReLU) {
        NetworkParams p;
        p.mode = mode;
        p.conv1_w = Mat::Zero(16, 27);
        p.conv2_w = Mat::Zero(32, 144);
        p.conv3_w = Mat::Zero(64, 288);
        p.fc1_w = Mat::Zero(128, 64);
        p.fc2_w = Mat::Zero(6, 128);
        p.conv1_b = Vec::Zero(16);
        p.conv2_b = Vec::Zero(32);
        p.conv3_b = Vec::Zero(64);
        p.fc1_b = Vec::Zero(128);
        p.fc2_b = Vec::Zero(6);
        return p;
    }

    /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for weights and biases,
    /// seeded. Keeping the initial Q outputs small matters here: the reward
    /// signal is at most 0.1 per step, and bootstrapped targets built from
    /// large random initial values take thousands of optimize steps to wash
    /// out at the pinned learning rate.
    static NetworkParams init(std::uint64_t seed, NeuronMode mode = NeuronMode::ReLU) {
        NetworkParams p = zeros(mode);
        std::mt19937_64 rng(seed);
        auto fill = [&rng](auto& w, Eigen::Index fan_in) {
            double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = Scalar(dist(rng));
        };
        fill(p.conv1_w, p.conv1_w.cols());
        fill(p.conv1_b, p.conv1_w.cols());
        fill(p.conv2_w, p.conv2_w.cols());
        fill(p.conv2_b, p.conv2_w.cols());
        fill(p.conv3_w, p.conv3_w.cols());
        fill(p.conv3_b, p.conv3_w.cols());
        fill(p.fc1_w, p.fc1_w.cols());
        fill(p.fc1_b, p.fc1_w.cols());
        fill(p.fc2_w, p.fc2_w.cols());
        fill(p.fc2_b, p.fc2_w.cols());
        return p;
    }

    template <typename F>
    void for_each(F f) {
        f(conv1_w); f(conv1_b); f(conv2_w); f(conv2_b); f(conv3_w); f(conv3_b);
        f(fc1_w); f(fc1_b); f(fc2_w); f(fc2_b);
    }
    template <typename F>
    void for_each(F f) const {
        f(conv1_w); f(conv1_b); f(conv2_w); f(conv2_b); f(conv3_w); f(conv3_b);
        f(fc1_w); f(fc1_b); f(fc2_w); f(fc2_b);
    }

    friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
        bool eq = a.mode == b.mode;
        eq = eq && a.conv1_w == b.conv1_w && a.conv1_b == b.conv1_b;
        eq = eq && a.conv2_w == b.conv2_w && a.conv2_b == b.conv2_b;
        eq = eq && a.conv3_w == b.conv3_w && a.conv3_b == b.conv3_b;
        eq = eq && a.fc1_w == b.fc1_w && a.fc1_b == b.fc1_b;
        eq = eq && a.fc2_w == b.fc2_w && a.fc2_b == b.fc2_b;
        return eq;
    }
};

/// Gradients mirroring NetworkParams shapes.
template <typename Scalar>
using GradientBundle = NetworkParams<Scalar>;

/// Forward/backward engine. One instance caches exactly one forward pass;
/// backward() must follow a forward() with the same parameters.
template <typename Scalar>
class Network {
public:
    using Mat = typename NetworkParams<Scalar>::Mat;
    using Vec = typename NetworkParams<Scalar>::Vec;

    explicit Network(NetworkParams<Scalar> params, LIFParams lif = {})
        : params_(std::move(params)), lif_(lif) {
        if (lif_.tau <= 0) throw std::invalid_argument("LIF tau must be positive");
        if (lif_.timesteps < 1) throw std::invalid_argument("LIF timesteps must be >= 1");
        if (lif_.surrogate_width <= 0)
            throw std::invalid_argument("LIF surrogate width must be positive");
    }

    NetworkParams<Scalar>& params() { return params_; }
    const NetworkParams<Scalar>& params() const { return params_; }
    const LIFParams& lif() const { return lif_; }

    /// batch: kObsSize x B observations as columns; returns 6 x B Q-values.
    Mat forward(const Mat& batch) {
        if (batch.rows() != kObsSize) throw std::invalid_argument("bad observation size");
        batch_ = static_cast<int>(batch.cols());
        if (params_.mode == NeuronMode::ReLU) return forward_relu(batch);
        return forward_lif(batch);
    }

    /// upstream: 6 x B dLoss/dOutput. Returns parameter gradients.
    GradientBundle<Scalar> backward(const Mat& upstream) {
        if (batch_ < 0) throw std::logic_error("backward() without a cached forward()");
        if (upstream.rows() != 6 || upstream.cols() != batch_)
            throw std::invalid_argument("upstream gradient shape mismatch");
        return params_.mode == NeuronMode::ReLU ? backward_relu(upstream)
                                                : backward_lif(upstream);
    }

private:
    // Layer activations are channels x (B * positions), sample-major columns.
    struct ConvCache {
        Mat patches;  // patch x (B * out_positions)
        Mat pre;      // out_c x (B * out_positions), pre-nonlinearity
    };
    struct StepCache {
        ConvCache conv[3];
        Mat spikes[3];   // post-nonlinearity conv outputs
        Mat pooled;      // 64 x B
        Mat fc1_pre;     // 128 x B
        Mat fc1_out;     // post-nonlinearity
        Mat membrane[4]; // LIF: membrane before threshold at each site
    };

    // kObsSize x B input columns -> channels x (B * positions) activation
    // layout shared by every conv layer.
    Mat to_channel_major(const Mat& batch) const {
        constexpr int ip = kRows * kCols;
        Mat act(kObsChannels, static_cast<Eigen::Index>(batch_) * ip);
        for (int b = 0; b < batch_; ++b)
            for (int c = 0; c < kObsChannels; ++c)
                act.block(c, static_cast<Eigen::Index>(b) * ip, 1, ip) =
                    batch.block(c * ip, b, ip, 1).transpose();
        return act;
    }

    Mat im2col(int layer, const Mat& act) const {
        const auto& g = detail::conv_geom(layer);
        const int op = g.out_positions(), ip = g.in_positions(), pk = g.patch();
        const int ic = g.in_c;
        Mat patches(pk, static_cast<Eigen::Index>(batch_) * op);
        const int* offs = g.pixel_off.data();
        for (int b = 0; b < batch_; ++b) {
            const Scalar* sample = act.data() + static_cast<Eigen::Index>(b) * ip * ic;
            Scalar* out = patches.data() + static_cast<Eigen::Index>(b) * op * pk;
            for (int p = 0; p < op; ++p) {
                const int* po = offs + static_cast<Eigen::Index>(p) * 9;
                Scalar* col = out + static_cast<Eigen::Index>(p) * pk;
                for (int k = 0; k < 9; ++k, col += ic) {
                    if (po[k] < 0)
                        std::fill(col, col + ic, Scalar(0));
                    else
                        std::copy(sample + po[k], sample + po[k] + ic, col);
                }
            }
        }
        return patches;
    }

    Mat col2im(int layer, const Mat& dpatches) const {
        const auto& g = detail::conv_geom(layer);
        const int op = g.out_positions(), ip = g.in_positions(), pk = g.patch();
        const int ic = g.in_c;
        Mat dact = Mat::Zero(ic, static_cast<Eigen::Index>(batch_) * ip);
        const int* offs = g.pixel_off.data();
        for (int b = 0; b < batch_; ++b) {
            Scalar* sample = dact.data() + static_cast<Eigen::Index>(b) * ip * ic;
            const Scalar* in = dpatches.data() + static_cast<Eigen::Index>(b) * op * pk;
            for (int p = 0; p < op; ++p) {
                const int* po = offs + static_cast<Eigen::Index>(p) * 9;
                const Scalar* col = in + static_cast<Eigen::Index>(p) * pk;
                for (int k = 0; k < 9; ++k, col += ic) {
                    if (po[k] < 0) continue;
                    Scalar* dst = sample + po[k];
                    for (int c = 0; c < ic; ++c) dst[c] += col[c];
                }
            }
        }
        return dact;
    }

    const Mat& conv_w(int layer) const {
        return layer == 0 ? params_.conv1_w : layer == 1 ? params_.conv2_w : params_.conv3_w;
    }
    const Vec& conv_b(int layer) const {
        return layer == 0 ? params_.conv1_b : layer == 1 ? params_.conv2_b : params_.conv3_b;
    }

    Mat conv_pre(int layer, const Mat& act, ConvCache& cache) {
        cache.patches = im2col(layer, act);
        cache.pre = (conv_w(layer) * cache.patches).colwise() + conv_b(layer);
        return cache.pre;
    }

    Mat pool(const Mat& act) const {  // channels x (B*P) -> channels x B
        int p = detail::conv_geom(2).out_positions();
        Mat out(act.rows(), batch_);
        for (int b = 0; b < batch_; ++b)
            out.col(b) = act.middleCols(static_cast<Eigen::Index>(b) * p, p).rowwise().mean();
        return out;
    }

    Mat unpool(const Mat& dout) const {
        int p = detail::conv_geom(2).out_positions();
        Mat dact(dout.rows(), static_cast<Eigen::Index>(batch_) * p);
        for (int b = 0; b < batch_; ++b)
            dact.middleCols(static_cast<Eigen::Index>(b) * p, p) =
                (dout.col(b) / Scalar(p)).replicate(1, p);
        return dact;
    }

    Mat forward_relu(const Mat& batch) {
        steps_.assign(1, StepCache{});
        StepCache& sc = steps_[0];
        Mat act = to_channel_major(batch);
        for (int l = 0; l < 3; ++l) {
            conv_pre(l, act, sc.conv[l]);
            sc.spikes[l] = sc.conv[l].pre.cwiseMax(Scalar(0));
            act = sc.spikes[l];
        }
        sc.pooled = pool(act);
        sc.fc1_pre = (params_.fc1_w * sc.pooled).colwise() + params_.fc1_b;
        sc.fc1_out = sc.fc1_pre.cwiseMax(Scalar(0));
        return (params_.fc2_w * sc.fc1_out).colwise() + params_.fc2_b;
    }

    GradientBundle<Scalar> backward_relu(const Mat& upstream) {
        const StepCache& sc = steps_[0];
        GradientBundle<Scalar> g = GradientBundle<Scalar>::zeros(params_.mode);
        g.fc2_w = upstream * sc.fc1_out.transpose();
        g.fc2_b = upstream.rowwise().sum();
        Mat d = params_.fc2_w.transpose() * upstream;
        d = d.cwiseProduct((sc.fc1_pre.array() > 0).template cast<Scalar>().matrix());
        g.fc1_w = d * sc.pooled.transpose();
        g.fc1_b = d.rowwise().sum();
        Mat dact = unpool(params_.fc1_w.transpose() * d);
        Mat* gw[] = {&g.conv1_w, &g.conv2_w, &g.conv3_w};
        Vec* gb[] = {&g.conv1_b, &g.conv2_b, &g.conv3_b};
        for (int l = 2; l >= 0; --l) {
            dact = dact.cwiseProduct((sc.conv[l].pre.array() > 0).template cast<Scalar>().matrix());
            *gw[l] = dact * sc.conv[l].patches.transpose();
            *gb[l] = dact.rowwise().sum();
            if (l > 0) dact = col2im(l, conv_w(l).transpose() * dact);
        }
        return g;
    }

    // --- LIF mode -----------------------------------------------------------
    // Direct encoding: the observation drives every timestep. Sites after
    // conv1..3 and fc1 hold membranes integrating
    //   u <- u + (1/tau) * (-(u - u_rest) + I)
    // and emit a binary spike on crossing v_threshold; fc2 reads the fc1
    // spikes linearly and the Q-value is the mean readout over timesteps.

    Mat lif_site(const Mat& current, Mat& membrane_state, Mat& cached_membrane) {
        Scalar inv_tau = Scalar(1.0 / lif_.tau);
        Scalar rest = Scalar(lif_.v_rest);
        Scalar thresh = Scalar(lif_.v_threshold);
        if (membrane_state.size() == 0)
            membrane_state = Mat::Constant(current.rows(), current.cols(), rest);
        membrane_state += inv_tau * ((rest - membrane_state.array()).matrix() + current);
        cached_membrane = membrane_state;
        Mat spikes = (membrane_state.array() >= thresh).template cast<Scalar>().matrix();
        if (lif_.reset_mode == LIFParams::Reset::SoftSubtract)
            membrane_state -= thresh * spikes;
        else
            membrane_state =
                membrane_state.cwiseProduct(Mat::Constant(spikes.rows(), spikes.cols(), Scalar(1)) -
                                            spikes) +
                rest * spikes;
        return spikes;
    }

    Mat forward_lif(const Mat& batch) {
        int T = lif_.timesteps;
        steps_.assign(T, StepCache{});
        Mat membranes[4];  // running state per site
        Mat out = Mat::Zero(6, batch_);
        Mat input = to_channel_major(batch);  // direct encoding: same every step
        for (int t = 0; t < T; ++t) {
            StepCache& sc = steps_[t];
            Mat act = input;
            for (int l = 0; l < 3; ++l) {
                conv_pre(l, act, sc.conv[l]);
                sc.spikes[l] = lif_site(sc.conv[l].pre, membranes[l], sc.membrane[l]);
                act = sc.spikes[l];
            }
            sc.pooled = pool(act);
            sc.fc1_pre = (params_.fc1_w * sc.pooled).colwise() + params_.fc1_b;
            sc.fc1_out = lif_site(sc.fc1_pre, membranes[3], sc.membrane[3]);
            out += (params_.fc2_w * sc.fc1_out).colwise() + params_.fc2_b;
        }
        return out / Scalar(T);
    }

    GradientBundle<Scalar> backward_lif(const Mat& upstream) {
        int T = lif_.timesteps;
        Scalar inv_tau = Scalar(1.0 / lif_.tau);
        Scalar decay = Scalar(1) - inv_tau;
        Scalar thresh = Scalar(lif_.v_threshold);
        Scalar alpha = Scalar(lif_.surrogate_width);
        GradientBundle<Scalar> g = GradientBundle<Scalar>::zeros(params_.mode);
        Mat scaled = upstream / Scalar(T);

        // dLoss/d(post-reset membrane carried into the next timestep), per site
        Mat carry[4];
        Mat* gw[] = {&g.conv1_w, &g.conv2_w, &g.conv3_w};
        Vec* gb[] = {&g.conv1_b, &g.conv2_b, &g.conv3_b};
        for (int t = T - 1; t >= 0; --t) {
            const StepCache& sc = steps_[t];
            g.fc2_w += scaled * sc.fc1_out.transpose();
            g.fc2_b += scaled.rowwise().sum();
            Mat dspike = params_.fc2_w.transpose() * scaled;
            Mat dcur = site_backward(dspike, sc.membrane[3], carry[3], decay, inv_tau, thresh,
                                     alpha);
            g.fc1_w += dcur * sc.pooled.transpose();
            g.fc1_b += dcur.rowwise().sum();
            Mat dact = unpool(params_.fc1_w.transpose() * dcur);
            for (int l = 2; l >= 0; --l) {
                dcur = site_backward(dact, sc.membrane[l], carry[l], decay, inv_tau, thresh,
                                     alpha);
                *gw[l] += dcur * sc.conv[l].patches.transpose();
                *gb[l] += dcur.rowwise().sum();
                if (l > 0) dact = col2im(l, conv_w(l).transpose() * dcur);
            }
        }
        return g;
    }

    /// One-site BPTT step: combines the external spike gradient with the
    /// membrane gradient carried from timestep t+1, differentiates spike and
    /// reset via the surrogate, updates the carry for timestep t-1, and
    /// returns dLoss/dI[t] = (1/tau) * dLoss/du[t].
    Mat site_backward(const Mat& dspike, const Mat& membrane, Mat& carry, Scalar decay,
                      Scalar inv_tau, Scalar thresh, Scalar alpha) {
        if (carry.size() == 0) carry = Mat::Zero(membrane.rows(), membrane.cols());
        Mat surr = membrane.unaryExpr(
            [thresh, alpha](Scalar u) { return surrogate_grad<Scalar>(u - thresh, alpha); });
        Mat du;
        if (lif_.reset_mode == LIFParams::Reset::SoftSubtract) {
            // u_post = u - thresh * spike(u)
            du = dspike.cwiseProduct(surr) +
                 carry - thresh * carry.cwiseProduct(surr);
        } else {
            // u_post = u * (1 - spike(u)) + rest * spike(u)
            Mat spikes = (membrane.array() >= thresh).template cast<Scalar>().matrix();
            Mat ones = Mat::Constant(membrane.rows(), membrane.cols(), Scalar(1));
            du = dspike.cwiseProduct(surr) +
                 carry.cwiseProduct(ones - spikes) +
                 carry.cwiseProduct(surr).cwiseProduct(
                     (Scalar(lif_.v_rest) * ones - membrane));
        }
        carry = decay * du;
        return inv_tau * du;
    }

    NetworkParams<Scalar> params_;
    LIFParams lif_;
    int batch_ = -1;
    std::vector<StepCache> steps_;
};

/// Adam with bias correction; refuses non-finite gradients.
template <typename Scalar>
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(NetworkParams<Scalar>& params, const GradientBundle<Scalar>& grads) {
        bool finite = true;
        grads.for_each([&finite](const auto& g) { finite = finite && g.allFinite(); });
        if (!finite) throw std::runtime_error("optimizer_step: non-finite gradients");
        if (m_.empty()) {
            params.for_each([this](const auto& p) {
                m_.emplace_back(p.rows(), p.cols());
                m_.back().setZero();
                v_.emplace_back(p.rows(), p.cols());
                v_.back().setZero();
            });
        }
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        std::size_t idx = 0;
        std::vector<Dyn> flat = collect(grads);
        params.for_each([&](auto& p) {
            auto& m = m_[idx];
            auto& v = v_[idx];
            const Dyn& g = flat[idx];
            m = Scalar(beta1_) * m + Scalar(1 - beta1_) * g;
            v = Scalar(beta2_) * v + Scalar(1 - beta2_) * g.cwiseProduct(g);
            auto mhat = (m / Scalar(bc1)).array();
            auto vhat = (v / Scalar(bc2)).array();
            p.array() -= Scalar(lr_) * mhat / (vhat.sqrt() + Scalar(eps_));
            ++idx;
        });
    }

private:
    using Dyn = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    static std::vector<Dyn> collect(const GradientBundle<Scalar>& grads) {
        // Biases are column vectors; view everything as dynamic matrices.
        std::vector<Dyn> out;
        grads.for_each([&out](const auto& g) { out.emplace_back(g); });
        return out;
    }

    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Dyn> m_, v_;
};

/// Deep value copy (Alg.-style target sync).
template <typename Scalar>
NetworkParams<Scalar> copy_params(const NetworkParams<Scalar>& src) {
    return src;
}

/// Versioned flat binary checkpoint; arrays stored as fp32.
void save_params(std::ostream& out, const NetworkParams<float>& params, const LIFParams& lif);
NetworkParams<float> load_params(std::istream& in, LIFParams& lif);

}  // namespace smashvat
