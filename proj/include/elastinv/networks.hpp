#pragma once

#include <cstdint>
#include <vector>

#include "elastinv/autodiff.hpp"

namespace elastinv {

/// Encoder-decoder settings. Output channels are [Lambda, M] (2) or
/// [Lambda, M, S_xx, S_yy, S_xy] (5).
struct UNetConfig {
    int in_channels = 3;
    int out_channels = 5;
    std::vector<int> channels{64, 128, 256, 512, 1024};
    std::uint64_t seed = 0;
    double bn_eps = 1e-5;

    [[nodiscard]] int levels() const { return static_cast<int>(channels.size()); }
    void validate() const;
};

/// Number of trainable scalars implied by the architecture:
///   encoder level l:  9 * c_in(l) * c_l + 9 * c_l^2 + 4 * c_l   (c_in(0) = in_channels)
///   decoder level l:  4 * c_{l+1} * c_l + 18 * c_l^2 + 9 * c_l^2 + 4 * c_l   (l < levels - 1)
///   head:             out_channels * c_0
std::size_t unet_parameter_count(const UNetConfig& cfg);

/// Smallest admissible input side for a level count: every level keeps at least one pixel.
int unet_min_side(int levels);

/// Conv weights are drawn uniformly in +-sqrt(6 / fan_in); batch-norm scales start at 1, shifts at 0.
class UNet {
public:
    explicit UNet(const UNetConfig& cfg);

    UNet(const UNet&) = delete;
    UNet& operator=(const UNet&) = delete;
    UNet(UNet&&) = default;
    UNet& operator=(UNet&&) = default;

    /// [in_channels, H, W] -> [out_channels, H, W].
    [[nodiscard]] Tensor forward(const Tensor& input) const;

    [[nodiscard]] const UNetConfig& config() const { return cfg_; }
    [[nodiscard]] std::vector<Parameter*> parameters();
    [[nodiscard]] std::size_t parameter_count() const;

    /// Shapes of the encoder feature maps for an input, deepest last (for tracing).
    [[nodiscard]] std::vector<std::pair<int, int>> encoder_trace(int h, int w) const;

    // Exposed for tests and checkpoints.
    struct DoubleConv {
        std::size_t conv1, bn1_gamma, bn1_beta, conv2, bn2_gamma, bn2_beta;
    };
    struct Up {
        std::size_t conv;  // 2x2
        DoubleConv block;
    };
    [[nodiscard]] const Parameter& param(std::size_t k) const { return params_[k]; }
    [[nodiscard]] Parameter& param(std::size_t k) { return params_[k]; }
    [[nodiscard]] std::size_t param_slots() const { return params_.size(); }
    [[nodiscard]] const DoubleConv& encoder_block(int level) const { return encoder_.at(level); }

private:
    friend void init_weights(std::uint64_t, UNet&);
    std::size_t add_conv(int cout, int cin, int k);
    DoubleConv add_double_conv(int cin, int cout);
    Tensor run_double_conv(const DoubleConv& dc, const Tensor& x) const;

    UNetConfig cfg_;
    std::vector<Parameter> params_;
    std::vector<DoubleConv> encoder_;
    std::vector<Up> decoder_;  // decoder_[l] produces level l (l = levels - 2 .. 0)
    std::size_t head_ = 0;
};

enum class Activation { tanh, relu };

/// Two fully connected networks on dimensionless coordinates: (X, Y) -> (Lambda, M) and
/// (X, Y) -> (S_xx, S_yy, S_xy).
struct MLPConfig {
    int hidden_layers = 4;
    int width = 64;
    Activation activation = Activation::tanh;
    std::uint64_t seed = 0;
};

struct PinnOutputs {
    Tensor params;    ///< [N, 2]: Lambda, M
    Tensor stresses;  ///< [N, 3]: S_xx, S_yy, S_xy
    Tensor dstress_dx;  ///< [N, 3], present when derivatives were requested
    Tensor dstress_dy;  ///< [N, 3]
};

class DensePinn {
public:
    explicit DensePinn(const MLPConfig& cfg);

    DensePinn(const DensePinn&) = delete;
    DensePinn& operator=(const DensePinn&) = delete;
    DensePinn(DensePinn&&) = default;
    DensePinn& operator=(DensePinn&&) = default;

    /// coords: [N, 2]. With `derivatives`, coordinate derivatives of the stress net are carried
    /// through the graph as tangents, so losses on them stay differentiable in the weights.
    [[nodiscard]] PinnOutputs forward(const Tensor& coords, bool derivatives = false) const;

    [[nodiscard]] std::vector<Parameter*> parameters();
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] const MLPConfig& config() const { return cfg_; }
    /// Direct access to the weights, e.g. to set them by hand in tests.
    [[nodiscard]] Parameter& param(std::size_t k) { return params_[k]; }
    [[nodiscard]] std::size_t param_slots() const { return params_.size(); }

private:
    friend void init_weights(std::uint64_t, DensePinn&);
    struct Layer {
        std::size_t weight;  // [in, out]
        std::size_t bias;    // [out]
    };
    std::vector<Layer> build(int out);
    struct Pass {
        Tensor out;
        Tensor dx;
        Tensor dy;
    };
    Pass run(const std::vector<Layer>& layers, const Tensor& coords, bool derivatives) const;

    MLPConfig cfg_;
    std::vector<Parameter> params_;
    std::vector<Layer> param_net_;
    std::vector<Layer> stress_net_;
};

/// Redraws every weight from `seed`: conv weights and relu-MLP weights uniform in
/// +-sqrt(6 / fan_in), tanh-MLP weights in +-sqrt(3 / fan_in), batch-norm gamma = 1 and beta = 0,
/// linear biases 0. Moment accumulators are left alone.
void init_weights(std::uint64_t seed, UNet& net);
void init_weights(std::uint64_t seed, DensePinn& net);

}  // namespace elastinv
