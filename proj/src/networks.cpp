#include "elastinv/networks.hpp"

#include <cmath>
#include <random>

#include "elastinv/grid.hpp"

namespace elastinv {

void UNetConfig::validate() const {
    if (in_channels < 1) throw InvalidArgument("UNet needs at least one input channel");
    if (out_channels != 2 && out_channels != 5) throw InvalidArgument("UNet output channels must be 2 or 5");
    if (channels.empty()) throw InvalidArgument("UNet channel schedule is empty");
    for (std::size_t l = 0; l < channels.size(); ++l) {
        if (channels[l] < 1) throw InvalidArgument("UNet channel widths must be positive");
        if (l > 0 && channels[l] <= channels[l - 1]) {
            throw InvalidArgument("UNet channel widths must strictly increase with depth");
        }
    }
}

std::size_t unet_parameter_count(const UNetConfig& cfg) {
    std::size_t n = 0;
    int cin = cfg.in_channels;
    for (int c : cfg.channels) {
        n += 9ull * cin * c + 9ull * c * c + 4ull * c;
        cin = c;
    }
    for (int l = 0; l + 1 < cfg.levels(); ++l) {
        const std::size_t c = cfg.channels[l];
        const std::size_t up = cfg.channels[l + 1];
        n += 4 * up * c + 18 * c * c + 9 * c * c + 4 * c;
    }
    n += static_cast<std::size_t>(cfg.out_channels) * cfg.channels[0];
    return n;
}

int unet_min_side(int levels) { return 1 << (levels - 1); }

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int cin = cfg_.in_channels;
    for (int c : cfg_.channels) {
        encoder_.push_back(add_double_conv(cin, c));
        cin = c;
    }
    decoder_.resize(static_cast<std::size_t>(cfg_.levels() - 1));
    for (int l = cfg_.levels() - 2; l >= 0; --l) {
        const int c = cfg_.channels[l];
        decoder_[l].conv = add_conv(c, cfg_.channels[l + 1], 2);
        decoder_[l].block = add_double_conv(2 * c, c);
    }
    head_ = add_conv(cfg_.out_channels, cfg_.channels[0], 1);
    init_weights(cfg_.seed, *this);
}

std::size_t UNet::add_conv(int cout, int cin, int k) {
    params_.emplace_back(Shape{cout, cin, k, k}, std::vector<double>(static_cast<std::size_t>(cout) * cin * k * k));
    return params_.size() - 1;
}

UNet::DoubleConv UNet::add_double_conv(int cin, int cout) {
    DoubleConv dc{};
    dc.conv1 = add_conv(cout, cin, 3);
    params_.emplace_back(Shape{cout}, std::vector<double>(cout, 1.0));
    dc.bn1_gamma = params_.size() - 1;
    params_.emplace_back(Shape{cout}, std::vector<double>(cout, 0.0));
    dc.bn1_beta = params_.size() - 1;
    dc.conv2 = add_conv(cout, cout, 3);
    params_.emplace_back(Shape{cout}, std::vector<double>(cout, 1.0));
    dc.bn2_gamma = params_.size() - 1;
    params_.emplace_back(Shape{cout}, std::vector<double>(cout, 0.0));
    dc.bn2_beta = params_.size() - 1;
    return dc;
}

Tensor UNet::run_double_conv(const DoubleConv& dc, const Tensor& x) const {
    using namespace ops;
    Tensor h = conv2d(x, params_[dc.conv1].tensor(), 1, 1);
    h = relu(batchnorm2d(h, params_[dc.bn1_gamma].tensor(), params_[dc.bn1_beta].tensor(), cfg_.bn_eps));
    h = conv2d(h, params_[dc.conv2].tensor(), 1, 1);
    return relu(batchnorm2d(h, params_[dc.bn2_gamma].tensor(), params_[dc.bn2_beta].tensor(), cfg_.bn_eps));
}

std::vector<std::pair<int, int>> UNet::encoder_trace(int h, int w) const {
    std::vector<std::pair<int, int>> out{{h, w}};
    for (int l = 1; l < cfg_.levels(); ++l) {
        h /= 2;
        w /= 2;
        out.emplace_back(h, w);
    }
    return out;
}

Tensor UNet::forward(const Tensor& input) const {
    using namespace ops;
    if (input.shape().size() != 3 || input.dim(0) != cfg_.in_channels) {
        throw InvalidArgument("UNet input must be [" + std::to_string(cfg_.in_channels) + ", H, W], got " +
                              shape_str(input.shape()));
    }
    const int min_side = unet_min_side(cfg_.levels());
    if (input.dim(1) < min_side || input.dim(2) < min_side) {
        throw InvalidArgument("UNet input " + shape_str(input.shape()) + " is too small for " +
                              std::to_string(cfg_.levels()) + " levels (need >= " + std::to_string(min_side) + ")");
    }
    std::vector<Tensor> skips;
    Tensor x = input;
    for (int l = 0; l < cfg_.levels(); ++l) {
        x = run_double_conv(encoder_[l], x);
        if (l + 1 < cfg_.levels()) {
            skips.push_back(x);
            x = maxpool2(x);
        }
    }
    for (int l = cfg_.levels() - 2; l >= 0; --l) {
        const Tensor& skip = skips[l];
        x = upsample_bilinear(x, 2 * x.dim(1), 2 * x.dim(2));
        x = conv2d(x, params_[decoder_[l].conv].tensor(), 1, 0);
        if (x.dim(1) != skip.dim(1) || x.dim(2) != skip.dim(2)) x = upsample_bilinear(x, skip.dim(1), skip.dim(2));
        x = run_double_conv(decoder_[l].block, concat_channels(skip, x));
    }
    return conv2d(x, params_[head_].tensor(), 1, 0);
}

std::vector<Parameter*> UNet::parameters() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (Parameter& p : params_) out.push_back(&p);
    return out;
}

std::size_t UNet::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter& p : params_) n += p.tensor().numel();
    return n;
}

namespace {

// Variance gain / fan_in: gain 2 for relu layers, 1 for tanh.
void fill_fan_in_uniform(Parameter& p, int fan_in, std::mt19937_64& rng, double gain = 2.0) {
    const double bound = std::sqrt(3.0 * gain / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : p.tensor().mutable_values()) w = dist(rng);
}

}  // namespace

void init_weights(std::uint64_t seed, UNet& net) {
    std::mt19937_64 rng(seed);
    auto init_block = [&](const UNet::DoubleConv& dc) {
        for (std::size_t conv : {dc.conv1, dc.conv2}) {
            Parameter& p = net.params_[conv];
            fill_fan_in_uniform(p, p.tensor().dim(1) * p.tensor().dim(2) * p.tensor().dim(3), rng);
        }
        for (std::size_t g : {dc.bn1_gamma, dc.bn2_gamma}) {
            for (double& v : net.params_[g].tensor().mutable_values()) v = 1.0;
        }
        for (std::size_t b : {dc.bn1_beta, dc.bn2_beta}) {
            for (double& v : net.params_[b].tensor().mutable_values()) v = 0.0;
        }
    };
    for (const auto& dc : net.encoder_) init_block(dc);
    for (int l = static_cast<int>(net.decoder_.size()) - 1; l >= 0; --l) {
        Parameter& p = net.params_[net.decoder_[l].conv];
        fill_fan_in_uniform(p, p.tensor().dim(1) * 4, rng);
        init_block(net.decoder_[l].block);
    }
    Parameter& head = net.params_[net.head_];
    fill_fan_in_uniform(head, head.tensor().dim(1), rng);
}

DensePinn::DensePinn(const MLPConfig& cfg) : cfg_(cfg) {
    if (cfg_.hidden_layers < 1 || cfg_.width < 1) throw InvalidArgument("MLP needs >= 1 hidden layer of width >= 1");
    param_net_ = build(2);
    stress_net_ = build(3);
    init_weights(cfg_.seed, *this);
}

std::vector<DensePinn::Layer> DensePinn::build(int out) {
    std::vector<Layer> layers;
    int in = 2;
    for (int l = 0; l <= cfg_.hidden_layers; ++l) {
        const int o = l < cfg_.hidden_layers ? cfg_.width : out;
        params_.emplace_back(Shape{in, o}, std::vector<double>(static_cast<std::size_t>(in) * o));
        const std::size_t w = params_.size() - 1;
        params_.emplace_back(Shape{o}, std::vector<double>(o, 0.0));
        layers.push_back({w, params_.size() - 1});
        in = o;
    }
    return layers;
}

void init_weights(std::uint64_t seed, DensePinn& net) {
    std::mt19937_64 rng(seed);
    for (const auto* layers : {&net.param_net_, &net.stress_net_}) {
        for (const auto& layer : *layers) {
            Parameter& w = net.params_[layer.weight];
            fill_fan_in_uniform(w, w.tensor().dim(0), rng, net.cfg_.activation == Activation::relu ? 2.0 : 1.0);
            for (double& b : net.params_[layer.bias].tensor().mutable_values()) b = 0.0;
        }
    }
}

DensePinn::Pass DensePinn::run(const std::vector<Layer>& layers, const Tensor& coords, bool derivatives) const {
    using namespace ops;
    const int n = coords.dim(0);
    Pass p;
    p.out = coords;
    if (derivatives) {
        // Tangents of the inputs: d(X, Y)/dX = (1, 0), d(X, Y)/dY = (0, 1).
        std::vector<double> tx(2 * static_cast<std::size_t>(n), 0.0);
        std::vector<double> ty(2 * static_cast<std::size_t>(n), 0.0);
        for (int r = 0; r < n; ++r) {
            tx[2 * r] = 1.0;
            ty[2 * r + 1] = 1.0;
        }
        p.dx = Tensor::constant({n, 2}, std::move(tx));
        p.dy = Tensor::constant({n, 2}, std::move(ty));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Tensor& w = params_[layers[l].weight].tensor();
        const Tensor& b = params_[layers[l].bias].tensor();
        Tensor z = add_rowvec(matmul(p.out, w), b);
        Tensor zx;
        Tensor zy;
        if (derivatives) {
            zx = matmul(p.dx, w);
            zy = matmul(p.dy, w);
        }
        if (l + 1 == layers.size()) {
            p.out = z;
            p.dx = zx;
            p.dy = zy;
            break;
        }
        if (cfg_.activation == Activation::tanh) {
            p.out = ops::tanh(z);
            if (derivatives) {
                const Tensor slope = affine(mul(p.out, p.out), -1.0, 1.0);
                p.dx = mul(slope, zx);
                p.dy = mul(slope, zy);
            }
        } else {
            p.out = relu(z);
            if (derivatives) {
                std::vector<double> mask(z.numel());
                for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = z.values()[k] > 0.0 ? 1.0 : 0.0;
                const Tensor slope = Tensor::constant(z.shape(), std::move(mask));
                p.dx = mul(slope, zx);
                p.dy = mul(slope, zy);
            }
        }
    }
    return p;
}

PinnOutputs DensePinn::forward(const Tensor& coords, bool derivatives) const {
    if (coords.shape().size() != 2 || coords.dim(1) != 2) {
        throw InvalidArgument("dense PINN expects [N, 2] coordinates, got " + shape_str(coords.shape()));
    }
    PinnOutputs out;
    out.params = run(param_net_, coords, false).out;
    Pass s = run(stress_net_, coords, derivatives);
    out.stresses = s.out;
    out.dstress_dx = s.dx;
    out.dstress_dy = s.dy;
    return out;
}

std::vector<Parameter*> DensePinn::parameters() {
    std::vector<Parameter*> out;
    for (Parameter& p : params_) out.push_back(&p);
    return out;
}

std::size_t DensePinn::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter& p : params_) n += p.tensor().numel();
    return n;
}

}  // namespace elastinv
