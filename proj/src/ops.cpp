#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "elastinv/autodiff.hpp"
#include "elastinv/grid.hpp"

namespace elastinv::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
    }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
    if (a.shape().size() != rank) {
        throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                              shape_str(a.shape()));
    }
}

struct ConvGeom {
    int cin, h, w, cout, kh, kw, stride, pad, ho, wo;
    [[nodiscard]] int rows() const { return cin * kh * kw; }
    [[nodiscard]] int cols() const { return ho * wo; }
    [[nodiscard]] bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
    for (int c = 0; c < g.cin; ++c) {
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                double* row = cols + static_cast<std::ptrdiff_t>((c * g.kh + ki) * g.kw + kj) * g.cols();
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride + ki - g.pad;
                    double* out = row + static_cast<std::ptrdiff_t>(oy) * g.wo;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(out, out + g.wo, 0.0);
                        continue;
                    }
                    const double* in = x + (static_cast<std::ptrdiff_t>(c) * g.h + iy) * g.w;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride + kj - g.pad;
                        out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, const ConvGeom& g, double* dx) {
    for (int c = 0; c < g.cin; ++c) {
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const double* row = cols + static_cast<std::ptrdiff_t>((c * g.kh + ki) * g.kw + kj) * g.cols();
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride + ki - g.pad;
                    if (iy < 0 || iy >= g.h) continue;
                    const double* src = row + static_cast<std::ptrdiff_t>(oy) * g.wo;
                    double* out = dx + (static_cast<std::ptrdiff_t>(c) * g.h + iy) * g.w;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride + kj - g.pad;
                        if (ix >= 0 && ix < g.w) out[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    if (kernel.dim(1) != input.dim(0)) {
        throw InvalidArgument("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
                              std::to_string(input.dim(0)));
    }
    if (stride < 1 || padding < 0) throw InvalidArgument("conv2d: bad stride or padding");
    ConvGeom g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2), kernel.dim(3),
               stride,       padding,      0,            0};
    const int nh = g.h + 2 * padding - g.kh;
    const int nw = g.w + 2 * padding - g.kw;
    if (nh < 0 || nw < 0 || nh % stride != 0 || nw % stride != 0) {
        throw InvalidArgument("conv2d: output size is not a positive integer for input " + shape_str(input.shape()));
    }
    g.ho = nh / stride + 1;
    g.wo = nw / stride + 1;

    std::shared_ptr<std::vector<double>> cols;
    const double* colp = input.values().data();
    if (!g.pointwise()) {
        cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(g.rows()) * g.cols());
        im2col(input.values().data(), g, cols->data());
        colp = cols->data();
    }
    std::vector<double> out(static_cast<std::size_t>(g.cout) * g.cols());
    MapMat(out.data(), g.cout, g.cols()).noalias() =
        MapConstMat(kernel.values().data(), g.cout, g.rows()) * MapConstMat(colp, g.rows(), g.cols());

    return Tensor::make({g.cout, g.ho, g.wo}, std::move(out), {input, kernel}, [g, cols](detail::Node& self) {
        detail::Node& x = *self.parents[0];
        detail::Node& k = *self.parents[1];
        MapConstMat dout(self.grad.data(), g.cout, g.cols());
        if (k.requires_grad) {
            const double* cp = cols ? cols->data() : x.value.data();
            MapMat(k.grad.data(), g.cout, g.rows()).noalias() += dout * MapConstMat(cp, g.rows(), g.cols()).transpose();
        }
        if (x.requires_grad) {
            MapConstMat kmat(k.value.data(), g.cout, g.rows());
            if (g.pointwise()) {
                MapMat(x.grad.data(), g.rows(), g.cols()).noalias() += kmat.transpose() * dout;
            } else {
                RowMat dcols = kmat.transpose() * dout;
                col2im_add(dcols.data(), g, x.grad.data());
            }
        }
    });
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(input, 3, "batchnorm2d");
    const int C = input.dim(0);
    const std::size_t hw = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
    // A single pixel has zero variance and normalizes to beta, the same limit as a constant channel.
    if (hw < 1) throw InvalidArgument("batchnorm2d needs at least 1 pixel per channel");
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != static_cast<std::size_t>(C)) {
        throw InvalidArgument("batchnorm2d: gamma/beta size must equal the channel count");
    }
    auto xhat = std::make_shared<std::vector<double>>(input.numel());
    auto inv_std = std::make_shared<std::vector<double>>(C);
    std::vector<double> out(input.numel());
    const double* x = input.values().data();
    for (int c = 0; c < C; ++c) {
        const double* xc = x + c * hw;
        double mean = 0.0;
        for (std::size_t k = 0; k < hw; ++k) mean += xc[k];
        mean /= static_cast<double>(hw);
        double var = 0.0;
        for (std::size_t k = 0; k < hw; ++k) var += (xc[k] - mean) * (xc[k] - mean);
        var /= static_cast<double>(hw);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[c] = is;
        const double gc = gamma.values()[c];
        const double bc = beta.values()[c];
        double* xh = xhat->data() + c * hw;
        double* oc = out.data() + c * hw;
        for (std::size_t k = 0; k < hw; ++k) {
            xh[k] = (xc[k] - mean) * is;
            oc[k] = gc * xh[k] + bc;
        }
    }
    return Tensor::make(input.shape(), std::move(out), {input, gamma, beta}, [C, hw, xhat, inv_std](detail::Node& self) {
        detail::Node& x = *self.parents[0];
        detail::Node& gm = *self.parents[1];
        detail::Node& bt = *self.parents[2];
        const double n = static_cast<double>(hw);
        for (int c = 0; c < C; ++c) {
            const double* dy = self.grad.data() + c * hw;
            const double* xh = xhat->data() + c * hw;
            double sum_dy = 0.0;
            double sum_dy_xh = 0.0;
            for (std::size_t k = 0; k < hw; ++k) {
                sum_dy += dy[k];
                sum_dy_xh += dy[k] * xh[k];
            }
            if (gm.requires_grad) gm.grad[c] += sum_dy_xh;
            if (bt.requires_grad) bt.grad[c] += sum_dy;
            if (x.requires_grad) {
                const double scale = gm.value[c] * (*inv_std)[c] / n;
                double* dx = x.grad.data() + c * hw;
                for (std::size_t k = 0; k < hw; ++k) dx[k] += scale * (n * dy[k] - sum_dy - xh[k] * sum_dy_xh);
            }
        }
    });
}

Tensor maxpool2(const Tensor& input) {
    require_rank(input, 3, "maxpool2");
    const int C = input.dim(0);
    const int H = input.dim(1);
    const int W = input.dim(2);
    if (H < 2 || W < 2) throw InvalidArgument("maxpool2 needs H, W >= 2, got " + shape_str(input.shape()));
    const int ho = H / 2;
    const int wo = W / 2;
    std::vector<double> out(static_cast<std::size_t>(C) * ho * wo);
    auto arg = std::make_shared<std::vector<int>>(out.size());
    const double* x = input.values().data();
    for (int c = 0; c < C; ++c) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                int best = (c * H + 2 * oy) * W + 2 * ox;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = (c * H + 2 * oy + dy) * W + 2 * ox + dx;
                        if (x[idx] > x[best]) best = idx;  // strict: first index wins ties
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(c) * ho + oy) * wo + ox;
                out[o] = x[best];
                (*arg)[o] = best;
            }
        }
    }
    return Tensor::make({C, ho, wo}, std::move(out), {input}, [arg](detail::Node& self) {
        detail::Node& x = *self.parents[0];
        for (std::size_t o = 0; o < arg->size(); ++o) x.grad[(*arg)[o]] += self.grad[o];
    });
}

namespace {

struct Interp {
    int i0, i1;
    double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Interp> corner_aligned(int src, int dst) {
    std::vector<Interp> t(dst);
    for (int o = 0; o < dst; ++o) {
        const double s = dst > 1 ? static_cast<double>(o) * (src - 1) / (dst - 1) : 0.0;
        int i0 = std::min(static_cast<int>(std::floor(s)), src - 1);
        const int i1 = std::min(i0 + 1, src - 1);
        t[o] = {i0, i1, s - i0};
    }
    return t;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& input, int target_h, int target_w) {
    require_rank(input, 3, "upsample_bilinear");
    if (target_h < 1 || target_w < 1) throw InvalidArgument("upsample_bilinear: target dims must be >= 1");
    const int C = input.dim(0);
    const int H = input.dim(1);
    const int W = input.dim(2);
    const auto ty = corner_aligned(H, target_h);
    const auto tx = corner_aligned(W, target_w);
    std::vector<double> out(static_cast<std::size_t>(C) * target_h * target_w);
    const double* x = input.values().data();
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::ptrdiff_t>(c) * H * W;
        double* oc = out.data() + static_cast<std::ptrdiff_t>(c) * target_h * target_w;
        for (int oy = 0; oy < target_h; ++oy) {
            const Interp& a = ty[oy];
            const double* r0 = xc + static_cast<std::ptrdiff_t>(a.i0) * W;
            const double* r1 = xc + static_cast<std::ptrdiff_t>(a.i1) * W;
            for (int ox = 0; ox < target_w; ++ox) {
                const Interp& b = tx[ox];
                const double top = (1.0 - b.w1) * r0[b.i0] + b.w1 * r0[b.i1];
                const double bot = (1.0 - b.w1) * r1[b.i0] + b.w1 * r1[b.i1];
                oc[oy * target_w + ox] = (1.0 - a.w1) * top + a.w1 * bot;
            }
        }
    }
    return Tensor::make({C, target_h, target_w}, std::move(out), {input},
                        [C, H, W, target_h, target_w, ty, tx](detail::Node& self) {
                            detail::Node& xn = *self.parents[0];
                            for (int c = 0; c < C; ++c) {
                                double* dx = xn.grad.data() + static_cast<std::ptrdiff_t>(c) * H * W;
                                const double* g = self.grad.data() + static_cast<std::ptrdiff_t>(c) * target_h * target_w;
                                for (int oy = 0; oy < target_h; ++oy) {
                                    const Interp& a = ty[oy];
                                    for (int ox = 0; ox < target_w; ++ox) {
                                        const Interp& b = tx[ox];
                                        const double v = g[oy * target_w + ox];
                                        dx[a.i0 * W + b.i0] += (1.0 - a.w1) * (1.0 - b.w1) * v;
                                        dx[a.i0 * W + b.i1] += (1.0 - a.w1) * b.w1 * v;
                                        dx[a.i1 * W + b.i0] += a.w1 * (1.0 - b.w1) * v;
                                        dx[a.i1 * W + b.i1] += a.w1 * b.w1 * v;
                                    }
                                }
                            }
                        });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return Tensor::make(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t k = 0; k < self.grad.size(); ++k) {
            if (p.value[k] > 0.0) p.grad[k] += self.grad[k];
        }
    });
}

Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::tanh(x.values()[k]);
    return Tensor::make(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t k = 0; k < self.grad.size(); ++k) {
            p.grad[k] += self.grad[k] * (1.0 - self.value[k] * self.value[k]);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.values()[k] + b.values()[k];
    return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            for (std::size_t k = 0; k < self.grad.size(); ++k) p->grad[k] += self.grad[k];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.values()[k] - b.values()[k];
    return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        for (std::size_t k = 0; k < self.grad.size(); ++k) {
            if (pa.requires_grad) pa.grad[k] += self.grad[k];
            if (pb.requires_grad) pb.grad[k] -= self.grad[k];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.values()[k] * b.values()[k];
    return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        for (std::size_t k = 0; k < self.grad.size(); ++k) {
            if (pa.requires_grad) pa.grad[k] += self.grad[k] * pb.value[k];
            if (pb.requires_grad) pb.grad[k] += self.grad[k] * pa.value[k];
        }
    });
}

Tensor affine(const Tensor& x, double a, double b) {
    std::vector<double> out(x.numel());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * x.values()[k] + b;
    return Tensor::make(x.shape(), std::move(out), {x}, [a](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t k = 0; k < self.grad.size(); ++k) p.grad[k] += a * self.grad[k];
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank(a, 3, "concat_channels");
    require_rank(b, 3, "concat_channels");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw InvalidArgument("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
    }
    std::vector<double> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    const std::size_t na = a.numel();
    return Tensor::make({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(out), {a, b}, [na](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            for (std::size_t k = 0; k < na; ++k) pa.grad[k] += self.grad[k];
        }
        if (pb.requires_grad) {
            for (std::size_t k = 0; k < pb.grad.size(); ++k) pb.grad[k] += self.grad[na + k];
        }
    });
}

Tensor mse(const Tensor& x) {
    const std::size_t n = x.numel();
    if (n == 0) throw InvalidArgument("mse of an empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    return Tensor::make({}, {s / static_cast<double>(n)}, {x}, [n](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        const double c = 2.0 * self.grad[0] / static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) p.grad[k] += c * p.value[k];
    });
}

Tensor sum(std::span<const Tensor> scalars) {
    double s = 0.0;
    std::vector<Tensor> parents;
    for (const Tensor& t : scalars) {
        if (t.numel() != 1) throw InvalidArgument("sum expects scalar tensors");
        s += t.item();
        parents.push_back(t);
    }
    return Tensor::make({}, {s}, std::move(parents), [](detail::Node& self) {
        for (auto& p : self.parents) {
            if (p->requires_grad) p->grad[0] += self.grad[0];
        }
    });
}

Tensor channel(const Tensor& x, int c) {
    require_rank(x, 3, "channel");
    if (c < 0 || c >= x.dim(0)) throw InvalidArgument("channel index out of range");
    const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    std::vector<double> out(x.values().begin() + c * hw, x.values().begin() + (c + 1) * hw);
    return Tensor::make({x.dim(1), x.dim(2)}, std::move(out), {x}, [c, hw](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t k = 0; k < hw; ++k) p.grad[c * hw + k] += self.grad[k];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw InvalidArgument("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes size");
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    return Tensor::make(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t k = 0; k < self.grad.size(); ++k) p.grad[k] += self.grad[k];
    });
}

Tensor gather(const Tensor& x, std::vector<int> indices) {
    std::vector<double> out(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] < 0 || static_cast<std::size_t>(indices[k]) >= x.numel()) {
            throw InvalidArgument("gather index out of range");
        }
        out[k] = x.values()[indices[k]];
    }
    const int n = static_cast<int>(indices.size());
    return Tensor::make({n}, std::move(out), {x}, [idx = std::move(indices)](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t k = 0; k < idx.size(); ++k) p.grad[idx[k]] += self.grad[k];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int n = a.dim(0);
    const int k = a.dim(1);
    const int m = b.dim(1);
    if (b.dim(0) != k) throw InvalidArgument("matmul: inner dimensions differ");
    std::vector<double> out(static_cast<std::size_t>(n) * m);
    MapMat(out.data(), n, m).noalias() = MapConstMat(a.values().data(), n, k) * MapConstMat(b.values().data(), k, m);
    return Tensor::make({n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        MapConstMat g(self.grad.data(), n, m);
        if (pa.requires_grad) {
            MapMat(pa.grad.data(), n, k).noalias() += g * MapConstMat(pb.value.data(), k, m).transpose();
        }
        if (pb.requires_grad) {
            MapMat(pb.grad.data(), k, m).noalias() += MapConstMat(pa.value.data(), n, k).transpose() * g;
        }
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    require_rank(x, 2, "add_rowvec");
    const int n = x.dim(0);
    const int m = x.dim(1);
    if (b.numel() != static_cast<std::size_t>(m)) throw InvalidArgument("add_rowvec: bias length mismatch");
    std::vector<double> out(x.values().begin(), x.values().end());
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < m; ++c) out[static_cast<std::size_t>(r) * m + c] += b.values()[c];
    }
    return Tensor::make(x.shape(), std::move(out), {x, b}, [n, m](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < m; ++c) {
                const double g = self.grad[static_cast<std::size_t>(r) * m + c];
                if (px.requires_grad) px.grad[static_cast<std::size_t>(r) * m + c] += g;
                if (pb.requires_grad) pb.grad[c] += g;
            }
        }
    });
}

Tensor column(const Tensor& x, int k) {
    require_rank(x, 2, "column");
    const int n = x.dim(0);
    const int m = x.dim(1);
    if (k < 0 || k >= m) throw InvalidArgument("column index out of range");
    std::vector<double> out(n);
    for (int r = 0; r < n; ++r) out[r] = x.values()[static_cast<std::size_t>(r) * m + k];
    return Tensor::make({n}, std::move(out), {x}, [m, k](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        for (std::size_t r = 0; r < self.grad.size(); ++r) p.grad[r * m + k] += self.grad[r];
    });
}

}  // namespace elastinv::ops
