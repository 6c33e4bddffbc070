#include "elastinv/fd.hpp"

#include <cassert>

namespace elastinv {

FDSpacing grid_spacing(const GridGeom& geom, const Scales& scales) {
    if (geom.nx < 2 || geom.ny < 2) throw InvalidArgument("grid_spacing needs nx, ny >= 2");
    return {geom.length_x / (scales.l0 * (geom.nx - 1)), geom.length_y / (scales.l0 * (geom.ny - 1))};
}

namespace stencil {

namespace {

// Walks every line along `axis`: `n` samples with stride `step`, `lines` lines with stride `lstep`.
struct Lines {
    int n, step, lines, lstep;
};

Lines lines_for(Axis axis, int nx, int ny) {
    if (axis == Axis::x) return {nx, 1, ny, nx};
    return {ny, nx, nx, 1};
}

}  // namespace

void apply(Axis axis, std::span<const double> f, int nx, int ny, double h, std::span<double> out) {
    assert(f.size() == static_cast<std::size_t>(nx) * ny && out.size() == f.size());
    const Lines L = lines_for(axis, nx, ny);
    const double inv = 1.0 / h;
    const double half = 0.5 / h;
    for (int l = 0; l < L.lines; ++l) {
        const double* p = f.data() + static_cast<std::ptrdiff_t>(l) * L.lstep;
        double* q = out.data() + static_cast<std::ptrdiff_t>(l) * L.lstep;
        const int s = L.step;
        const int n = L.n;
        q[0] = (p[s] - p[0]) * inv;
        for (int k = 1; k < n - 1; ++k) q[k * s] = (p[(k + 1) * s] - p[(k - 1) * s]) * half;
        q[(n - 1) * s] = (p[(n - 1) * s] - p[(n - 2) * s]) * inv;
    }
}

void adjoint(Axis axis, std::span<const double> g, int nx, int ny, double h, std::span<double> out) {
    assert(g.size() == static_cast<std::size_t>(nx) * ny && out.size() == g.size());
    const Lines L = lines_for(axis, nx, ny);
    const double inv = 1.0 / h;
    const double half = 0.5 / h;
    for (int l = 0; l < L.lines; ++l) {
        const double* p = g.data() + static_cast<std::ptrdiff_t>(l) * L.lstep;
        double* q = out.data() + static_cast<std::ptrdiff_t>(l) * L.lstep;
        const int s = L.step;
        const int n = L.n;
        q[0] -= p[0] * inv;
        q[s] += p[0] * inv;
        for (int k = 1; k < n - 1; ++k) {
            q[(k + 1) * s] += p[k * s] * half;
            q[(k - 1) * s] -= p[k * s] * half;
        }
        q[(n - 1) * s] += p[(n - 1) * s] * inv;
        q[(n - 2) * s] -= p[(n - 1) * s] * inv;
    }
}

}  // namespace stencil

ScalarField partial_x(const ScalarField& f, const FDSpacing& sp) {
    ScalarField out(f.geom());
    stencil::apply(Axis::x, f.values(), f.geom().nx, f.geom().ny, sp.dX, out.values());
    return out;
}

ScalarField partial_y(const ScalarField& f, const FDSpacing& sp) {
    ScalarField out(f.geom());
    stencil::apply(Axis::y, f.values(), f.geom().nx, f.geom().ny, sp.dY, out.values());
    return out;
}

EquilibriumResidual equilibrium_residual(const StressField& s, const FDSpacing& sp) {
    require_same_geom(s.xx.geom(), s.yy.geom(), "equilibrium_residual");
    require_same_geom(s.xx.geom(), s.xy.geom(), "equilibrium_residual");
    EquilibriumResidual r{partial_x(s.xx, sp), partial_x(s.xy, sp)};
    const ScalarField dxy_dy = partial_y(s.xy, sp);
    const ScalarField dyy_dy = partial_y(s.yy, sp);
    for (std::size_t k = 0; k < r.r1.size(); ++k) {
        r.r1[k] += dxy_dy[k];
        r.r2[k] += dyy_dy[k];
    }
    return r;
}

}  // namespace elastinv

namespace elastinv {

Tensor partial(const Tensor& f, Axis axis, double spacing) {
    if (f.shape().size() != 2) throw InvalidArgument("partial expects an [H, W] tensor, got " + shape_str(f.shape()));
    const int ny = f.dim(0);
    const int nx = f.dim(1);
    if (nx < 2 || ny < 2) throw InvalidArgument("partial needs at least 2 samples per axis");
    std::vector<double> out(f.numel());
    stencil::apply(axis, f.values(), nx, ny, spacing, out);
    return Tensor::make(f.shape(), std::move(out), {f}, [axis, nx, ny, spacing](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        if (p.requires_grad) stencil::adjoint(axis, self.grad, nx, ny, spacing, p.grad);
    });
}

EquilibriumResidualTensors equilibrium_residual(const Tensor& sxx, const Tensor& syy, const Tensor& sxy,
                                                const FDSpacing& sp) {
    return {ops::add(partial(sxx, Axis::x, sp.dX), partial(sxy, Axis::y, sp.dY)),
            ops::add(partial(sxy, Axis::x, sp.dX), partial(syy, Axis::y, sp.dY))};
}

}  // namespace elastinv
