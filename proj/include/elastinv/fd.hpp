#pragma once

#include <span>

#include "elastinv/autodiff.hpp"
#include "elastinv/grid.hpp"

namespace elastinv {

/// Dimensionless pixel spacing.
struct FDSpacing {
    double dX = 1.0;
    double dY = 1.0;
};

FDSpacing grid_spacing(const GridGeom& geom, const Scales& scales);

enum class Axis { x, y };

namespace stencil {

// Raw first-derivative stencils on an ny x nx row-major array: central differences in the
// interior, first-order one-sided differences on the two edges along the axis. Corners take the
// one-sided rule independently per axis. `adjoint` applies the transposed operator and
// accumulates into `out`; `apply` overwrites `out`.
void apply(Axis axis, std::span<const double> f, int nx, int ny, double h, std::span<double> out);
void adjoint(Axis axis, std::span<const double> g, int nx, int ny, double h, std::span<double> out);

}  // namespace stencil

ScalarField partial_x(const ScalarField& f, const FDSpacing& sp);
ScalarField partial_y(const ScalarField& f, const FDSpacing& sp);

struct EquilibriumResidual {
    ScalarField r1;  ///< dSxx/dX + dSxy/dY
    ScalarField r2;  ///< dSxy/dX + dSyy/dY
};

EquilibriumResidual equilibrium_residual(const StressField& s, const FDSpacing& sp);

/// Differentiable stencil on an [H, W] tensor; the backward pass applies the adjoint stencil.
Tensor partial(const Tensor& f, Axis axis, double spacing);

struct EquilibriumResidualTensors {
    Tensor r1;
    Tensor r2;
};

/// Same residual on [H, W] stress tensors.
EquilibriumResidualTensors equilibrium_residual(const Tensor& sxx, const Tensor& syy, const Tensor& sxy,
                                                const FDSpacing& sp);

}  // namespace elastinv
