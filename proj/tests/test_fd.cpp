#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "elastinv/fd.hpp"

using namespace elastinv;
using doctest::Approx;

namespace {

template <class F>
ScalarField sample(const GridGeom& g, const FDSpacing& sp, F f) {
    ScalarField out(g);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) out(i, j) = f(i * sp.dX, j * sp.dY);
    }
    return out;
}

}  // namespace

TEST_CASE("grid_spacing") {
    FDSpacing sp = grid_spacing(GridGeom(5, 3, 2.0, 1.0), {1.5, 1.0});
    CHECK(sp.dX == Approx(1.0 / 3.0));
    CHECK(sp.dY == Approx(1.0 / 3.0));
    sp = grid_spacing(GridGeom(2, 3, 1.5, 1.0), {1.5, 1.0});
    CHECK(sp.dX == 1.0);
    const GridGeom wide(142, 100, 1.41, 0.99);
    sp = grid_spacing(wide, {(1.41 + 0.99) / 2, 1.0});
    CHECK(sp.dX == Approx(sp.dY).epsilon(1e-12));
}

TEST_CASE("partial_x examples") {
    const GridGeom g(3, 2, 1.0, 1.0);
    const FDSpacing sp{0.5, 1.0};
    ScalarField lin = sample(g, sp, [](double x, double) { return x; });
    ScalarField d = partial_x(lin, sp);
    for (double v : d.values()) CHECK(v == Approx(1.0).epsilon(1e-14));

    const ScalarField c(g, 3.0);
    const ScalarField cx = partial_x(c, sp), cy = partial_y(c, sp);
    for (double v : cx.values()) CHECK(v == 0.0);
    for (double v : cy.values()) CHECK(v == 0.0);

    ScalarField sq = sample(g, sp, [](double x, double) { return x * x; });
    d = partial_x(sq, sp);
    CHECK(d(0, 0) == Approx(0.5));
    CHECK(d(1, 0) == Approx(1.0));
    CHECK(d(2, 0) == Approx(1.5));
}

TEST_CASE("two-pixel axis degenerates to one-sided") {
    const GridGeom g(2, 4, 1.0, 1.0);
    const FDSpacing sp{1.0, 1.0 / 3.0};
    ScalarField f = sample(g, sp, [](double x, double y) { return 3 * x + 2 * y; });
    const ScalarField fx = partial_x(f, sp), fy = partial_y(f, sp);
    for (double v : fx.values()) CHECK(v == Approx(3.0));
    for (double v : fy.values()) CHECK(v == Approx(2.0));
}

TEST_CASE("equilibrium residual examples") {
    const GridGeom g(6, 5, 1.0, 1.0);
    const FDSpacing sp{0.2, 0.25};
    auto field = [&](auto f) { return sample(g, sp, f); };
    EquilibriumResidual r = equilibrium_residual(
        {field([](double x, double) { return x; }), ScalarField(g), field([](double, double y) { return -y; })}, sp);
    CHECK(r.r1.max_abs() <= 1e-12);
    CHECK(r.r2.max_abs() <= 1e-12);
    r = equilibrium_residual({field([](double x, double) { return x; }), ScalarField(g), ScalarField(g)}, sp);
    for (double v : r.r1.values()) CHECK(v == Approx(1.0));
    CHECK(r.r2.max_abs() == 0.0);
}

TEST_CASE("linearity and mirror antisymmetry") {
    const GridGeom g(7, 5, 1.0, 1.0);
    const FDSpacing sp{0.3, 0.2};
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    ScalarField f(g), h(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        f[k] = n(rng);
        h[k] = n(rng);
    }
    ScalarField comb(g);
    for (std::size_t k = 0; k < g.size(); ++k) comb[k] = 2.0 * f[k] - 3.0 * h[k];
    const ScalarField df = partial_x(f, sp), dh = partial_x(h, sp), dc = partial_x(comb, sp);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(dc[k] == Approx(2.0 * df[k] - 3.0 * dh[k]).epsilon(1e-12));

    ScalarField mirrored(g);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) mirrored(i, j) = f(g.nx - 1 - i, j);
    }
    const ScalarField dm = partial_x(mirrored, sp);
    const ScalarField dmy = partial_y(mirrored, sp);
    const ScalarField dfy = partial_y(f, sp);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            CHECK(dm(i, j) == Approx(-df(g.nx - 1 - i, j)).epsilon(1e-12));
            CHECK(dmy(i, j) == Approx(dfy(g.nx - 1 - i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("stencil adjoint is the transpose") {
    const int nx = 6, ny = 5;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    std::vector<double> x(nx * ny), y(nx * ny), ax(nx * ny), aty(nx * ny);
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng);
    for (Axis axis : {Axis::x, Axis::y}) {
        stencil::apply(axis, x, nx, ny, 0.37, ax);
        std::fill(aty.begin(), aty.end(), 0.0);
        stencil::adjoint(axis, y, nx, ny, 0.37, aty);
        double lhs = 0, rhs = 0;
        for (int k = 0; k < nx * ny; ++k) {
            lhs += ax[k] * y[k];
            rhs += x[k] * aty[k];
        }
        CHECK(lhs == Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("tensor equilibrium matches field version") {
    const GridGeom g(5, 4, 1.0, 1.0);
    const FDSpacing sp{0.25, 1.0 / 3.0};
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    StressField s{ScalarField(g), ScalarField(g), ScalarField(g)};
    for (std::size_t k = 0; k < g.size(); ++k) {
        s.xx[k] = n(rng);
        s.yy[k] = n(rng);
        s.xy[k] = n(rng);
    }
    auto tens = [&](const ScalarField& f) {
        return Tensor::constant({g.ny, g.nx}, std::vector<double>(f.values().begin(), f.values().end()));
    };
    const EquilibriumResidual a = equilibrium_residual(s, sp);
    const EquilibriumResidualTensors b = equilibrium_residual(tens(s.xx), tens(s.yy), tens(s.xy), sp);
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(a.r1[k] == Approx(b.r1.values()[k]).epsilon(1e-14));
        CHECK(a.r2[k] == Approx(b.r2.values()[k]).epsilon(1e-14));
    }
}
