#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "elastinv/fem.hpp"

using namespace elastinv;
using doctest::Approx;

namespace {

MaterialField homogeneous(const GridGeom& g, double E, double nu) {
    const Lame l = lame_from_engineering(E, nu);
    return {ScalarField(g, l.lambda), ScalarField(g, l.mu)};
}

double max_rel(const ScalarField& f, double expect) {
    double w = 0.0;
    for (double v : f.values()) w = std::max(w, std::abs(v - expect) / std::abs(expect));
    return w;
}

PhantomSpec inclusion(double r) {
    PhantomSpec p;
    p.materials = {{1000.0, 0.45}, {2000.0, 0.35}};
    p.circles = {{0.5, 0.5, r, 1}};
    return p;
}

}  // namespace

TEST_CASE("patch test: uniaxial plane strain, roller bottom") {
    const double E = 1000.0, nu = 0.3, t = 10.0;
    for (int n : {16, 64}) {
        CAPTURE(n);
        const GridGeom g(n, n, 1.0, 1.0);
        const FemSolution s = solve_plane_strain(homogeneous(g, E, nu), BoundarySpec::top_load_roller_bottom(t));
        CHECK(max_rel(s.stress.yy, t) <= 1e-8);
        CHECK(s.stress.xx.max_abs() <= 1e-8 * t);
        CHECK(s.stress.xy.max_abs() <= 1e-8 * t);
        CHECK(max_rel(s.strain.yy, t * (1 - nu * nu) / E) <= 1e-8);
        CHECK(max_rel(s.strain.xx, -nu * (1 + nu) * t / E) <= 1e-8);
        CHECK(s.strain.xy.max_abs() <= 1e-8 * t / E);
        CHECK(s.relative_residual <= 1e-10);
        CHECK(s.force_balance_error <= 1e-8);
    }
}

TEST_CASE("patch test: two-sided tension on a rectangle") {
    const GridGeom g(21, 13, 2.0, 1.2);
    const FemSolution s = solve_plane_strain(homogeneous(g, 1500.0, 0.4), BoundarySpec::two_sided_tension(25.0));
    CHECK(max_rel(s.stress.yy, 25.0) <= 1e-8);
    CHECK(s.stress.xx.max_abs() <= 1e-8 * 25.0);
    CHECK(s.force_balance_error <= 1e-8);
    CHECK(s.pinned_dofs.size() == 3);
}

TEST_CASE("zero load gives zero fields") {
    const GridGeom g(8, 8, 1.0, 1.0);
    const FemSolution s = solve_plane_strain(homogeneous(g, 1000.0, 0.3), BoundarySpec::top_load_roller_bottom(0.0));
    CHECK(s.ux.max_abs() == 0.0);
    CHECK(s.uy.max_abs() == 0.0);
    CHECK(s.strain.yy.max_abs() == 0.0);
    CHECK(s.stress.xx.max_abs() == 0.0);
}

TEST_CASE("unbalanced load without support names the missing constraint") {
    const GridGeom g(6, 6, 1.0, 1.0);
    BoundarySpec bc;
    bc[Edge::top].normal_traction = 10.0;
    try {
        (void)solve_plane_strain(homogeneous(g, 1000.0, 0.3), bc);
        FAIL("expected an error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("y") != std::string::npos);
    }
}

TEST_CASE("consistent nodal forces sum to traction times edge length") {
    const GridGeom g(9, 7, 1.6, 0.9);
    for (Edge e : kEdges) {
        CAPTURE(edge_name(e));
        BoundarySpec bc;
        bc[e].normal_traction = 12.5;
        bc[e].shear_traction = -3.0;
        const Eigen::VectorXd f = fem::traction_load(g, bc);
        const bool horizontal = e == Edge::top || e == Edge::bottom;
        const double len = horizontal ? g.length_x : g.length_y;
        const double sign = (e == Edge::top || e == Edge::right) ? 1.0 : -1.0;
        double fx = 0, fy = 0;
        for (int k = 0; k < f.size(); k += 2) {
            fx += f[k];
            fy += f[k + 1];
        }
        // Outward normal n: traction = sigma . n.
        const double fn = horizontal ? fy : fx;
        const double fs = horizontal ? fx : fy;
        CHECK(fn == Approx(sign * 12.5 * len).epsilon(1e-12));
        CHECK(fs == Approx(sign * -3.0 * len).epsilon(1e-12));
    }
}

TEST_CASE("stiffness matrix is symmetric") {
    const GridGeom g(7, 6, 1.0, 1.0);
    const Phantom ph = build_phantom(inclusion(0.3), g);
    const Eigen::SparseMatrix<double> K = fem::assemble_stiffness(ph.material);
    const Eigen::SparseMatrix<double> Kt = K.transpose();
    const double scale = Eigen::MatrixXd(K).cwiseAbs().maxCoeff();
    CHECK((Eigen::MatrixXd(K) - Eigen::MatrixXd(Kt)).cwiseAbs().maxCoeff() <= 1e-12 * scale);
}

TEST_CASE("heterogeneous solve balances forces") {
    const GridGeom g(32, 32, 1.0, 1.0);
    const Phantom ph = build_phantom(inclusion(0.25), g);
    const FemSolution s = solve_plane_strain(ph.material, BoundarySpec::two_sided_tension(30.0));
    CHECK(s.relative_residual <= 1e-10);
    CHECK(s.force_balance_error <= 1e-8);
}

TEST_CASE("mesh refinement consistency") {
    // Strain at common points of nested grids (n = 2^k + 1 keeps nodes aligned).
    auto solve = [](int n) {
        const GridGeom g(n, n, 1.0, 1.0);
        return solve_plane_strain(build_phantom(inclusion(0.25), g).material, BoundarySpec::two_sided_tension(30.0));
    };
    const FemSolution fine = solve(129), mid = solve(65), coarse = solve(33);
    auto diff = [](const FemSolution& a, const FemSolution& b, int stride) {
        double d = 0;
        int n = 0;
        const GridGeom& gb = b.strain.yy.geom();
        for (int j = 0; j < gb.ny; ++j) {
            for (int i = 0; i < gb.nx; ++i) {
                d += std::abs(b.strain.yy(i, j) - a.strain.yy(i * stride, j * stride));
                ++n;
            }
        }
        return d / n;
    };
    const double d_coarse = diff(fine, coarse, 4);
    const double d_mid = diff(fine, mid, 2);
    CHECK(d_mid < d_coarse);
}

TEST_CASE("build_phantom") {
    const GridGeom g(64, 64, 1.0, 1.0);
    Phantom p = build_phantom(inclusion(0.0), g);
    const Lame bg = lame_from_engineering(1000.0, 0.45);
    for (double v : p.material.mu.values()) CHECK(v == Approx(bg.mu));

    p = build_phantom(inclusion(0.25), g);
    long inside = 0;
    for (int r : p.region) inside += r == 1;
    const double pixel_area = g.hx() * g.hy();
    const double expect = std::numbers::pi * 0.25 * 0.25 / pixel_area;
    CHECK(std::abs(inside - expect) <= 0.02 * expect);

    PhantomSpec lm;
    lm.kind = PhantomSpec::Kind::label_map;
    lm.materials = {{1000.0, 0.45}, {1500.0, 0.4}, {2000.0, 0.35}};
    lm.label_nx = 4;
    lm.label_ny = 3;
    lm.labels = {0, 0, 1, 1, 0, 2, 2, 1, 0, 0, 1, 1};
    p = build_phantom(lm, GridGeom(4, 3, 1.0, 1.0));
    const Lame wm = lame_from_engineering(2000.0, 0.35);
    const Lame gm = lame_from_engineering(1500.0, 0.4);
    CHECK(p.material.lambda[5] == Approx(wm.lambda));
    CHECK(p.material.mu[2] == Approx(gm.mu));
    CHECK(p.material.lambda[0] == Approx(bg.lambda));
    CHECK(p.E[6] == 2000.0);

    lm.label_nx = 5;
    CHECK_THROWS_AS(build_phantom(lm, GridGeom(4, 3, 1.0, 1.0)), InvalidArgument);
    PhantomSpec empty;
    CHECK_THROWS_AS(build_phantom(empty, g), InvalidArgument);

    PhantomSpec clipped = inclusion(0.3);
    clipped.circles[0].cx = 0.9;
    p = build_phantom(clipped, g);
    CHECK(!p.warnings.empty());

    PhantomSpec layered;
    layered.kind = PhantomSpec::Kind::layered;
    layered.materials = {{1000.0, 0.45}, {2000.0, 0.35}};
    layered.layer_bounds = {0.5};
    p = build_phantom(layered, GridGeom(4, 5, 1.0, 1.0));
    CHECK(p.E(0, 0) == 1000.0);
    CHECK(p.E(0, 4) == 2000.0);
}

TEST_CASE("add_noise") {
    const GridGeom g(142, 100, 1.42, 1.0);
    StrainField s{ScalarField(g), ScalarField(g), ScalarField(g)};
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            s.xx(i, j) = 0.01 * std::sin(0.1 * i) + 0.002 * j / 100.0;
            s.yy(i, j) = 0.03 + 0.001 * i / 142.0;
            s.xy(i, j) = -0.004 * std::cos(0.05 * j);
        }
    }
    const StrainField same = add_noise(s, 0.0, 5);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(same.xx[k] == s.xx[k]);

    const StrainField a = add_noise(s, 0.1, 11);
    const StrainField b = add_noise(s, 0.1, 11);
    const StrainField c = add_noise(s, 0.1, 12);
    bool differs = false;
    for (std::size_t k = 0; k < g.size(); ++k) {
        REQUIRE(a.yy[k] == b.yy[k]);
        differs |= a.yy[k] != c.yy[k];
    }
    CHECK(differs);

    const std::pair<const ScalarField*, const ScalarField*> chans[] = {{&s.xx, &a.xx}, {&s.yy, &a.yy}, {&s.xy, &a.xy}};
    for (const auto& [clean, noisy] : chans) {
        double m = 0, q = 0;
        const double n = static_cast<double>(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) m += (*noisy)[k] - (*clean)[k];
        m /= n;
        for (std::size_t k = 0; k < g.size(); ++k) q += std::pow((*noisy)[k] - (*clean)[k] - m, 2);
        const double sd = std::sqrt(q / (n - 1));
        CHECK(std::abs(sd - 0.1 * clean->max_abs()) <= 0.05 * 0.1 * clean->max_abs());
    }
    CHECK_THROWS_AS(add_noise(s, -0.1, 1), InvalidArgument);
}

TEST_CASE("normalize_for_network") {
    const GridGeom g(4, 3, 1.0, 1.0);
    StrainField s{ScalarField(g), ScalarField(g, 0.01), ScalarField(g)};
    NetworkInput in = normalize_for_network(s);
    CHECK(in.eps_ref == 0.01);
    CHECK(in.input.shape() == Shape{3, 3, 4});
    CHECK(in.input.values()[0] == 0.0);
    CHECK(in.input.values()[12] == Approx(1.0));

    StrainField t{ScalarField(g, 0.03), ScalarField(g, -0.06), ScalarField(g, 0.015)};
    StrainField t3{ScalarField(g, 0.09), ScalarField(g, -0.18), ScalarField(g, 0.045)};
    const NetworkInput a = normalize_for_network(t), b = normalize_for_network(t3);
    CHECK(b.eps_ref == Approx(3 * a.eps_ref));
    for (int k = 0; k < a.input.numel(); ++k) CHECK(a.input.values()[k] == Approx(b.input.values()[k]).epsilon(1e-15));

    StrainField z{ScalarField(g), ScalarField(g), ScalarField(g)};
    CHECK_THROWS_AS(normalize_for_network(z), InvalidArgument);
}
