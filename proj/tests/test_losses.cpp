#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "elastinv/fem.hpp"
#include "elastinv/losses.hpp"
#include "elastinv/networks.hpp"
#include "gradcheck.hpp"

using namespace elastinv;
using elastinv::testing::grad_check;
using elastinv::testing::randn;
using doctest::Approx;

namespace {

Tensor hw(const GridGeom& g, double v) { return Tensor::full({g.ny, g.nx}, v); }

Tensor from_field(const ScalarField& f, double scale = 1.0) {
    std::vector<double> v(f.values().begin(), f.values().end());
    for (double& x : v) x *= scale;
    return Tensor::constant({f.geom().ny, f.geom().nx}, std::move(v));
}

template <class F>
Tensor sample(const GridGeom& g, const FDSpacing& sp, F f) {
    std::vector<double> v(g.size());
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) v[g.index(i, j)] = f(i * sp.dX, j * sp.dY);
    }
    return Tensor::constant({g.ny, g.nx}, std::move(v));
}

PhysicsProblem random_problem(const GridGeom& g, std::uint64_t seed, const BoundarySpec& bc) {
    StrainField e{ScalarField(g, randn(g.size(), seed, 0.02)), ScalarField(g, randn(g.size(), seed + 1, 0.02)),
                  ScalarField(g, randn(g.size(), seed + 2, 0.01))};
    return PhysicsProblem::make(e, bc, grid_spacing(g, {1.0, 1.0}));
}

NetworkOutputs random_outputs(const GridGeom& g, std::uint64_t seed) {
    auto t = [&](std::uint64_t s) { return Tensor::constant({g.ny, g.nx}, randn(g.size(), s)); };
    NetworkOutputs o;
    o.lambda = t(seed);
    o.mu = t(seed + 1);
    o.stress = {t(seed + 2), t(seed + 3), t(seed + 4)};
    return o;
}

void set_all(Parameter& p, double v) {
    for (double& x : p.tensor().mutable_values()) x = v;
}

}  // namespace

TEST_CASE("equilibrium_loss examples") {
    const GridGeom g(7, 6, 1.0, 1.0);
    const FDSpacing sp{0.2, 0.3};
    const StressTensors s{sample(g, sp, [](double x, double y) { return 2 * x + y; }), sample(g, sp, [](double x, double y) { return 3 * x - y; }),
                          sample(g, sp, [](double x, double y) { return x - 2 * y; })};
    // div: d(2x+y)/dx + d(x-2y)/dy = 2 - 2 = 0; d(x-2y)/dx + d(3x-y)/dy = 1 - 1 = 0.
    auto l = equilibrium_loss(s, sp, nullptr);
    CHECK(l[0].unweighted <= 1e-24);
    CHECK(l[1].unweighted <= 1e-24);

    Parameter psi({g.ny, g.nx}, std::vector<double>(g.size(), 1.0), Parameter::Direction::ascent);
    const Tensor r1 = Tensor::constant({g.ny, g.nx}, randn(g.size(), 4));
    const Tensor r2 = hw(g, 0.7);
    l = equilibrium_loss(r1, r2, &psi);
    CHECK(l[0].weighted.item() == Approx(l[0].unweighted).epsilon(1e-14));
    set_all(psi, 2.0);
    l = equilibrium_loss(r1, r2, &psi);
    CHECK(l[1].weighted.item() == Approx(4 * l[1].unweighted).epsilon(1e-14));
    CHECK(l[1].unweighted == Approx(0.49));
}

TEST_CASE("constitutive_loss examples") {
    const GridGeom g(5, 4, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 3, BoundarySpec::two_sided_tension(1.0));
    const Tensor M = Tensor::constant({g.ny, g.nx}, randn(g.size(), 8));
    const Tensor L = Tensor::constant({g.ny, g.nx}, randn(g.size(), 9));
    const StressTensors exact = constitutive_stress(M, L, prob);
    auto l = constitutive_loss(exact, M, L, prob, nullptr);
    for (const auto& p : l) CHECK(p.unweighted == 0.0);

    const PhysicsProblem zero = PhysicsProblem::make(
        {ScalarField(g), ScalarField(g), ScalarField(g)}, BoundarySpec::two_sided_tension(1.0), {1.0, 1.0});
    l = constitutive_loss({hw(g, 0), hw(g, 0), hw(g, 0)}, M, L, zero, nullptr);
    for (const auto& p : l) CHECK(p.unweighted == 0.0);

    Parameter psi({g.ny, g.nx}, std::vector<double>(g.size(), 1.0), Parameter::Direction::ascent);
    l = constitutive_loss({ops::affine(exact.xx, 1.0, 1.0), exact.yy, exact.xy}, M, L, prob, &psi);
    CHECK(l[0].unweighted == Approx(1.0).epsilon(1e-12));
    CHECK(l[0].weighted.item() == Approx(1.0).epsilon(1e-12));
    CHECK(l[1].unweighted == 0.0);
}

TEST_CASE("boundary_loss examples") {
    const GridGeom g(6, 5, 1.0, 1.0);
    BoundarySpec bc;
    bc[Edge::top].normal_traction = 1.0;
    auto terms = boundary_loss({hw(g, 0.3), hw(g, 1.0), hw(g, 0.0)}, bc, nullptr, nullptr);
    REQUIRE(terms.size() == 1);
    CHECK(terms[0].edge == Edge::top);
    CHECK(terms[0].loss.unweighted == 0.0);

    BoundarySpec sides;
    sides[Edge::left].normal_traction = 0.0;
    sides[Edge::right].normal_traction = 0.0;
    terms = boundary_loss({hw(g, 0.5), hw(g, 1.0), hw(g, 0.0)}, sides, nullptr, nullptr);
    REQUIRE(terms.size() == 2);
    for (const auto& t : terms) CHECK(t.loss.unweighted == Approx(0.25));

    const BoundarySpec roller = BoundarySpec::top_load_roller_bottom(1.0);
    terms = boundary_loss({hw(g, 0.0), hw(g, 1.0), hw(g, 0.0)}, roller, nullptr, nullptr);
    for (const auto& t : terms) {
        CHECK(t.loss.unweighted == 0.0);
        if (t.edge == Edge::bottom) CHECK(t.component == Component::shear);
    }
}

TEST_CASE("edge ownership: corners belong to top/bottom") {
    const GridGeom g(5, 4, 1.0, 1.0);
    CHECK(edge_indices(g, Edge::bottom) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(edge_indices(g, Edge::top) == std::vector<int>{15, 16, 17, 18, 19});
    CHECK(edge_indices(g, Edge::left) == std::vector<int>{5, 10});
    CHECK(edge_indices(g, Edge::right) == std::vector<int>{9, 14});
    const WeightFields w = WeightFields::for_variant(Variant::PS_W2, g);
    CHECK(!w.psi_E);
    CHECK(w.psi_sides->tensor().shape() == Shape{2, 2});
    CHECK(w.psi_topbottom->tensor().shape() == Shape{2, 5});
    for (double v : w.psi_C->tensor().values()) CHECK(v == 1.0);
}

TEST_CASE("weighting identity and c^2 law") {
    const GridGeom g(9, 8, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 21, BoundarySpec::two_sided_tension(1.0));
    const NetworkOutputs out = random_outputs(g, 30);
    for (Variant v : {Variant::PS_W1, Variant::PS_W2}) {
        WeightFields w = WeightFields::for_variant(v, g);
        const AssembledLoss a = assemble_loss(v, out, prob, &w);
        CHECK(a.breakdown.weighted_total == Approx(a.breakdown.unweighted_total).epsilon(1e-12));
    }
    WeightFields w = WeightFields::for_variant(Variant::PS_W1, g);
    const double c = 1.7;
    auto con = constitutive_loss(out.stress, out.mu, out.lambda, prob, &*w.psi_C);
    const double base = con[0].weighted.item();
    set_all(*w.psi_C, c);
    con = constitutive_loss(out.stress, out.mu, out.lambda, prob, &*w.psi_C);
    CHECK(con[0].weighted.item() == Approx(c * c * base).epsilon(1e-10));
}

TEST_CASE("first min-max step raises psi where residuals are nonzero") {
    const GridGeom g(6, 6, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 40, BoundarySpec::two_sided_tension(1.0));
    NetworkOutputs out = random_outputs(g, 50);
    // Make the constitutive xx residual zero at pixel 7 for all components.
    const StressTensors law = constitutive_stress(out.mu, out.lambda, prob);
    std::vector<double> sxx(law.xx.values().begin(), law.xx.values().end());
    std::vector<double> syy(law.yy.values().begin(), law.yy.values().end());
    std::vector<double> sxy(law.xy.values().begin(), law.xy.values().end());
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (k == 7) continue;
        sxx[k] += 0.1 * (k % 5 + 1);
        syy[k] -= 0.05;
        sxy[k] += 0.02 * k;
    }
    out.stress = {Tensor::constant({6, 6}, sxx), Tensor::constant({6, 6}, syy), Tensor::constant({6, 6}, sxy)};
    WeightFields w = WeightFields::for_variant(Variant::PS_W1, g);
    const AssembledLoss a = assemble_loss(Variant::PS_W1, out, prob, &w);
    a.objective.backward();
    const auto grad = w.psi_C->tensor().grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double r2 = std::pow(sxx[k] - law.xx.values()[k], 2) + std::pow(syy[k] - law.yy.values()[k], 2) +
                          std::pow(sxy[k] - law.xy.values()[k], 2);
        CHECK(grad[k] >= 0.0);
        CHECK(grad[k] == Approx(2.0 * r2 / g.size()).epsilon(1e-12));
    }
    const std::vector<double> before(w.psi_C->tensor().values().begin(), w.psi_C->tensor().values().end());
    minmax_update(w, {}, AdamSettings{}, 1);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double after = w.psi_C->tensor().values()[k];
        if (k == 7) {
            CHECK(after == before[k]);
        } else {
            CHECK(after > before[k]);
        }
    }
}

TEST_CASE("raw psi gradient ratio for residuals r and 2r") {
    const GridGeom g(4, 4, 1.0, 1.0);
    Parameter psi({4, 4}, std::vector<double>(16, 1.0), Parameter::Direction::ascent);
    std::vector<double> r(16, 0.0);
    r[5] = 0.3;
    r[6] = 0.6;
    const auto l = equilibrium_loss(Tensor::constant({4, 4}, r), hw(g, 0.0), &psi);
    l[0].weighted.backward();
    CHECK(psi.tensor().grad()[6] == Approx(4 * psi.tensor().grad()[5]).epsilon(1e-14));
    CHECK(psi.tensor().grad()[0] == 0.0);
}

namespace {

struct TruthLosses {
    LossBreakdown ps;
    LossBreakdown p;
    double far_equilibrium;  ///< residual mse over interior pixels >= 3 px from the interface
};

TruthLosses truth_losses(int n) {
    const GridGeom g(n, n, 1.0, 1.0);
    PhantomSpec spec;
    spec.materials = {{1000.0, 0.45}, {2000.0, 0.35}};
    spec.circles = {{0.5, 0.5, 0.25, 1}};
    const Phantom ph = build_phantom(spec, g);
    const BoundarySpec bc = BoundarySpec::two_sided_tension(40.0);
    const FemSolution sol = solve_plane_strain(ph.material, bc);
    const Scales sc = compute_scales(g, bc);
    const PhysicsProblem prob = PhysicsProblem::make(sol.strain, bc.scaled(sc.sigma0), grid_spacing(g, sc));
    NetworkOutputs out;
    out.lambda = from_field(ph.material.lambda, 1.0 / sc.sigma0);
    out.mu = from_field(ph.material.mu, 1.0 / sc.sigma0);
    out.stress = {from_field(sol.stress.xx, 1.0 / sc.sigma0), from_field(sol.stress.yy, 1.0 / sc.sigma0),
                  from_field(sol.stress.xy, 1.0 / sc.sigma0)};
    TruthLosses t;
    t.ps = assemble_loss(Variant::PS, out, prob, nullptr).breakdown;
    t.p = assemble_loss(Variant::P, out, prob, nullptr).breakdown;
    const auto r = equilibrium_residual(out.stress.xx, out.stress.yy, out.stress.xy, prob.spacing);
    double far = 0.0;
    int count = 0;
    for (int j = 1; j < n - 1; ++j) {
        for (int i = 1; i < n - 1; ++i) {
            if (std::abs(std::hypot(g.x(i) - 0.5, g.y(j) - 0.5) - 0.25) < 3 * g.hx()) continue;
            const std::size_t k = g.index(i, j);
            far += std::pow(r.r1.values()[k], 2) + std::pow(r.r2.values()[k], 2);
            ++count;
        }
    }
    t.far_equilibrium = far / count;
    return t;
}

}  // namespace

TEST_CASE("ground-truth FEM fields as network outputs") {
    // FD residuals of the FEM stress are pure truncation error: they shrink with refinement away
    // from the material interface, where the true tangential stress jumps.
    const TruthLosses coarse = truth_losses(32), fine = truth_losses(64);
    for (const TruthLosses* t : {&coarse, &fine}) {
        CHECK(*t->ps.constitutive_xx <= 1e-20);
        CHECK(*t->ps.constitutive_yy <= 1e-20);
        CHECK(*t->ps.constitutive_xy <= 1e-20);
        CHECK(!t->p.constitutive_xx);
        CHECK(t->p.equilibrium_x == Approx(t->ps.equilibrium_x).epsilon(1e-12));
        CHECK(t->p.equilibrium_y == Approx(t->ps.equilibrium_y).epsilon(1e-12));
    }
    MESSAGE("boundary " << coarse.ps.boundary_total() << " -> " << fine.ps.boundary_total() << ", far-field equilibrium "
                        << coarse.far_equilibrium << " -> " << fine.far_equilibrium);
    CHECK(fine.ps.boundary_total() < coarse.ps.boundary_total());
    CHECK(fine.ps.boundary_total() <= 5e-3);
    CHECK(fine.far_equilibrium < coarse.far_equilibrium);
    CHECK(fine.far_equilibrium <= 0.1);
}

TEST_CASE("variant P and PS agree when stresses satisfy the law") {
    const GridGeom g(7, 6, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 60, BoundarySpec::top_load_roller_bottom(1.0));
    NetworkOutputs out = random_outputs(g, 70);
    out.stress = constitutive_stress(out.mu, out.lambda, prob);
    const LossBreakdown p = assemble_loss(Variant::P, out, prob, nullptr).breakdown;
    const LossBreakdown ps = assemble_loss(Variant::PS, out, prob, nullptr).breakdown;
    CHECK(p.equilibrium_x == ps.equilibrium_x);
    CHECK(p.equilibrium_y == ps.equilibrium_y);
}

TEST_CASE("weights must match the variant") {
    const GridGeom g(5, 5, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 80, BoundarySpec::two_sided_tension(1.0));
    const NetworkOutputs out = random_outputs(g, 90);
    WeightFields w1 = WeightFields::for_variant(Variant::PS_W1, g);
    WeightFields w2 = WeightFields::for_variant(Variant::PS_W2, g);
    CHECK_THROWS_AS(assemble_loss(Variant::PS, out, prob, &w1), InvalidArgument);
    CHECK_THROWS_AS(assemble_loss(Variant::PS_W1, out, prob, nullptr), InvalidArgument);
    CHECK_THROWS_AS(assemble_loss(Variant::PS_W2, out, prob, &w1), InvalidArgument);
    CHECK_THROWS_AS(assemble_loss(Variant::PS_W1, out, prob, &w2), InvalidArgument);
    CHECK_THROWS_AS(WeightFields::for_variant(Variant::P, g), InvalidArgument);
}

TEST_CASE("assemble_loss gradient check through a tiny UNet") {
    const GridGeom g(8, 8, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 100, BoundarySpec::two_sided_tension(1.0));
    std::vector<double> inp;
    for (const Tensor* e : {&prob.eps_xx, &prob.eps_yy, &prob.eps_xy}) inp.insert(inp.end(), e->values().begin(), e->values().end());
    const Tensor input = Tensor::constant({3, 8, 8}, inp);
    for (Variant v : {Variant::PS, Variant::PS_W1}) {
        CAPTURE(variant_name(v));
        UNetConfig cfg;
        cfg.channels = {8, 16};
        cfg.seed = 3;
        UNet net(cfg);
        std::optional<WeightFields> w;
        if (is_weighted(v)) {
            w = WeightFields::for_variant(v, g);
            // Away from 1 so the psi gradient is not a trivial special case.
            std::uint64_t s = 7;
            for (Parameter* p : w->parameters()) {
                auto vals = randn(p->tensor().numel(), s++, 0.3);
                auto dst = p->tensor().mutable_values();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = 1.0 + vals[k];
            }
        }
        auto loss = [&] {
            const Tensor y = net.forward(input);
            NetworkOutputs o;
            o.lambda = ops::channel(y, 0);
            o.mu = ops::channel(y, 1);
            o.stress = {ops::channel(y, 2), ops::channel(y, 3), ops::channel(y, 4)};
            return assemble_loss(v, o, prob, w ? &*w : nullptr).objective;
        };
        std::vector<Tensor> net_leaves;
        for (Parameter* p : net.parameters()) net_leaves.push_back(p->tensor());
        const auto gnet = grad_check(loss, net_leaves, 60, 11);
        CHECK(gnet.checked >= 50);
        CHECK(gnet.worst <= 1e-4);
        if (w) {
            std::vector<Tensor> psi_leaves;
            for (Parameter* p : w->parameters()) psi_leaves.push_back(p->tensor());
            const auto gpsi = grad_check(loss, psi_leaves, 60, 12);
            CHECK(gpsi.checked >= 50);
            CHECK(gpsi.worst <= 1e-4);
        }
    }
}

TEST_CASE("dense-PINN loss gradient check") {
    const GridGeom g(5, 4, 1.0, 1.0);
    const PhysicsProblem prob = random_problem(g, 110, BoundarySpec::two_sided_tension(1.0));
    DensePinn net(MLPConfig{2, 6, Activation::tanh, 4});
    std::vector<double> xy;
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            xy.push_back(i * prob.spacing.dX);
            xy.push_back(j * prob.spacing.dY);
        }
    }
    const Tensor coords = Tensor::constant({static_cast<int>(g.size()), 2}, xy);
    auto loss = [&] {
        const PinnOutputs p = net.forward(coords, true);
        const Shape s{g.ny, g.nx};
        NetworkOutputs o;
        o.lambda = ops::reshape(ops::column(p.params, 0), s);
        o.mu = ops::reshape(ops::column(p.params, 1), s);
        o.stress = {ops::reshape(ops::column(p.stresses, 0), s), ops::reshape(ops::column(p.stresses, 1), s),
                    ops::reshape(ops::column(p.stresses, 2), s)};
        o.r1 = ops::reshape(ops::add(ops::column(p.dstress_dx, 0), ops::column(p.dstress_dy, 2)), s);
        o.r2 = ops::reshape(ops::add(ops::column(p.dstress_dx, 2), ops::column(p.dstress_dy, 1)), s);
        return assemble_loss(Variant::DensePINN, o, prob, nullptr).objective;
    };
    std::vector<Tensor> leaves;
    for (Parameter* p : net.parameters()) leaves.push_back(p->tensor());
    const auto gc = grad_check(loss, leaves, 60, 13);
    CHECK(gc.checked >= 50);
    CHECK(gc.worst <= 1e-4);
}
