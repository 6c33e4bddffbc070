#include "elastinv/losses.hpp"

namespace elastinv {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::P: return "P";
        case Variant::PS: return "PS";
        case Variant::PS_W1: return "PS-W1";
        case Variant::PS_W2: return "PS-W2";
        case Variant::DensePINN: return "dense-PINN";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::P, Variant::PS, Variant::PS_W1, Variant::PS_W2, Variant::DensePINN}) {
        if (variant_name(v) == name) return v;
    }
    throw InvalidArgument("unknown variant '" + name + "' (expected P, PS, PS-W1, PS-W2 or dense-PINN)");
}

bool has_stress_outputs(Variant v) { return v != Variant::P; }
bool is_weighted(Variant v) { return v == Variant::PS_W1 || v == Variant::PS_W2; }

namespace {

Tensor field_tensor(const ScalarField& f) {
    return Tensor::constant({f.geom().ny, f.geom().nx}, std::vector<double>(f.values().begin(), f.values().end()));
}

Tensor weighted_mse(const Tensor& residual, const Parameter* psi) {
    return psi ? ops::mse(ops::mul(psi->tensor(), residual)) : ops::mse(residual);
}

double plain_mse(const Tensor& r) {
    double s = 0.0;
    for (double v : r.values()) s += v * v;
    return s / static_cast<double>(r.numel());
}

LossPair make_pair(const Tensor& residual, const Parameter* psi) {
    return {weighted_mse(residual, psi), plain_mse(residual)};
}

}  // namespace

PhysicsProblem PhysicsProblem::make(const StrainField& strain, const BoundarySpec& bc, const FDSpacing& sp) {
    return {strain.geom(), field_tensor(strain.xx), field_tensor(strain.yy), field_tensor(strain.xy), bc, sp};
}

StressTensors constitutive_stress(const Tensor& M, const Tensor& Lambda, const PhysicsProblem& prob) {
    using namespace ops;
    // S_xx = 2M eps_xx + Lambda tr, S_yy = 2M eps_yy + Lambda tr, S_xy = 2M eps_xy.
    const Tensor trace = add(prob.eps_xx, prob.eps_yy);
    return {add(mul(M, affine(prob.eps_xx, 2.0)), mul(Lambda, trace)),
            add(mul(M, affine(prob.eps_yy, 2.0)), mul(Lambda, trace)), mul(M, affine(prob.eps_xy, 2.0))};
}

WeightFields WeightFields::for_variant(Variant v, const GridGeom& g) {
    if (!is_weighted(v)) throw InvalidArgument("variant " + variant_name(v) + " has no weight fields");
    const auto ones = [](Shape s) {
        const std::size_t n = numel(s);
        return Parameter(std::move(s), std::vector<double>(n, 1.0), Parameter::Direction::ascent);
    };
    WeightFields w;
    w.psi_C.emplace(ones({g.ny, g.nx}));
    if (v == Variant::PS_W1) w.psi_E.emplace(ones({g.ny, g.nx}));
    w.psi_sides.emplace(ones({2, g.ny - 2}));
    w.psi_topbottom.emplace(ones({2, g.nx}));
    return w;
}

std::vector<Parameter*> WeightFields::parameters() {
    std::vector<Parameter*> out;
    for (auto* p : {&psi_C, &psi_E, &psi_sides, &psi_topbottom}) {
        if (*p) out.push_back(&**p);
    }
    return out;
}

double LossBreakdown::boundary_total() const {
    double s = 0.0;
    for (const auto& edge : boundary) {
        for (const auto& c : edge) s += c.value_or(0.0);
    }
    return s;
}

std::array<LossPair, 2> equilibrium_loss(const Tensor& r1, const Tensor& r2, const Parameter* psi_E) {
    return {make_pair(r1, psi_E), make_pair(r2, psi_E)};
}

std::array<LossPair, 2> equilibrium_loss(const StressTensors& s, const FDSpacing& sp, const Parameter* psi_E) {
    const auto r = equilibrium_residual(s.xx, s.yy, s.xy, sp);
    return equilibrium_loss(r.r1, r.r2, psi_E);
}

std::array<LossPair, 3> constitutive_loss(const StressTensors& s_net, const Tensor& M, const Tensor& Lambda,
                                          const PhysicsProblem& prob, const Parameter* psi_C) {
    const StressTensors s_law = constitutive_stress(M, Lambda, prob);
    return {make_pair(ops::sub(s_net.xx, s_law.xx), psi_C), make_pair(ops::sub(s_net.yy, s_law.yy), psi_C),
            make_pair(ops::sub(s_net.xy, s_law.xy), psi_C)};
}

std::vector<int> edge_indices(const GridGeom& g, Edge e) {
    std::vector<int> idx;
    switch (e) {
        case Edge::bottom:
        case Edge::top: {
            const int j = e == Edge::bottom ? 0 : g.ny - 1;
            for (int i = 0; i < g.nx; ++i) idx.push_back(static_cast<int>(g.index(i, j)));
            break;
        }
        case Edge::left:
        case Edge::right: {
            const int i = e == Edge::left ? 0 : g.nx - 1;
            for (int j = 1; j < g.ny - 1; ++j) idx.push_back(static_cast<int>(g.index(i, j)));
            break;
        }
    }
    return idx;
}

std::vector<BoundaryTerm> boundary_loss(const StressTensors& s, const BoundarySpec& bc, const Parameter* psi_sides,
                                        const Parameter* psi_topbottom) {
    if (s.xx.shape().size() != 2) throw InvalidArgument("boundary_loss expects [H, W] stresses");
    const int ny = s.xx.dim(0);
    const int nx = s.xx.dim(1);
    if (nx < 2 || ny < 3) throw InvalidArgument("boundary_loss needs a grid with side rows");
    const GridGeom g(nx, ny, 1.0, 1.0);
    std::vector<BoundaryTerm> terms;
    for (Edge e : kEdges) {
        const EdgeCondition& c = bc[e];
        if (!c.normal_traction && !c.shear_traction) continue;
        const bool horizontal = e == Edge::top || e == Edge::bottom;
        const std::vector<int> idx = edge_indices(g, e);
        Tensor psi;
        const Parameter* owner = horizontal ? psi_topbottom : psi_sides;
        if (owner) {
            const int row = (e == Edge::bottom || e == Edge::left) ? 0 : 1;
            const int n = static_cast<int>(idx.size());
            std::vector<int> rows(n);
            for (int k = 0; k < n; ++k) rows[k] = row * n + k;
            psi = ops::gather(owner->tensor(), std::move(rows));
        }
        auto add_term = [&](Component comp, const Tensor& field, double target) {
            const Tensor r = ops::affine(ops::gather(field, idx), 1.0, -target);
            const Tensor w = psi.defined() ? ops::mse(ops::mul(psi, r)) : ops::mse(r);
            terms.push_back({e, comp, {w, plain_mse(r)}});
        };
        if (c.normal_traction) add_term(Component::normal, horizontal ? s.yy : s.xx, *c.normal_traction);
        if (c.shear_traction) add_term(Component::shear, s.xy, *c.shear_traction);
    }
    return terms;
}

AssembledLoss assemble_loss(Variant variant, const NetworkOutputs& out, const PhysicsProblem& prob,
                            WeightFields* weights) {
    if (is_weighted(variant) != (weights != nullptr)) {
        throw InvalidArgument("weight fields must be given exactly for PS-W1 and PS-W2");
    }
    if (weights) {
        const bool want_e = variant == Variant::PS_W1;
        if (static_cast<bool>(weights->psi_E) != want_e || !weights->psi_C || !weights->psi_sides ||
            !weights->psi_topbottom) {
            throw InvalidArgument("weight fields do not match variant " + variant_name(variant));
        }
    }
    const Parameter* psi_C = weights && weights->psi_C ? &*weights->psi_C : nullptr;
    const Parameter* psi_E = weights && weights->psi_E ? &*weights->psi_E : nullptr;
    const Parameter* psi_S = weights && weights->psi_sides ? &*weights->psi_sides : nullptr;
    const Parameter* psi_TB = weights && weights->psi_topbottom ? &*weights->psi_topbottom : nullptr;

    AssembledLoss res;
    LossBreakdown& b = res.breakdown;
    std::vector<Tensor> weighted;

    StressTensors stress;
    if (variant == Variant::P) {
        stress = constitutive_stress(out.mu, out.lambda, prob);
    } else {
        if (!out.stress.xx.defined()) throw InvalidArgument(variant_name(variant) + " needs network stress outputs");
        stress = out.stress;
    }

    std::array<LossPair, 2> eq;
    if (variant == Variant::DensePINN) {
        if (!out.r1.defined() || !out.r2.defined()) throw InvalidArgument("dense-PINN needs coordinate residuals");
        eq = equilibrium_loss(out.r1, out.r2, nullptr);
    } else {
        eq = equilibrium_loss(stress, prob.spacing, psi_E);
    }
    b.equilibrium_x = eq[0].unweighted;
    b.equilibrium_y = eq[1].unweighted;
    weighted.push_back(eq[0].weighted);
    weighted.push_back(eq[1].weighted);

    if (variant != Variant::P) {
        const auto con = constitutive_loss(stress, out.mu, out.lambda, prob, psi_C);
        b.constitutive_xx = con[0].unweighted;
        b.constitutive_yy = con[1].unweighted;
        b.constitutive_xy = con[2].unweighted;
        for (const auto& c : con) weighted.push_back(c.weighted);
    }

    for (const BoundaryTerm& t : boundary_loss(stress, prob.bc, psi_S, psi_TB)) {
        b.boundary[static_cast<int>(t.edge)][static_cast<int>(t.component)] = t.loss.unweighted;
        weighted.push_back(t.loss.weighted);
    }

    res.objective = ops::sum(weighted);
    b.weighted_total = res.objective.item();
    b.unweighted_total = b.equilibrium_x + b.equilibrium_y + b.constitutive_xx.value_or(0.0) +
                         b.constitutive_yy.value_or(0.0) + b.constitutive_xy.value_or(0.0) + b.boundary_total();
    return res;
}

void minmax_update(WeightFields& weights, std::span<Parameter* const> net_params, const AdamSettings& settings,
                   long step) {
    std::vector<Parameter*> all(net_params.begin(), net_params.end());
    // A weight with no loss term (e.g. psi_sides when no side edge has targets) gets no gradient.
    for (Parameter* p : weights.parameters()) {
        if (p->tensor().has_grad()) all.push_back(p);
    }
    adam_step(all, settings, step);
}

}  // namespace elastinv
