#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "elastinv/autodiff.hpp"
#include "elastinv/boundary.hpp"
#include "elastinv/fd.hpp"
#include "elastinv/grid.hpp"

namespace elastinv {

enum class Variant { P, PS, PS_W1, PS_W2, DensePINN };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool has_stress_outputs(Variant v);
bool is_weighted(Variant v);

/// Strain data as constant tensors, plus the boundary targets (divided by sigma0) and spacing.
struct PhysicsProblem {
    GridGeom geom;
    Tensor eps_xx;  ///< [H, W]
    Tensor eps_yy;
    Tensor eps_xy;
    BoundarySpec bc;  ///< dimensionless targets
    FDSpacing spacing;

    static PhysicsProblem make(const StrainField& strain, const BoundarySpec& bc_dimensionless, const FDSpacing& sp);
};

struct StressTensors {
    Tensor xx;  ///< [H, W]
    Tensor yy;
    Tensor xy;
};

/// Differentiable dimensionless constitutive law on [H, W] tensors.
StressTensors constitutive_stress(const Tensor& M, const Tensor& Lambda, const PhysicsProblem& prob);

/// Self-adaptive spatial weights, all ascent parameters starting at 1.
///   psi_C, psi_E:   [H, W]
///   psi_sides:      [2, H - 2]  row 0 = left column, row 1 = right column, corners excluded
///   psi_topbottom:  [2, W]      row 0 = bottom row, row 1 = top row, corners included
struct WeightFields {
    std::optional<Parameter> psi_C;
    std::optional<Parameter> psi_E;
    std::optional<Parameter> psi_sides;
    std::optional<Parameter> psi_topbottom;

    /// Fields for a weighted variant: PS-W1 gets all four, PS-W2 all but psi_E.
    static WeightFields for_variant(Variant v, const GridGeom& geom);
    [[nodiscard]] std::vector<Parameter*> parameters();
};

struct LossPair {
    Tensor weighted;
    double unweighted = 0.0;
};

enum class Component { normal = 0, shear = 1 };

/// Per-term losses. Boundary entries exist only for specified edge-components.
struct LossBreakdown {
    double equilibrium_x = 0.0;
    double equilibrium_y = 0.0;
    std::optional<double> constitutive_xx;
    std::optional<double> constitutive_yy;
    std::optional<double> constitutive_xy;
    std::array<std::array<std::optional<double>, 2>, 4> boundary{};  // [edge][component]
    double weighted_total = 0.0;
    double unweighted_total = 0.0;

    [[nodiscard]] double boundary_total() const;
};

/// Equilibrium term from precomputed residual fields.
std::array<LossPair, 2> equilibrium_loss(const Tensor& r1, const Tensor& r2, const Parameter* psi_E);
/// Equilibrium term with finite-difference residuals of [H, W] stresses.
std::array<LossPair, 2> equilibrium_loss(const StressTensors& s, const FDSpacing& sp, const Parameter* psi_E);

/// Network stresses against the constitutive law with the network's Lambda, M and the given strains.
std::array<LossPair, 3> constitutive_loss(const StressTensors& s_net, const Tensor& M, const Tensor& Lambda,
                                          const PhysicsProblem& prob, const Parameter* psi_C);

struct BoundaryTerm {
    Edge edge;
    Component component;
    LossPair loss;
};

/// One term per specified edge-component: normal targets S_yy on top/bottom and S_xx on the
/// sides, shear targets S_xy everywhere.
std::vector<BoundaryTerm> boundary_loss(const StressTensors& s, const BoundarySpec& bc_dimensionless,
                                        const Parameter* psi_sides, const Parameter* psi_topbottom);

/// Flat pixel indices of a boundary edge (top/bottom include the corners, sides exclude them).
std::vector<int> edge_indices(const GridGeom& geom, Edge e);

/// What the networks produced for one forward pass.
struct NetworkOutputs {
    Tensor lambda;  ///< [H, W]
    Tensor mu;      ///< [H, W]
    StressTensors stress;  ///< network stress channels (PS family, dense PINN)
    Tensor r1;  ///< dense PINN: equilibrium residuals from coordinate derivatives
    Tensor r2;
};

struct AssembledLoss {
    LossBreakdown breakdown;
    Tensor objective;  ///< weighted total; the optimizer differentiates this
};

AssembledLoss assemble_loss(Variant variant, const NetworkOutputs& out, const PhysicsProblem& prob,
                            WeightFields* weights);

/// Descends the network parameters and ascends the weights in one Adam step.
void minmax_update(WeightFields& weights, std::span<Parameter* const> net_params, const AdamSettings& settings,
                   long step);

}  // namespace elastinv
