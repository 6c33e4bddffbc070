#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "elastinv/autodiff.hpp"
#include "elastinv/boundary.hpp"
#include "elastinv/grid.hpp"

namespace elastinv {

struct RegionMaterial {
    double E = 1.0;  // Pa
    double nu = 0.3;
};

struct Circle {
    double cx = 0.0;
    double cy = 0.0;
    double r = 0.0;
    int material = 1;  // index into PhantomSpec::materials
};

/// Synthetic specimen description. `materials[0]` is the background for inclusion kinds.
struct PhantomSpec {
    enum class Kind { inclusion, multi_inclusion, layered, label_map };

    Kind kind = Kind::inclusion;
    std::vector<RegionMaterial> materials;
    /// inclusion / multi_inclusion; later circles paint over earlier ones.
    std::vector<Circle> circles;
    /// layered: increasing y positions (m) separating materials[0] (bottom) .. materials[n].
    std::vector<double> layer_bounds;
    /// label_map: ny x nx material indices, row 0 = bottom.
    std::vector<int> labels;
    int label_nx = 0;
    int label_ny = 0;
};

std::string kind_name(PhantomSpec::Kind k);
PhantomSpec::Kind kind_from_name(const std::string& name);

struct Phantom {
    MaterialField material;
    ScalarField E;
    ScalarField nu;
    std::vector<int> region;  ///< material index per pixel
    std::vector<std::string> warnings;
};

/// Rasterizes the phantom at pixel centers (grid nodes).
Phantom build_phantom(const PhantomSpec& spec, const GridGeom& geom);

struct FemSolution {
    StrainField strain;  ///< dimensionless, tensorial shear
    StressField stress;  ///< Pa
    ScalarField ux;      ///< m
    ScalarField uy;      ///< m
    double relative_residual = 0.0;
    /// |sum of reactions + sum of applied nodal forces| / sum |applied nodal forces|, worst of x, y.
    double force_balance_error = 0.0;
    std::vector<int> pinned_dofs;  ///< extra point constraints added against rigid-body motion
};

namespace fem {

/// Degree of freedom numbering: node (i, j) owns 2 * (j * nx + i) (x) and that + 1 (y).
inline int dof(const GridGeom& g, int i, int j, int comp) { return 2 * (j * g.nx + i) + comp; }

/// Full (unconstrained) stiffness matrix of the Q4 mesh whose nodes are the pixels. Element
/// material is the mean of its four corner pixels' Lame parameters.
Eigen::SparseMatrix<double> assemble_stiffness(const MaterialField& material);

/// Consistent nodal forces for the uniform edge tractions in `bc`.
Eigen::VectorXd traction_load(const GridGeom& geom, const BoundarySpec& bc);

/// Displacement-constrained DOFs from edge constraints plus the point pins needed to remove
/// remaining rigid-body modes. Throws NumericalError when the applied load does work on a mode
/// that no constraint removes.
std::vector<int> constrained_dofs(const GridGeom& geom, const BoundarySpec& bc, const Eigen::VectorXd& load,
                                  std::vector<int>* pins = nullptr);

}  // namespace fem

FemSolution solve_plane_strain(const MaterialField& material, const BoundarySpec& bc);

/// Adds zero-mean Gaussian noise with standard deviation level * max|c| to each channel c.
/// Channel k draws from its own stream seeded by (seed, k).
StrainField add_noise(const StrainField& strain, double level, std::uint64_t seed);

struct NetworkInput {
    Tensor input;  ///< [3, ny, nx]: eps_xx, eps_yy, eps_xy
    double eps_ref = 1.0;
};

/// Divides all three strain channels by one shared max|eps| and packs them as [3, ny, nx].
NetworkInput normalize_for_network(const StrainField& strain);

}  // namespace elastinv
