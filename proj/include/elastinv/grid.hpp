#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace elastinv {

/// Thrown when an operation's preconditions on its inputs are violated.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown on numerical failures (singular systems, non-convergence).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Regular pixel grid. Pixel (i, j) sits at (i * length_x / (nx - 1), j * length_y / (ny - 1));
/// j = 0 is the bottom edge.
struct GridGeom {
    int nx = 2;
    int ny = 2;
    double length_x = 1.0;
    double length_y = 1.0;

    GridGeom() = default;
    GridGeom(int nx_, int ny_, double lx, double ly);

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
    [[nodiscard]] std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
    [[nodiscard]] double hx() const { return length_x / (nx - 1); }
    [[nodiscard]] double hy() const { return length_y / (ny - 1); }
    [[nodiscard]] double x(int i) const { return i * hx(); }
    [[nodiscard]] double y(int j) const { return j * hy(); }

    bool operator==(const GridGeom&) const = default;
};

/// One real value per pixel, row-major with row index j (bottom to top).
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const GridGeom& geom, double fill = 0.0);
    ScalarField(const GridGeom& geom, std::vector<double> values);

    [[nodiscard]] const GridGeom& geom() const { return geom_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const { return values_; }
    [[nodiscard]] std::span<double> values() { return values_; }

    double& operator()(int i, int j) { return values_[geom_.index(i, j)]; }
    double operator()(int i, int j) const { return values_[geom_.index(i, j)]; }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }

    [[nodiscard]] double max_abs() const;

private:
    GridGeom geom_;
    std::vector<double> values_;
};

/// Lamé parameter maps in Pa.
struct MaterialField {
    ScalarField lambda;
    ScalarField mu;

    [[nodiscard]] const GridGeom& geom() const { return mu.geom(); }
    /// Throws unless lambda > 0 and mu > 0 at every pixel.
    void validate() const;
};

/// Symmetric 2D tensor field. `xy` holds the tensorial shear component, not 2 * eps_xy.
struct TensorField {
    ScalarField xx;
    ScalarField yy;
    ScalarField xy;

    [[nodiscard]] const GridGeom& geom() const { return xx.geom(); }
};
using StrainField = TensorField;
using StressField = TensorField;

struct Scales {
    double l0 = 1.0;
    double sigma0 = 1.0;
};

struct Lame {
    double lambda;
    double mu;
};

struct Engineering {
    double E;
    double nu;
};

Lame lame_from_engineering(double E, double nu);
Engineering engineering_from_lame(double lambda, double mu);

/// Post-processing conversion between plane-strain and plane-stress constants, applied as
/// E / (1 - nu^2) and nu / (1 - nu^2). The second expression is not the textbook nu / (1 - nu)
/// relation; it is kept as published. Never used by the default plane-strain pipeline.
Engineering plane_stress_convert(double E, double nu);

/// Dimensionless isotropic constitutive law evaluated per pixel.
StressField constitutive_stress(const ScalarField& M, const ScalarField& Lambda, const StrainField& strain);

struct BoundarySpec;
Scales compute_scales(const GridGeom& geom, const BoundarySpec& bc);

/// Engineering constants recovered from dimensionless Lamé maps. Pixels with M <= 0 or
/// Lambda + M <= 0 are marked invalid and hold 0 in both maps.
struct Redimensionalized {
    ScalarField E;
    ScalarField nu;
    std::vector<unsigned char> valid;

    [[nodiscard]] std::size_t valid_count() const;
};

Redimensionalized redimensionalize(const ScalarField& M, const ScalarField& Lambda, const Scales& scales);

void require_same_geom(const GridGeom& a, const GridGeom& b, const char* what);

}  // namespace elastinv
