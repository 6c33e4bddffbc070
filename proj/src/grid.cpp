#include "elastinv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "elastinv/boundary.hpp"

namespace elastinv {

GridGeom::GridGeom(int nx_, int ny_, double lx, double ly) : nx(nx_), ny(ny_), length_x(lx), length_y(ly) {
    if (nx < 2 || ny < 2) {
        throw InvalidArgument("grid needs at least 2 pixels per direction");
    }
    if (!(lx > 0.0) || !(ly > 0.0)) {
        throw InvalidArgument("grid lengths must be positive");
    }
}

ScalarField::ScalarField(const GridGeom& geom, double fill) : geom_(geom), values_(geom.size(), fill) {}

ScalarField::ScalarField(const GridGeom& geom, std::vector<double> values) : geom_(geom), values_(std::move(values)) {
    if (values_.size() != geom_.size()) {
        throw InvalidArgument("field has " + std::to_string(values_.size()) + " values, grid expects " +
                              std::to_string(geom_.size()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("field contains a non-finite value");
        }
    }
}

double ScalarField::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

void MaterialField::validate() const {
    require_same_geom(lambda.geom(), mu.geom(), "material");
    for (std::size_t k = 0; k < mu.size(); ++k) {
        if (!(mu[k] > 0.0) || !(lambda[k] > 0.0)) {
            throw InvalidArgument("material requires lambda > 0 and mu > 0 at every pixel");
        }
    }
}

void require_same_geom(const GridGeom& a, const GridGeom& b, const char* what) {
    if (!(a == b)) {
        throw InvalidArgument(std::string(what) + ": grid geometries differ");
    }
}

Lame lame_from_engineering(double E, double nu) {
    if (!(E > 0.0)) throw InvalidArgument("E must be positive");
    if (!(nu > 0.0 && nu < 0.5)) throw InvalidArgument("nu must lie in (0, 0.5)");
    return {E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))};
}

Engineering engineering_from_lame(double lambda, double mu) {
    const double s = lambda + mu;
    if (!(s > 0.0)) throw InvalidArgument("lambda + mu must be positive");
    return {mu * (3.0 * lambda + 2.0 * mu) / s, lambda / (2.0 * s)};
}

Engineering plane_stress_convert(double E, double nu) {
    if (!(std::abs(nu) < 1.0)) throw InvalidArgument("|nu| must be below 1");
    const double d = 1.0 - nu * nu;
    return {E / d, nu / d};
}

StressField constitutive_stress(const ScalarField& M, const ScalarField& Lambda, const StrainField& strain) {
    const GridGeom& g = M.geom();
    require_same_geom(g, Lambda.geom(), "constitutive_stress");
    require_same_geom(g, strain.xx.geom(), "constitutive_stress");
    require_same_geom(g, strain.yy.geom(), "constitutive_stress");
    require_same_geom(g, strain.xy.geom(), "constitutive_stress");
    StressField s{ScalarField(g), ScalarField(g), ScalarField(g)};
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double a = 2.0 * M[k] + Lambda[k];
        s.xx[k] = a * strain.xx[k] + Lambda[k] * strain.yy[k];
        s.yy[k] = a * strain.yy[k] + Lambda[k] * strain.xx[k];
        s.xy[k] = 2.0 * M[k] * strain.xy[k];
    }
    return s;
}

Scales compute_scales(const GridGeom& geom, const BoundarySpec& bc) {
    double sigma0 = 0.0;
    for (Edge e : kEdges) {
        if (bc[e].normal_traction) sigma0 = std::max(sigma0, std::abs(*bc[e].normal_traction));
    }
    if (!(sigma0 > 0.0)) {
        throw InvalidArgument("no nonzero normal traction on any edge: stress scale undefined");
    }
    return {0.5 * (geom.length_x + geom.length_y), sigma0};
}

std::size_t Redimensionalized::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

Redimensionalized redimensionalize(const ScalarField& M, const ScalarField& Lambda, const Scales& scales) {
    require_same_geom(M.geom(), Lambda.geom(), "redimensionalize");
    Redimensionalized out{ScalarField(M.geom()), ScalarField(M.geom()), std::vector<unsigned char>(M.size(), 0)};
    for (std::size_t k = 0; k < M.size(); ++k) {
        if (!(M[k] > 0.0) || !(Lambda[k] + M[k] > 0.0)) continue;
        const Engineering en = engineering_from_lame(Lambda[k] * scales.sigma0, M[k] * scales.sigma0);
        out.E[k] = en.E;
        out.nu[k] = en.nu;
        out.valid[k] = 1;
    }
    return out;
}

}  // namespace elastinv
