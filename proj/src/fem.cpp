#include "elastinv/fem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace elastinv {

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat38 = Eigen::Matrix<double, 3, 8>;

constexpr std::array<std::array<int, 2>, 4> kCorner{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
constexpr std::array<std::array<double, 2>, 4> kNat{{{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}};

// Strain-displacement matrix of a hx x hy rectangle at natural coordinates (xi, eta).
// Rows: eps_xx, eps_yy, gamma_xy (engineering shear).
Mat38 strain_matrix(double hx, double hy, double xi, double eta) {
    Mat38 B = Mat38::Zero();
    for (int a = 0; a < 4; ++a) {
        const double dx = 0.25 * kNat[a][0] * (1.0 + kNat[a][1] * eta) * 2.0 / hx;
        const double dy = 0.25 * kNat[a][1] * (1.0 + kNat[a][0] * xi) * 2.0 / hy;
        B(0, 2 * a) = dx;
        B(1, 2 * a + 1) = dy;
        B(2, 2 * a) = dy;
        B(2, 2 * a + 1) = dx;
    }
    return B;
}

std::array<Mat38, 4> gauss_strain_matrices(double hx, double hy) {
    const double g = 1.0 / std::sqrt(3.0);
    std::array<Mat38, 4> Bs;
    for (int q = 0; q < 4; ++q) Bs[q] = strain_matrix(hx, hy, kNat[q][0] * g, kNat[q][1] * g);
    return Bs;
}

// Element stiffness splits as lambda * K_lambda + mu * K_mu because D does.
struct ElementBasis {
    Mat8 k_lambda;
    Mat8 k_mu;
};

ElementBasis element_basis(double hx, double hy) {
    Eigen::Matrix3d d_lambda;
    d_lambda << 1, 1, 0, 1, 1, 0, 0, 0, 0;
    Eigen::Matrix3d d_mu;
    d_mu << 2, 0, 0, 0, 2, 0, 0, 0, 1;
    const double detj = 0.25 * hx * hy;
    ElementBasis eb{Mat8::Zero(), Mat8::Zero()};
    for (const Mat38& B : gauss_strain_matrices(hx, hy)) {
        eb.k_lambda += B.transpose() * d_lambda * B * detj;
        eb.k_mu += B.transpose() * d_mu * B * detj;
    }
    return eb;
}

double element_mean(const ScalarField& f, int i, int j) {
    return 0.25 * (f(i, j) + f(i + 1, j) + f(i + 1, j + 1) + f(i, j + 1));
}

bool region_inside(const Circle& c, double x, double y) {
    const double dx = x - c.cx;
    const double dy = y - c.cy;
    return dx * dx + dy * dy < c.r * c.r;
}

}  // namespace

std::string kind_name(PhantomSpec::Kind k) {
    switch (k) {
        case PhantomSpec::Kind::inclusion: return "inclusion";
        case PhantomSpec::Kind::multi_inclusion: return "multi-inclusion";
        case PhantomSpec::Kind::layered: return "layered";
        case PhantomSpec::Kind::label_map: return "label-map";
    }
    return "?";
}

PhantomSpec::Kind kind_from_name(const std::string& name) {
    for (auto k : {PhantomSpec::Kind::inclusion, PhantomSpec::Kind::multi_inclusion, PhantomSpec::Kind::layered,
                   PhantomSpec::Kind::label_map}) {
        if (kind_name(k) == name) return k;
    }
    throw InvalidArgument("unknown phantom kind '" + name + "'");
}

Phantom build_phantom(const PhantomSpec& spec, const GridGeom& geom) {
    if (spec.materials.empty()) throw InvalidArgument("phantom material table is empty");
    const int n_mat = static_cast<int>(spec.materials.size());
    std::vector<Lame> lame;
    lame.reserve(spec.materials.size());
    for (const RegionMaterial& m : spec.materials) lame.push_back(lame_from_engineering(m.E, m.nu));

    Phantom ph{{ScalarField(geom), ScalarField(geom)}, ScalarField(geom), ScalarField(geom),
               std::vector<int>(geom.size(), 0), {}};
    auto check_index = [&](int m) {
        if (m < 0 || m >= n_mat) throw InvalidArgument("phantom region refers to material " + std::to_string(m));
    };

    switch (spec.kind) {
        case PhantomSpec::Kind::inclusion:
        case PhantomSpec::Kind::multi_inclusion: {
            if (spec.kind == PhantomSpec::Kind::inclusion && spec.circles.size() > 1) {
                throw InvalidArgument("inclusion phantom takes a single circle; use multi-inclusion");
            }
            for (const Circle& c : spec.circles) {
                check_index(c.material);
                if (c.r < 0.0) throw InvalidArgument("negative inclusion radius");
                if (c.cx - c.r < 0.0 || c.cx + c.r > geom.length_x || c.cy - c.r < 0.0 ||
                    c.cy + c.r > geom.length_y) {
                    std::ostringstream os;
                    os << "inclusion at (" << c.cx << ", " << c.cy << ") r=" << c.r << " is clipped by the domain";
                    ph.warnings.push_back(os.str());
                }
                for (int j = 0; j < geom.ny; ++j) {
                    for (int i = 0; i < geom.nx; ++i) {
                        if (region_inside(c, geom.x(i), geom.y(j))) ph.region[geom.index(i, j)] = c.material;
                    }
                }
            }
            break;
        }
        case PhantomSpec::Kind::layered: {
            if (static_cast<int>(spec.layer_bounds.size()) != n_mat - 1) {
                throw InvalidArgument("layered phantom needs one bound fewer than materials");
            }
            if (!std::is_sorted(spec.layer_bounds.begin(), spec.layer_bounds.end())) {
                throw InvalidArgument("layer bounds must increase");
            }
            for (double b : spec.layer_bounds) {
                if (b < 0.0 || b > geom.length_y) ph.warnings.push_back("layer bound outside the domain is clipped");
            }
            for (int j = 0; j < geom.ny; ++j) {
                const auto layer = std::upper_bound(spec.layer_bounds.begin(), spec.layer_bounds.end(), geom.y(j)) -
                                   spec.layer_bounds.begin();
                for (int i = 0; i < geom.nx; ++i) ph.region[geom.index(i, j)] = static_cast<int>(layer);
            }
            break;
        }
        case PhantomSpec::Kind::label_map: {
            if (spec.label_nx != geom.nx || spec.label_ny != geom.ny || spec.labels.size() != geom.size()) {
                throw InvalidArgument("label grid shape does not match the output grid");
            }
            for (std::size_t k = 0; k < geom.size(); ++k) {
                check_index(spec.labels[k]);
                ph.region[k] = spec.labels[k];
            }
            break;
        }
    }

    for (std::size_t k = 0; k < geom.size(); ++k) {
        const int m = ph.region[k];
        ph.material.lambda[k] = lame[m].lambda;
        ph.material.mu[k] = lame[m].mu;
        ph.E[k] = spec.materials[m].E;
        ph.nu[k] = spec.materials[m].nu;
    }
    return ph;
}

namespace fem {

Eigen::SparseMatrix<double> assemble_stiffness(const MaterialField& material) {
    const GridGeom& g = material.geom();
    const ElementBasis eb = element_basis(g.hx(), g.hy());
    const int ndof = 2 * static_cast<int>(g.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(g.nx - 1) * (g.ny - 1) * 64);
    for (int j = 0; j < g.ny - 1; ++j) {
        for (int i = 0; i < g.nx - 1; ++i) {
            const Mat8 ke = element_mean(material.lambda, i, j) * eb.k_lambda + element_mean(material.mu, i, j) * eb.k_mu;
            std::array<int, 8> dofs;
            for (int a = 0; a < 4; ++a) {
                dofs[2 * a] = dof(g, i + kCorner[a][0], j + kCorner[a][1], 0);
                dofs[2 * a + 1] = dof(g, i + kCorner[a][0], j + kCorner[a][1], 1);
            }
            for (int r = 0; r < 8; ++r) {
                for (int c = 0; c < 8; ++c) trip.emplace_back(dofs[r], dofs[c], ke(r, c));
            }
        }
    }
    Eigen::SparseMatrix<double> K(ndof, ndof);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

Eigen::VectorXd traction_load(const GridGeom& g, const BoundarySpec& bc) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(g.size()));
    for (Edge e : kEdges) {
        const EdgeCondition& c = bc[e];
        const double tn = c.normal_traction.value_or(0.0);
        const double ts = c.shear_traction.value_or(0.0);
        if (tn == 0.0 && ts == 0.0) continue;
        // Traction vector t = sigma . n in terms of (sigma_nn, sigma_xy).
        double tx = 0.0;
        double ty = 0.0;
        switch (e) {
            case Edge::top: tx = ts; ty = tn; break;
            case Edge::bottom: tx = -ts; ty = -tn; break;
            case Edge::right: tx = tn; ty = ts; break;
            case Edge::left: tx = -tn; ty = -ts; break;
        }
        const bool horizontal = (e == Edge::top || e == Edge::bottom);
        const int n = horizontal ? g.nx : g.ny;
        const double h = horizontal ? g.hx() : g.hy();
        for (int s = 0; s + 1 < n; ++s) {
            for (int k : {s, s + 1}) {
                int i = 0;
                int j = 0;
                switch (e) {
                    case Edge::top: i = k; j = g.ny - 1; break;
                    case Edge::bottom: i = k; j = 0; break;
                    case Edge::right: i = g.nx - 1; j = k; break;
                    case Edge::left: i = 0; j = k; break;
                }
                f[dof(g, i, j, 0)] += 0.5 * h * tx;
                f[dof(g, i, j, 1)] += 0.5 * h * ty;
            }
        }
    }
    return f;
}

std::vector<int> constrained_dofs(const GridGeom& g, const BoundarySpec& bc, const Eigen::VectorXd& load,
                                  std::vector<int>* pins) {
    std::vector<char> fixed(2 * g.size(), 0);
    auto edge_nodes = [&](Edge e, auto&& fn) {
        switch (e) {
            case Edge::bottom: for (int i = 0; i < g.nx; ++i) fn(i, 0); break;
            case Edge::top: for (int i = 0; i < g.nx; ++i) fn(i, g.ny - 1); break;
            case Edge::left: for (int j = 0; j < g.ny; ++j) fn(0, j); break;
            case Edge::right: for (int j = 0; j < g.ny; ++j) fn(g.nx - 1, j); break;
        }
    };
    for (Edge e : kEdges) {
        const Constraint c = bc[e].constraint;
        if (c == Constraint::free) continue;
        const int normal_comp = (e == Edge::top || e == Edge::bottom) ? 1 : 0;
        edge_nodes(e, [&](int i, int j) {
            fixed[dof(g, i, j, normal_comp)] = 1;
            if (c == Constraint::fixed) fixed[dof(g, i, j, 1 - normal_comp)] = 1;
        });
    }

    // Rigid-body modes: x translation, y translation, rotation about the domain center.
    const double xc = 0.5 * g.length_x;
    const double yc = 0.5 * g.length_y;
    auto mode_value = [&](int d, int mode) {
        const int node = d / 2;
        const int comp = d % 2;
        const double x = g.x(node % g.nx) - xc;
        const double y = g.y(node / g.nx) - yc;
        if (mode == 0) return comp == 0 ? 1.0 : 0.0;
        if (mode == 1) return comp == 1 ? 1.0 : 0.0;
        return comp == 0 ? -y : x;
    };
    auto rank_of = [&](const std::vector<int>& dofs) {
        if (dofs.empty()) return 0;
        Eigen::MatrixXd R(static_cast<Eigen::Index>(dofs.size()), 3);
        for (std::size_t r = 0; r < dofs.size(); ++r) {
            for (int m = 0; m < 3; ++m) R(static_cast<Eigen::Index>(r), m) = mode_value(dofs[r], m);
        }
        return static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(R).rank());
    };

    std::vector<int> out;
    for (std::size_t d = 0; d < fixed.size(); ++d) {
        if (fixed[d]) out.push_back(static_cast<int>(d));
    }
    int rank = rank_of(out);
    if (rank < 3) {
        // Modes left free must see a self-equilibrated load, otherwise no static solution exists.
        Eigen::MatrixXd basis(load.size(), 3);
        for (Eigen::Index d = 0; d < load.size(); ++d) {
            for (int m = 0; m < 3; ++m) basis(d, m) = mode_value(static_cast<int>(d), m);
        }
        // Project out the span already removed by constraints, then test the load against the rest.
        Eigen::MatrixXd C(static_cast<Eigen::Index>(out.size()), 3);
        for (std::size_t r = 0; r < out.size(); ++r) {
            for (int m = 0; m < 3; ++m) C(static_cast<Eigen::Index>(r), m) = mode_value(out[r], m);
        }
        const Eigen::MatrixXd free_modes =
            out.empty() ? Eigen::MatrixXd::Identity(3, 3) : Eigen::MatrixXd(Eigen::FullPivLU<Eigen::MatrixXd>(C).kernel());
        const double scale = load.cwiseAbs().sum() * std::max({1.0, g.length_x, g.length_y});
        static const char* kModeNames[3] = {"x-translation", "y-translation", "in-plane rotation"};
        for (Eigen::Index k = 0; k < free_modes.cols(); ++k) {
            const Eigen::VectorXd mode = basis * free_modes.col(k);
            const double work = mode.dot(load);
            if (std::abs(work) > 1e-10 * std::max(scale, 1e-300) && scale > 0.0) {
                int dominant = 0;
                free_modes.col(k).cwiseAbs().maxCoeff(&dominant);
                throw NumericalError(std::string("singular system: no displacement constraint removes ") +
                                     kModeNames[dominant] + " and the applied tractions are not balanced in it");
            }
        }
        // Pin corner DOFs until every rigid mode is removed; reactions there vanish.
        const std::array<int, 4> candidates{dof(g, 0, 0, 0), dof(g, 0, 0, 1), dof(g, g.nx - 1, 0, 1),
                                            dof(g, g.nx - 1, 0, 0)};
        for (int d : candidates) {
            if (rank == 3) break;
            if (fixed[d]) continue;
            out.push_back(d);
            const int r = rank_of(out);
            if (r > rank) {
                rank = r;
                fixed[d] = 1;
                if (pins) pins->push_back(d);
            } else {
                out.pop_back();
            }
        }
        std::sort(out.begin(), out.end());
    }
    return out;
}

}  // namespace fem

FemSolution solve_plane_strain(const MaterialField& material, const BoundarySpec& bc) {
    material.validate();
    bc.validate();
    const GridGeom& g = material.geom();
    const Eigen::SparseMatrix<double> K = fem::assemble_stiffness(material);
    const Eigen::VectorXd f = fem::traction_load(g, bc);

    FemSolution sol;
    const std::vector<int> cons = fem::constrained_dofs(g, bc, f, &sol.pinned_dofs);
    const int ndof = static_cast<int>(f.size());
    std::vector<int> reduced(ndof, -1);
    {
        std::vector<char> is_cons(ndof, 0);
        for (int d : cons) is_cons[d] = 1;
        int n = 0;
        for (int d = 0; d < ndof; ++d) {
            if (!is_cons[d]) reduced[d] = n++;
        }
    }
    const int nfree = ndof - static_cast<int>(cons.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(K.nonZeros());
    for (int col = 0; col < K.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
            const int r = reduced[it.row()];
            const int c = reduced[it.col()];
            if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
        }
    }
    Eigen::SparseMatrix<double> Kr(nfree, nfree);
    Kr.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd fr(nfree);
    for (int d = 0; d < ndof; ++d) {
        if (reduced[d] >= 0) fr[reduced[d]] = f[d];
    }

    Eigen::VectorXd u = Eigen::VectorXd::Zero(ndof);
    const double fnorm = fr.norm();
    if (fnorm > 0.0) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Kr);
        if (ldlt.info() != Eigen::Success) throw NumericalError("stiffness factorization failed (singular system)");
        Eigen::VectorXd ur = ldlt.solve(fr);
        // One step of iterative refinement keeps the residual near machine precision.
        ur += ldlt.solve(fr - Kr * ur);
        sol.relative_residual = (fr - Kr * ur).norm() / fnorm;
        if (!(sol.relative_residual <= 1e-10)) {
            std::ostringstream os;
            os << "linear solve did not converge: relative residual " << sol.relative_residual;
            throw NumericalError(os.str());
        }
        for (int d = 0; d < ndof; ++d) {
            if (reduced[d] >= 0) u[d] = ur[reduced[d]];
        }
    }

    // Reactions close the global balance: sum over all DOFs of (K u - f) per direction.
    {
        const Eigen::VectorXd r = K * u - f;
        double worst = 0.0;
        for (int comp = 0; comp < 2; ++comp) {
            double sum_r = 0.0;
            double sum_f = 0.0;
            double mag = 0.0;
            for (int d = comp; d < ndof; d += 2) {
                mag += std::abs(f[d]);
                sum_f += f[d];
            }
            for (int d : cons) {
                if (d % 2 == comp) sum_r += r[d];
            }
            if (mag > 0.0) worst = std::max(worst, std::abs(sum_r + sum_f) / mag);
        }
        sol.force_balance_error = worst;
    }

    sol.ux = ScalarField(g);
    sol.uy = ScalarField(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        sol.ux[k] = u[static_cast<Eigen::Index>(2 * k)];
        sol.uy[k] = u[static_cast<Eigen::Index>(2 * k + 1)];
    }

    // Nodal strains: Gauss-point strains extrapolated bilinearly to each corner, then averaged
    // over the elements sharing the node.
    const std::array<Mat38, 4> Bs = gauss_strain_matrices(g.hx(), g.hy());
    Eigen::Matrix4d extrap;
    const double s3 = std::sqrt(3.0);
    for (int a = 0; a < 4; ++a) {
        const double xs = kNat[a][0] * s3;
        const double es = kNat[a][1] * s3;
        for (int q = 0; q < 4; ++q) extrap(a, q) = 0.25 * (1.0 + kNat[q][0] * xs) * (1.0 + kNat[q][1] * es);
    }
    StrainField strain{ScalarField(g), ScalarField(g), ScalarField(g)};
    std::vector<int> count(g.size(), 0);
    for (int j = 0; j < g.ny - 1; ++j) {
        for (int i = 0; i < g.nx - 1; ++i) {
            Eigen::Matrix<double, 8, 1> ue;
            for (int a = 0; a < 4; ++a) {
                ue[2 * a] = u[fem::dof(g, i + kCorner[a][0], j + kCorner[a][1], 0)];
                ue[2 * a + 1] = u[fem::dof(g, i + kCorner[a][0], j + kCorner[a][1], 1)];
            }
            Eigen::Matrix<double, 4, 3> eg;
            for (int q = 0; q < 4; ++q) eg.row(q) = (Bs[q] * ue).transpose();
            const Eigen::Matrix<double, 4, 3> en = extrap * eg;
            for (int a = 0; a < 4; ++a) {
                const std::size_t k = g.index(i + kCorner[a][0], j + kCorner[a][1]);
                strain.xx[k] += en(a, 0);
                strain.yy[k] += en(a, 1);
                strain.xy[k] += 0.5 * en(a, 2);
                ++count[k];
            }
        }
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
        strain.xx[k] /= count[k];
        strain.yy[k] /= count[k];
        strain.xy[k] /= count[k];
    }
    sol.stress = constitutive_stress(material.mu, material.lambda, strain);
    sol.strain = std::move(strain);
    return sol;
}

StrainField add_noise(const StrainField& strain, double level, std::uint64_t seed) {
    if (!(level >= 0.0)) throw InvalidArgument("noise level must be non-negative");
    StrainField out = strain;
    if (level == 0.0) return out;
    ScalarField* channels[3] = {&out.xx, &out.yy, &out.xy};
    for (int c = 0; c < 3; ++c) {
        const double sd = level * channels[c]->max_abs();
        if (sd == 0.0) continue;
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(c)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> dist(0.0, sd);
        for (double& v : channels[c]->values()) v += dist(rng);
    }
    return out;
}

NetworkInput normalize_for_network(const StrainField& strain) {
    const double ref = std::max({strain.xx.max_abs(), strain.yy.max_abs(), strain.xy.max_abs()});
    if (!(ref > 0.0)) throw InvalidArgument("strain is identically zero: nothing to invert");
    const GridGeom& g = strain.geom();
    const std::size_t n = g.size();
    std::vector<double> v(3 * n);
    const ScalarField* ch[3] = {&strain.xx, &strain.yy, &strain.xy};
    for (int c = 0; c < 3; ++c) {
        for (std::size_t k = 0; k < n; ++k) v[c * n + k] = (*ch[c])[k] / ref;
    }
    return {Tensor::constant({3, g.ny, g.nx}, std::move(v)), ref};
}

}  // namespace elastinv
