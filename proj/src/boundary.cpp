#include "elastinv/boundary.hpp"

#include <string>

#include "elastinv/grid.hpp"

namespace elastinv {

std::string_view edge_name(Edge e) {
    switch (e) {
        case Edge::bottom: return "bottom";
        case Edge::top: return "top";
        case Edge::left: return "left";
        case Edge::right: return "right";
    }
    return "?";
}

Edge edge_from_name(std::string_view name) {
    for (Edge e : kEdges) {
        if (edge_name(e) == name) return e;
    }
    throw InvalidArgument("unknown edge '" + std::string(name) + "'");
}

std::string_view constraint_name(Constraint c) {
    switch (c) {
        case Constraint::free: return "free";
        case Constraint::roller: return "roller";
        case Constraint::fixed: return "fixed";
    }
    return "?";
}

Constraint constraint_from_name(std::string_view name) {
    for (Constraint c : {Constraint::free, Constraint::roller, Constraint::fixed}) {
        if (constraint_name(c) == name) return c;
    }
    throw InvalidArgument("unknown constraint '" + std::string(name) + "'");
}

void BoundarySpec::validate() const {
    for (Edge e : kEdges) {
        const EdgeCondition& c = (*this)[e];
        const std::string where(edge_name(e));
        if (c.constraint == Constraint::fixed && (c.normal_traction || c.shear_traction)) {
            throw InvalidArgument(where + " edge is fixed and traction-loaded at once");
        }
        if (c.constraint == Constraint::roller) {
            if (c.normal_traction) {
                throw InvalidArgument(where + " edge is a roller and has a normal traction");
            }
            // A frictionless roller carries no shear; 0 is the only consistent target.
            if (c.shear_traction && *c.shear_traction != 0.0) {
                throw InvalidArgument(where + " edge is a roller and has a nonzero shear traction");
            }
        }
    }
}

bool BoundarySpec::has_constraint() const {
    for (const EdgeCondition& c : edges) {
        if (c.constraint != Constraint::free) return true;
    }
    return false;
}

BoundarySpec BoundarySpec::scaled(double sigma0) const {
    BoundarySpec out = *this;
    for (EdgeCondition& c : out.edges) {
        if (c.normal_traction) *c.normal_traction /= sigma0;
        if (c.shear_traction) *c.shear_traction /= sigma0;
    }
    return out;
}

BoundarySpec BoundarySpec::two_sided_tension(double t) {
    BoundarySpec bc;
    bc[Edge::top] = {t, 0.0, Constraint::free};
    bc[Edge::bottom] = {t, 0.0, Constraint::free};
    bc[Edge::left] = {0.0, 0.0, Constraint::free};
    bc[Edge::right] = {0.0, 0.0, Constraint::free};
    return bc;
}

BoundarySpec BoundarySpec::top_load_roller_bottom(double t) {
    BoundarySpec bc;
    bc[Edge::top] = {t, 0.0, Constraint::free};
    bc[Edge::bottom] = {std::nullopt, 0.0, Constraint::roller};
    bc[Edge::left] = {0.0, 0.0, Constraint::free};
    bc[Edge::right] = {0.0, 0.0, Constraint::free};
    return bc;
}

}  // namespace elastinv
