#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace elastinv {

enum class Edge { bottom = 0, top = 1, left = 2, right = 3 };
inline constexpr std::array<Edge, 4> kEdges{Edge::bottom, Edge::top, Edge::left, Edge::right};

std::string_view edge_name(Edge e);
Edge edge_from_name(std::string_view name);

enum class Constraint { free, roller, fixed };

std::string_view constraint_name(Constraint c);
Constraint constraint_from_name(std::string_view name);

/// Boundary data for one edge, expressed as stress components on that edge:
/// `normal_traction` is sigma_nn (tension positive: sigma_yy on top/bottom, sigma_xx on the sides)
/// and `shear_traction` is sigma_xy. An unset component is unknown and carries no loss target.
struct EdgeCondition {
    std::optional<double> normal_traction;
    std::optional<double> shear_traction;
    Constraint constraint = Constraint::free;

    bool operator==(const EdgeCondition&) const = default;
};

struct BoundarySpec {
    std::array<EdgeCondition, 4> edges{};

    EdgeCondition& operator[](Edge e) { return edges[static_cast<int>(e)]; }
    const EdgeCondition& operator[](Edge e) const { return edges[static_cast<int>(e)]; }

    /// Checks that no component is both traction-loaded and displacement-constrained.
    void validate() const;
    [[nodiscard]] bool has_constraint() const;
    /// All tractions divided by sigma0.
    [[nodiscard]] BoundarySpec scaled(double sigma0) const;

    /// Uniform normal tension t on top and bottom, traction-free sides.
    static BoundarySpec two_sided_tension(double t);
    /// Uniform normal traction t on top, frictionless roller bottom, traction-free sides.
    static BoundarySpec top_load_roller_bottom(double t);

    bool operator==(const BoundarySpec&) const = default;
};

}  // namespace elastinv
