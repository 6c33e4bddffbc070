#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "elastinv/boundary.hpp"
#include "elastinv/fem.hpp"
#include "elastinv/grid.hpp"

namespace elastinv {

inline constexpr int kBundleFormatVersion = 1;

/// A dataset on disk: meta.json plus one CSV per field.
struct FieldBundle {
    GridGeom geom;
    Scales scales;
    BoundarySpec bc;  ///< physical tractions, Pa
    std::map<std::string, ScalarField> fields;
    double noise_level = 0.0;
    std::optional<std::uint64_t> noise_seed;
    nlohmann::json provenance = nlohmann::json::object();

    [[nodiscard]] bool has(const std::string& name) const { return fields.count(name) != 0; }
    [[nodiscard]] const ScalarField& field(const std::string& name) const;
    [[nodiscard]] StrainField strain() const;
    [[nodiscard]] bool has_truth() const { return has("truth_E") && has("truth_nu"); }
};

/// CSV with ny rows of nx values, row 0 = bottom, 17 significant digits.
void write_field_csv(const ScalarField& f, const std::filesystem::path& path);
ScalarField read_field_csv(const std::filesystem::path& path, const GridGeom& geom);
/// Reads a CSV of unknown shape; lengths default to pixel spacing 1.
ScalarField read_field_csv(const std::filesystem::path& path);
/// Writes rows x cols values as given (row 0 first).
void write_matrix_csv(std::span<const double> values, int rows, int cols, const std::filesystem::path& path);

void write_bundle(const FieldBundle& b, const std::filesystem::path& dir);
FieldBundle read_bundle(const std::filesystem::path& dir);

nlohmann::json boundary_to_json(const BoundarySpec& bc);
BoundarySpec boundary_from_json(const nlohmann::json& j);

/// Generator input: phantom, domain size and loading.
struct GeneratorSpec {
    PhantomSpec phantom;
    double length_x = 1.0;
    double length_y = 1.0;
    BoundarySpec bc;
    /// When set, tractions are rescaled so the largest normal strain magnitude equals this value.
    std::optional<double> target_max_strain;
};

GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json phantom_to_json(const PhantomSpec& p);

/// build_phantom -> solve_plane_strain -> optional add_noise, packaged with truth fields.
FieldBundle generate_bundle(const GeneratorSpec& spec, int nx, int ny, double noise_level, std::uint64_t noise_seed);

/// Binary PPM (P6), top row of the domain first, byte = round(255 (v - lo) / (hi - lo)) clamped.
std::string render_ppm(const ScalarField& f, std::optional<double> lo, std::optional<double> hi);

}  // namespace elastinv
