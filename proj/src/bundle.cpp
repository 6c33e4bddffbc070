#include "elastinv/bundle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace elastinv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t next = std::min(line.find(',', pos), line.size());
            const std::string cell = line.substr(pos, next - pos);
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size()) {
                throw InvalidArgument(path.string() + ": bad number '" + cell + "'");
            }
            row.push_back(v);
            pos = next + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

const ScalarField& FieldBundle::field(const std::string& name) const {
    const auto it = fields.find(name);
    if (it == fields.end()) throw InvalidArgument("bundle has no field '" + name + "'");
    return it->second;
}

StrainField FieldBundle::strain() const { return {field("strain_xx"), field("strain_yy"), field("strain_xy")}; }

void write_matrix_csv(std::span<const double> values, int rows, int cols, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (c) out << ',';
            out << format_double(values[static_cast<std::size_t>(r) * cols + c]);
        }
        out << '\n';
    }
}

void write_field_csv(const ScalarField& f, const fs::path& path) {
    write_matrix_csv(f.values(), f.geom().ny, f.geom().nx, path);
}

ScalarField read_field_csv(const fs::path& path, const GridGeom& geom) {
    const auto rows = read_csv_rows(path);
    if (rows.size() != static_cast<std::size_t>(geom.ny)) {
        throw InvalidArgument(path.string() + ": expected " + std::to_string(geom.ny) + " rows, found " +
                              std::to_string(rows.size()));
    }
    std::vector<double> v;
    v.reserve(geom.size());
    for (const auto& r : rows) {
        if (r.size() != static_cast<std::size_t>(geom.nx)) {
            throw InvalidArgument(path.string() + ": expected " + std::to_string(geom.nx) + " columns per row");
        }
        v.insert(v.end(), r.begin(), r.end());
    }
    return ScalarField(geom, std::move(v));
}

ScalarField read_field_csv(const fs::path& path) {
    const auto rows = read_csv_rows(path);
    if (rows.empty()) throw InvalidArgument(path.string() + ": empty field");
    const int ny = static_cast<int>(rows.size());
    const int nx = static_cast<int>(rows[0].size());
    GridGeom g;
    g.nx = nx;
    g.ny = ny;
    g.length_x = std::max(nx - 1, 1);
    g.length_y = std::max(ny - 1, 1);
    return read_field_csv(path, g);
}

json boundary_to_json(const BoundarySpec& bc) {
    json j = json::object();
    for (Edge e : kEdges) {
        const EdgeCondition& c = bc[e];
        j[std::string(edge_name(e))] = {{"normal", opt_json(c.normal_traction)},
                                        {"shear", opt_json(c.shear_traction)},
                                        {"constraint", std::string(constraint_name(c.constraint))}};
    }
    return j;
}

BoundarySpec boundary_from_json(const json& j) {
    BoundarySpec bc;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const Edge e = edge_from_name(it.key());
        const json& c = it.value();
        bc[e].normal_traction = opt_from(c, "normal");
        bc[e].shear_traction = opt_from(c, "shear");
        bc[e].constraint = constraint_from_name(c.value("constraint", std::string("free")));
    }
    bc.validate();
    return bc;
}

void write_bundle(const FieldBundle& b, const fs::path& dir) {
    fs::create_directories(dir);
    json meta = {{"format_version", kBundleFormatVersion},
                 {"nx", b.geom.nx},
                 {"ny", b.geom.ny},
                 {"length_x", b.geom.length_x},
                 {"length_y", b.geom.length_y},
                 {"l0", b.scales.l0},
                 {"sigma0", b.scales.sigma0},
                 {"boundary", boundary_to_json(b.bc)},
                 {"noise", {{"level", b.noise_level}, {"seed", b.noise_seed ? json(*b.noise_seed) : json(nullptr)}}},
                 {"provenance", b.provenance}};
    json names = json::array();
    for (const auto& [name, f] : b.fields) {
        require_same_geom(f.geom(), b.geom, name.c_str());
        write_field_csv(f, dir / (name + ".csv"));
        names.push_back(name);
    }
    meta["fields"] = names;
    std::ofstream out(dir / "meta.json", std::ios::binary);
    out << meta.dump(2) << '\n';
}

FieldBundle read_bundle(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw InvalidArgument("no meta.json in " + dir.string());
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw InvalidArgument("meta.json: " + std::string(e.what()));
    }
    const int version = meta.value("format_version", -1);
    if (version != kBundleFormatVersion) {
        throw InvalidArgument("unsupported bundle format_version " + std::to_string(version) + " (reader knows " +
                              std::to_string(kBundleFormatVersion) + ")");
    }
    FieldBundle b;
    try {
        b.geom = GridGeom(meta.at("nx").get<int>(), meta.at("ny").get<int>(), meta.at("length_x").get<double>(),
                          meta.at("length_y").get<double>());
        b.scales = {meta.at("l0").get<double>(), meta.at("sigma0").get<double>()};
        b.bc = boundary_from_json(meta.at("boundary"));
        b.noise_level = meta.at("noise").value("level", 0.0);
        if (!meta.at("noise").at("seed").is_null()) b.noise_seed = meta.at("noise").at("seed").get<std::uint64_t>();
        b.provenance = meta.value("provenance", json::object());
        for (const auto& name : meta.at("fields")) {
            const std::string n = name.get<std::string>();
            b.fields.emplace(n, read_field_csv(dir / (n + ".csv"), b.geom));
        }
    } catch (const json::exception& e) {
        throw InvalidArgument("meta.json: " + std::string(e.what()));
    }
    return b;
}

nlohmann::json phantom_to_json(const PhantomSpec& p) {
    json j = {{"kind", kind_name(p.kind)}};
    json mats = json::array();
    for (const auto& m : p.materials) mats.push_back({{"E", m.E}, {"nu", m.nu}});
    j["materials"] = mats;
    if (!p.circles.empty()) {
        json cs = json::array();
        for (const auto& c : p.circles) cs.push_back({{"cx", c.cx}, {"cy", c.cy}, {"r", c.r}, {"material", c.material}});
        j["circles"] = cs;
    }
    if (!p.layer_bounds.empty()) j["layer_bounds"] = p.layer_bounds;
    if (!p.labels.empty()) {
        json rows = json::array();
        for (int r = 0; r < p.label_ny; ++r) {
            rows.push_back(std::vector<int>(p.labels.begin() + static_cast<std::ptrdiff_t>(r) * p.label_nx,
                                            p.labels.begin() + static_cast<std::ptrdiff_t>(r + 1) * p.label_nx));
        }
        j["labels"] = rows;
    }
    return j;
}

GeneratorSpec generator_spec_from_json(const json& j) {
    GeneratorSpec s;
    try {
        s.phantom.kind = kind_from_name(j.at("kind").get<std::string>());
        for (const auto& m : j.at("materials")) s.phantom.materials.push_back({m.at("E").get<double>(), m.at("nu").get<double>()});
        if (j.contains("circles")) {
            for (const auto& c : j.at("circles")) {
                s.phantom.circles.push_back({c.at("cx").get<double>(), c.at("cy").get<double>(), c.at("r").get<double>(),
                                             c.value("material", 1)});
            }
        }
        if (j.contains("layer_bounds")) s.phantom.layer_bounds = j.at("layer_bounds").get<std::vector<double>>();
        if (j.contains("labels")) {
            const auto rows = j.at("labels").get<std::vector<std::vector<int>>>();
            s.phantom.label_ny = static_cast<int>(rows.size());
            s.phantom.label_nx = rows.empty() ? 0 : static_cast<int>(rows[0].size());
            for (const auto& r : rows) {
                if (static_cast<int>(r.size()) != s.phantom.label_nx) throw InvalidArgument("ragged label map");
                s.phantom.labels.insert(s.phantom.labels.end(), r.begin(), r.end());
            }
        }
        s.length_x = j.value("length_x", 1.0);
        s.length_y = j.value("length_y", 1.0);
        if (j.contains("boundary")) {
            s.bc = boundary_from_json(j.at("boundary"));
        } else {
            const json& load = j.at("load");
            const std::string type = load.at("type").get<std::string>();
            const double t = load.at("traction").get<double>();
            if (type == "two-sided-tension") {
                s.bc = BoundarySpec::two_sided_tension(t);
            } else if (type == "top-load-roller-bottom") {
                s.bc = BoundarySpec::top_load_roller_bottom(t);
            } else {
                throw InvalidArgument("unknown load type '" + type + "'");
            }
        }
        if (j.contains("target_max_strain")) s.target_max_strain = j.at("target_max_strain").get<double>();
    } catch (const json::exception& e) {
        throw InvalidArgument("phantom spec: " + std::string(e.what()));
    }
    return s;
}

FieldBundle generate_bundle(const GeneratorSpec& spec, int nx, int ny, double noise_level, std::uint64_t noise_seed) {
    const GridGeom geom(nx, ny, spec.length_x, spec.length_y);
    const Phantom ph = build_phantom(spec.phantom, geom);
    BoundarySpec bc = spec.bc;
    FemSolution sol = solve_plane_strain(ph.material, bc);
    if (spec.target_max_strain) {
        // Linear problem: rescaling the tractions rescales the solution.
        const double peak = std::max(sol.strain.xx.max_abs(), sol.strain.yy.max_abs());
        if (!(peak > 0.0)) throw InvalidArgument("cannot rescale an unloaded specimen to a target strain");
        const double f = *spec.target_max_strain / peak;
        for (EdgeCondition& c : bc.edges) {
            if (c.normal_traction) *c.normal_traction *= f;
            if (c.shear_traction) *c.shear_traction *= f;
        }
        sol = solve_plane_strain(ph.material, bc);
    }
    FieldBundle b;
    b.geom = geom;
    b.bc = bc;
    b.scales = compute_scales(geom, bc);
    const StrainField strain = add_noise(sol.strain, noise_level, noise_seed);
    b.fields.emplace("strain_xx", strain.xx);
    b.fields.emplace("strain_yy", strain.yy);
    b.fields.emplace("strain_xy", strain.xy);
    b.fields.emplace("truth_E", ph.E);
    b.fields.emplace("truth_nu", ph.nu);
    b.fields.emplace("truth_stress_xx", sol.stress.xx);
    b.fields.emplace("truth_stress_yy", sol.stress.yy);
    b.fields.emplace("truth_stress_xy", sol.stress.xy);
    b.noise_level = noise_level;
    if (noise_level > 0.0) b.noise_seed = noise_seed;
    b.provenance = {{"generator", "q4-plane-strain"},
                    {"phantom", phantom_to_json(spec.phantom)},
                    {"element_material", "mean of corner pixel lame parameters"},
                    {"noise_model", "gaussian, sd = level * max|channel|"},
                    {"l0_rule", "mean of side lengths"},
                    {"output_channels", "lambda, mu, s_xx, s_yy, s_xy"}};
    if (spec.target_max_strain) b.provenance["target_max_strain"] = *spec.target_max_strain;
    if (!ph.warnings.empty()) b.provenance["warnings"] = ph.warnings;
    return b;
}

std::string render_ppm(const ScalarField& f, std::optional<double> lo, std::optional<double> hi) {
    const auto vals = f.values();
    const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    const double a = lo.value_or(*mn);
    const double b = hi.value_or(*mx);
    const bool constant = *mn == *mx;
    if (a > b) throw InvalidArgument("render range min exceeds max");
    if (a == b && !constant) throw InvalidArgument("render range is empty but the field is not constant");
    const GridGeom& g = f.geom();
    std::string out = "P6\n" + std::to_string(g.nx) + " " + std::to_string(g.ny) + "\n255\n";
    out.reserve(out.size() + 3 * g.size());
    for (int j = g.ny - 1; j >= 0; --j) {
        for (int i = 0; i < g.nx; ++i) {
            double t = a == b ? 0.0 : 255.0 * (f(i, j) - a) / (b - a);
            t = std::clamp(t, 0.0, 255.0);
            const char byte = static_cast<char>(static_cast<unsigned char>(std::lround(t)));
            out.append(3, byte);
        }
    }
    return out;
}

}  // namespace elastinv
