// Command-line front end: generate, invert, evaluate, render.
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "elastinv/bundle.hpp"
#include "elastinv/trainer.hpp"

namespace fs = std::filesystem;
using namespace elastinv;

namespace {

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw InvalidArgument("cannot open " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(p.string() + ": " + e.what());
    }
}

int cmd_generate(const fs::path& spec, int nx, int ny, double noise, std::uint64_t seed, const fs::path& out) {
    const GeneratorSpec g = generator_spec_from_json(read_json(spec));
    const FieldBundle b = generate_bundle(g, nx, ny, noise, seed);
    if (b.provenance.contains("warnings")) {
        for (const auto& w : b.provenance["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    }
    write_bundle(b, out);
    std::printf("wrote %s (%dx%d, sigma0 %.6g Pa, noise %.3g)\n", out.c_str(), nx, ny, b.scales.sigma0, noise);
    return 0;
}

int cmd_invert(const fs::path& data, const fs::path& model, const fs::path& out) {
    const FieldBundle b = read_bundle(data);
    const ModelConfig cfg = ModelConfig::from_json(read_json(model));
    std::vector<RunRecord> runs;
    for (std::uint64_t seed : cfg.seeds) {
        runs.push_back(train(cfg, b, seed));
        const RunRecord& r = runs.back();
        write_run(r, out / ("run-" + std::to_string(seed)));
        std::printf("seed %llu: %ld epochs, E error %.4g, nu error %.4g\n", static_cast<unsigned long long>(seed),
                    r.epochs, r.final_e_error, r.final_nu_error);
    }
    const RunSummary s = aggregate_runs(runs);
    write_summary(s, runs, out / "aggregate");
    std::printf("median E error %.4g, median nu error %.4g over %zu seeds\n", s.median_e_error, s.median_nu_error,
                runs.size());
    return 0;
}

int cmd_evaluate(const fs::path& est_dir, const fs::path& truth_dir, const fs::path& out) {
    const FieldBundle truth = read_bundle(truth_dir);
    const ScalarField& tE = truth.field("truth_E");
    const ScalarField& tnu = truth.field("truth_nu");
    const ScalarField eE = read_field_csv(est_dir / "est_E.csv", truth.geom);
    const ScalarField enu = read_field_csv(est_dir / "est_nu.csv", truth.geom);
    std::vector<unsigned char> mask(truth.geom.size(), 1);
    if (fs::exists(est_dir / "valid_mask.csv")) {
        const ScalarField m = read_field_csv(est_dir / "valid_mask.csv", truth.geom);
        for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = m[k] != 0.0;
    }
    const double e_err = mean_abs_rel_error(eE, tE, mask);
    const double nu_err = mean_abs_rel_error(enu, tnu, mask);
    std::size_t valid = 0;
    for (unsigned char m : mask) valid += m;

    const fs::path maps = out.has_parent_path() ? out.parent_path() : fs::path(".");
    if (!maps.empty()) fs::create_directories(maps);
    ScalarField mapE(truth.geom);
    ScalarField mapnu(truth.geom);
    for (std::size_t k = 0; k < mask.size(); ++k) {
        mapE[k] = std::abs(eE[k] - tE[k]) / std::abs(tE[k]);
        mapnu[k] = std::abs(enu[k] - tnu[k]) / std::abs(tnu[k]);
    }
    write_field_csv(mapE, maps / "error_E.csv");
    write_field_csv(mapnu, maps / "error_nu.csv");
    std::ofstream f(out, std::ios::binary);
    char line[128];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%zu\n", e_err, nu_err, valid);
    f << "e_error,nu_error,valid_pixels\n" << line;
    std::printf("E error %.6g, nu error %.6g, %zu valid pixels\n", e_err, nu_err, valid);
    return 0;
}

int cmd_render(const fs::path& field, const fs::path& out, std::optional<double> lo, std::optional<double> hi) {
    const std::string ppm = render_ppm(read_field_csv(field), lo, hi);
    std::ofstream f(out, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + out.string());
    f << ppm;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physics-informed inversion of heterogeneous elastic fields"};
    app.require_subcommand(1);

    fs::path spec, out, data, model, est, truth, field;
    int nx = 0, ny = 0;
    double noise = 0.0;
    std::uint64_t noise_seed = 0;
    std::optional<double> lo, hi;

    auto* gen = app.add_subcommand("generate", "simulate a phantom and write a field bundle");
    gen->add_option("--phantom", spec, "phantom spec JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--nx", nx)->required()->check(CLI::PositiveNumber);
    gen->add_option("--ny", ny)->required()->check(CLI::PositiveNumber);
    gen->add_option("--noise", noise, "Gaussian noise, fraction of max |strain| per channel")->check(CLI::Range(0.0, 10.0));
    gen->add_option("--noise-seed", noise_seed);
    gen->add_option("--out", out)->required();

    auto* inv = app.add_subcommand("invert", "train a model on a bundle for every configured seed");
    inv->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
    inv->add_option("--model", model)->required()->check(CLI::ExistingFile);
    inv->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("evaluate", "error metrics of an estimate against a truth bundle");
    ev->add_option("--est", est)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--truth", truth)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--out", out)->required();

    auto* ren = app.add_subcommand("render", "grayscale PPM of a field CSV");
    ren->add_option("--field", field)->required()->check(CLI::ExistingFile);
    ren->add_option("--out", out)->required();
    ren->add_option("--min", lo);
    ren->add_option("--max", hi);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_generate(spec, nx, ny, noise, noise_seed, out);
        if (*inv) return cmd_invert(data, model, out);
        if (*ev) return cmd_evaluate(est, truth, out);
        if (*ren) return cmd_render(field, out, lo, hi);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
