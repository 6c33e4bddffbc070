#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "elastinv/bundle.hpp"
#include "elastinv/losses.hpp"
#include "elastinv/networks.hpp"

namespace elastinv {

/// Training budget: exactly one of epochs / wall_seconds.
struct Budget {
    std::optional<long> epochs;
    std::optional<double> wall_seconds;
};

struct ModelConfig {
    Variant variant = Variant::PS_W1;
    UNetConfig unet;  ///< used by the UNet variants (seed field is overridden per run)
    MLPConfig mlp;    ///< used by dense-PINN
    AdamSettings adam;
    Budget budget{2000, std::nullopt};
    std::vector<std::uint64_t> seeds{0};

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
    LossBreakdown loss;  ///< unweighted terms (weighted_total kept for reference)
    double e_error = 0.0;   ///< NaN without ground truth
    double nu_error = 0.0;
};

/// A 2D array of named weights, e.g. psi_sides [2, ny - 2].
struct WeightMap {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
};

struct RunRecord {
    std::uint64_t seed = 0;
    Variant variant = Variant::PS_W1;
    long epochs = 0;
    std::vector<EpochLog> log;
    Scales scales;
    ScalarField lambda;  ///< dimensionless network output
    ScalarField mu;
    Redimensionalized estimate;  ///< E (Pa), nu, validity mask
    std::optional<StressField> stress;  ///< dimensionless network stresses
    std::map<std::string, WeightMap> weights;  ///< psi_C, psi_E, psi_sides, psi_topbottom
    double final_e_error = 0.0;
    double final_nu_error = 0.0;
};

/// Trains one model for one seed. Errors are tracked when the bundle carries truth_E and truth_nu.
RunRecord train(const ModelConfig& cfg, const FieldBundle& data, std::uint64_t seed);

/// Mean over mask-valid pixels of |est - truth| / |truth|.
double mean_abs_rel_error(const ScalarField& est, const ScalarField& truth, std::span<const unsigned char> mask);

struct CurveStats {
    std::vector<double> mean;
    std::vector<double> std;  ///< population convention (divide by n)
};

struct RunSummary {
    long epochs = 0;  ///< minimum across records
    CurveStats loss;
    CurveStats e_error;
    CurveStats nu_error;
    ScalarField mean_E;  ///< mean over the seeds valid at each pixel, 0 where none is
    ScalarField mean_nu;
    std::vector<unsigned char> valid;  ///< 1 where at least one seed is valid
    std::vector<double> final_e_errors;
    std::vector<double> final_nu_errors;
    double median_e_error = 0.0;
    double median_nu_error = 0.0;
};

RunSummary aggregate_runs(std::span<const RunRecord> records);

double median(std::vector<double> v);

/// Writes a run directory: est_*.csv, valid_mask.csv, psi_*.csv, losses.csv, run.json.
void write_run(const RunRecord& r, const std::filesystem::path& dir);
/// Writes mean fields, curves.csv and finals.csv.
void write_summary(const RunSummary& s, std::span<const RunRecord> records, const std::filesystem::path& dir);

}  // namespace elastinv
