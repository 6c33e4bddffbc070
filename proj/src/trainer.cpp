#include "elastinv/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace elastinv {

using nlohmann::json;

void ModelConfig::validate() const {
    if (budget.epochs.has_value() == budget.wall_seconds.has_value()) {
        throw InvalidArgument("budget needs exactly one of epochs or wall_seconds");
    }
    if (budget.epochs && *budget.epochs < 0) throw InvalidArgument("epochs must be >= 0");
    if (budget.wall_seconds && !(*budget.wall_seconds > 0.0)) throw InvalidArgument("wall_seconds must be > 0");
    if (seeds.empty()) throw InvalidArgument("seeds must be nonempty");
    if (!(adam.lr > 0.0)) throw InvalidArgument("learning rate must be > 0");
    if (variant != Variant::DensePINN) {
        unet.validate();
        if (unet.out_channels != (variant == Variant::P ? 2 : 5)) {
            throw InvalidArgument("variant " + variant_name(variant) + " needs " +
                                  std::to_string(variant == Variant::P ? 2 : 5) + " output channels");
        }
    }
}

json ModelConfig::to_json() const {
    json j = {{"variant", variant_name(variant)},
              {"lr", adam.lr},
              {"beta1", adam.beta1},
              {"beta2", adam.beta2},
              {"adam_eps", adam.eps},
              {"seeds", seeds}};
    if (budget.epochs) j["epochs"] = *budget.epochs;
    if (budget.wall_seconds) j["wall_seconds"] = *budget.wall_seconds;
    if (variant == Variant::DensePINN) {
        j["mlp"] = {{"hidden_layers", mlp.hidden_layers},
                    {"width", mlp.width},
                    {"activation", mlp.activation == Activation::tanh ? "tanh" : "relu"}};
    } else {
        j["unet"] = {{"channels", unet.channels}, {"bn_eps", unet.bn_eps}};
    }
    return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    try {
        c.variant = variant_from_name(j.at("variant").get<std::string>());
        c.adam.lr = j.value("lr", c.adam.lr);
        c.adam.beta1 = j.value("beta1", c.adam.beta1);
        c.adam.beta2 = j.value("beta2", c.adam.beta2);
        c.adam.eps = j.value("adam_eps", c.adam.eps);
        c.budget = {};
        if (j.contains("epochs")) c.budget.epochs = j.at("epochs").get<long>();
        if (j.contains("wall_seconds")) c.budget.wall_seconds = j.at("wall_seconds").get<double>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.unet.out_channels = c.variant == Variant::P ? 2 : 5;
        if (j.contains("unet")) {
            const json& u = j.at("unet");
            if (u.contains("channels")) c.unet.channels = u.at("channels").get<std::vector<int>>();
            c.unet.bn_eps = u.value("bn_eps", c.unet.bn_eps);
        }
        if (j.contains("mlp")) {
            const json& m = j.at("mlp");
            c.mlp.hidden_layers = m.value("hidden_layers", c.mlp.hidden_layers);
            c.mlp.width = m.value("width", c.mlp.width);
            const std::string act = m.value("activation", std::string("tanh"));
            if (act == "tanh") {
                c.mlp.activation = Activation::tanh;
            } else if (act == "relu") {
                c.mlp.activation = Activation::relu;
            } else {
                throw InvalidArgument("unknown activation '" + act + "'");
            }
        }
    } catch (const json::exception& e) {
        throw InvalidArgument("model config: " + std::string(e.what()));
    }
    c.validate();
    return c;
}

double mean_abs_rel_error(const ScalarField& est, const ScalarField& truth, std::span<const unsigned char> mask) {
    require_same_geom(est.geom(), truth.geom(), "error metric");
    if (mask.size() != est.size()) throw InvalidArgument("mask size does not match the field");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < est.size(); ++k) {
        if (!mask[k]) continue;
        if (truth[k] == 0.0) throw InvalidArgument("truth is zero on a masked-in pixel");
        sum += std::abs(est[k] - truth[k]) / std::abs(truth[k]);
        ++n;
    }
    if (n == 0) throw InvalidArgument("error metric over an empty mask");
    return sum / static_cast<double>(n);
}

double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

namespace {

ScalarField to_field(const GridGeom& g, const Tensor& t) {
    const auto v = t.values();
    return ScalarField(g, std::vector<double>(v.begin(), v.end()));
}

WeightMap to_map(const Parameter& p) {
    const Tensor& t = p.tensor();
    const auto v = t.values();
    return {t.dim(0), t.dim(1), std::vector<double>(v.begin(), v.end())};
}

/// Runs whichever network the variant uses and exposes its outputs as [H, W] fields.
class Model {
public:
    Model(const ModelConfig& cfg, const FieldBundle& data, std::uint64_t seed)
        : variant_(cfg.variant), geom_(data.geom) {
        if (variant_ == Variant::DensePINN) {
            MLPConfig m = cfg.mlp;
            m.seed = seed;
            pinn_.emplace(m);
            const int n = static_cast<int>(geom_.size());
            std::vector<double> xy(2 * static_cast<std::size_t>(n));
            for (int j = 0; j < geom_.ny; ++j) {
                for (int i = 0; i < geom_.nx; ++i) {
                    const std::size_t k = geom_.index(i, j);
                    xy[2 * k] = geom_.x(i) / data.scales.l0;
                    xy[2 * k + 1] = geom_.y(j) / data.scales.l0;
                }
            }
            coords_ = Tensor::constant({n, 2}, std::move(xy));
        } else {
            UNetConfig u = cfg.unet;
            u.seed = seed;
            unet_.emplace(u);
            input_ = normalize_for_network(data.strain()).input;
        }
    }

    NetworkOutputs forward(const PhysicsProblem& prob) const {
        using namespace ops;
        NetworkOutputs o;
        const Shape hw{geom_.ny, geom_.nx};
        if (pinn_) {
            const PinnOutputs p = pinn_->forward(coords_, true);
            o.lambda = reshape(column(p.params, 0), hw);
            o.mu = reshape(column(p.params, 1), hw);
            o.stress = {reshape(column(p.stresses, 0), hw), reshape(column(p.stresses, 1), hw),
                        reshape(column(p.stresses, 2), hw)};
            o.r1 = reshape(add(column(p.dstress_dx, 0), column(p.dstress_dy, 2)), hw);
            o.r2 = reshape(add(column(p.dstress_dx, 2), column(p.dstress_dy, 1)), hw);
            return o;
        }
        const Tensor y = unet_->forward(input_);
        o.lambda = channel(y, 0);
        o.mu = channel(y, 1);
        if (variant_ == Variant::P) {
            o.stress = constitutive_stress(o.mu, o.lambda, prob);
        } else {
            o.stress = {channel(y, 2), channel(y, 3), channel(y, 4)};
        }
        return o;
    }

    std::vector<Parameter*> parameters() { return pinn_ ? pinn_->parameters() : unet_->parameters(); }

private:
    Variant variant_;
    GridGeom geom_;
    std::optional<UNet> unet_;
    std::optional<DensePinn> pinn_;
    Tensor input_;
    Tensor coords_;
};

struct Errors {
    double e = std::numeric_limits<double>::quiet_NaN();
    double nu = std::numeric_limits<double>::quiet_NaN();
};

Errors field_errors(const Redimensionalized& est, const FieldBundle& data) {
    Errors err;
    if (!data.has_truth() || est.valid_count() == 0) return err;
    err.e = mean_abs_rel_error(est.E, data.field("truth_E"), est.valid);
    err.nu = mean_abs_rel_error(est.nu, data.field("truth_nu"), est.valid);
    return err;
}

void check_compatible(Variant v, const FieldBundle& data) {
    for (const char* n : {"strain_xx", "strain_yy", "strain_xy"}) {
        if (!data.has(n)) throw InvalidArgument(std::string("dataset lacks required field ") + n);
    }
    bool any_target = false;
    for (const EdgeCondition& c : data.bc.edges) any_target |= c.normal_traction.has_value() || c.shear_traction.has_value();
    if (!any_target) {
        throw InvalidArgument("variant " + variant_name(v) +
                              " needs at least one boundary traction target; the dataset specifies none");
    }
    if (v != Variant::DensePINN && (data.geom.nx < 3 || data.geom.ny < 3)) {
        throw InvalidArgument("grid must be at least 3x3");
    }
}

}  // namespace

RunRecord train(const ModelConfig& cfg, const FieldBundle& data, std::uint64_t seed) {
    cfg.validate();
    check_compatible(cfg.variant, data);
    const PhysicsProblem prob =
        PhysicsProblem::make(data.strain(), data.bc.scaled(data.scales.sigma0), grid_spacing(data.geom, data.scales));
    Model model(cfg, data, seed);
    std::vector<Parameter*> net_params = model.parameters();
    std::optional<WeightFields> weights;
    if (is_weighted(cfg.variant)) weights = WeightFields::for_variant(cfg.variant, data.geom);

    RunRecord rec;
    rec.seed = seed;
    rec.variant = cfg.variant;
    rec.scales = data.scales;

    const auto start = std::chrono::steady_clock::now();
    auto budget_left = [&](long done) {
        if (cfg.budget.epochs) return done < *cfg.budget.epochs;
        const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
        return el.count() < *cfg.budget.wall_seconds;
    };
    for (long t = 1; budget_left(t - 1); ++t) {
        const NetworkOutputs out = model.forward(prob);
        const AssembledLoss loss = assemble_loss(cfg.variant, out, prob, weights ? &*weights : nullptr);
        const Errors err = field_errors(
            redimensionalize(to_field(data.geom, out.mu), to_field(data.geom, out.lambda), data.scales), data);
        rec.log.push_back({loss.breakdown, err.e, err.nu});
        loss.objective.backward();
        if (weights) {
            minmax_update(*weights, net_params, cfg.adam, t);
        } else {
            adam_step(net_params, cfg.adam, t);
        }
        rec.epochs = t;
    }

    // Final state after the last update.
    const NetworkOutputs out = model.forward(prob);
    rec.lambda = to_field(data.geom, out.lambda);
    rec.mu = to_field(data.geom, out.mu);
    rec.estimate = redimensionalize(rec.mu, rec.lambda, data.scales);
    if (has_stress_outputs(cfg.variant)) {
        rec.stress = StressField{to_field(data.geom, out.stress.xx), to_field(data.geom, out.stress.yy),
                                 to_field(data.geom, out.stress.xy)};
    }
    if (weights) {
        if (weights->psi_C) rec.weights["psi_C"] = to_map(*weights->psi_C);
        if (weights->psi_E) rec.weights["psi_E"] = to_map(*weights->psi_E);
        if (weights->psi_sides) rec.weights["psi_sides"] = to_map(*weights->psi_sides);
        if (weights->psi_topbottom) rec.weights["psi_topbottom"] = to_map(*weights->psi_topbottom);
    }
    const Errors err = field_errors(rec.estimate, data);
    rec.final_e_error = err.e;
    rec.final_nu_error = err.nu;
    return rec;
}

namespace {

template <class Get>
CurveStats curve(std::span<const RunRecord> records, long n, Get get) {
    CurveStats c;
    const double count = static_cast<double>(records.size());
    for (long t = 0; t < n; ++t) {
        double sum = 0.0;
        for (const RunRecord& r : records) sum += get(r.log[t]);
        const double mean = sum / count;
        double v = 0.0;
        for (const RunRecord& r : records) v += (get(r.log[t]) - mean) * (get(r.log[t]) - mean);
        c.mean.push_back(mean);
        c.std.push_back(std::sqrt(v / count));
    }
    return c;
}

}  // namespace

RunSummary aggregate_runs(std::span<const RunRecord> records) {
    if (records.empty()) throw InvalidArgument("aggregate_runs needs at least one record");
    const GridGeom& g = records[0].estimate.E.geom();
    RunSummary s;
    s.epochs = records[0].epochs;
    for (const RunRecord& r : records) {
        require_same_geom(r.estimate.E.geom(), g, "aggregate_runs");
        s.epochs = std::min(s.epochs, r.epochs);
    }
    s.loss = curve(records, s.epochs, [](const EpochLog& e) { return e.loss.unweighted_total; });
    s.e_error = curve(records, s.epochs, [](const EpochLog& e) { return e.e_error; });
    s.nu_error = curve(records, s.epochs, [](const EpochLog& e) { return e.nu_error; });

    s.mean_E = ScalarField(g);
    s.mean_nu = ScalarField(g);
    s.valid.assign(g.size(), 0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        int n = 0;
        for (const RunRecord& r : records) {
            if (!r.estimate.valid[k]) continue;
            s.mean_E[k] += r.estimate.E[k];
            s.mean_nu[k] += r.estimate.nu[k];
            ++n;
        }
        if (n > 0) {
            s.mean_E[k] /= n;
            s.mean_nu[k] /= n;
            s.valid[k] = 1;
        }
    }
    for (const RunRecord& r : records) {
        s.final_e_errors.push_back(r.final_e_error);
        s.final_nu_errors.push_back(r.final_nu_error);
    }
    s.median_e_error = median(s.final_e_errors);
    s.median_nu_error = median(s.final_nu_errors);
    return s;
}

namespace {

void write_mask(std::span<const unsigned char> mask, const GridGeom& g, const std::filesystem::path& path) {
    ScalarField f(g);
    for (std::size_t k = 0; k < g.size(); ++k) f[k] = mask[k];
    write_field_csv(f, path);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_run(const RunRecord& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const GridGeom& g = r.estimate.E.geom();
    write_field_csv(r.estimate.E, dir / "est_E.csv");
    write_field_csv(r.estimate.nu, dir / "est_nu.csv");
    write_mask(r.estimate.valid, g, dir / "valid_mask.csv");
    ScalarField lam(g);
    ScalarField mu(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        lam[k] = r.lambda[k] * r.scales.sigma0;
        mu[k] = r.mu[k] * r.scales.sigma0;
    }
    write_field_csv(lam, dir / "est_lambda.csv");
    write_field_csv(mu, dir / "est_mu.csv");
    if (r.stress) {
        // Pa, like the truth stresses in a bundle.
        const std::pair<const char*, const ScalarField*> comps[] = {
            {"est_stress_xx.csv", &r.stress->xx}, {"est_stress_yy.csv", &r.stress->yy}, {"est_stress_xy.csv", &r.stress->xy}};
        for (const auto& [name, f] : comps) {
            ScalarField s(g);
            for (std::size_t k = 0; k < g.size(); ++k) s[k] = (*f)[k] * r.scales.sigma0;
            write_field_csv(s, dir / name);
        }
    }
    for (const auto& [name, w] : r.weights) write_matrix_csv(w.values, w.rows, w.cols, dir / (name + ".csv"));

    std::ofstream out(dir / "losses.csv", std::ios::binary);
    out << "epoch,equilibrium_x,equilibrium_y";
    const LossBreakdown* first = r.log.empty() ? nullptr : &r.log.front().loss;
    const bool constitutive = has_stress_outputs(r.variant);
    if (constitutive) out << ",constitutive_xx,constitutive_yy,constitutive_xy";
    std::vector<std::pair<int, int>> bterms;
    if (first) {
        for (int e = 0; e < 4; ++e) {
            for (int c = 0; c < 2; ++c) {
                if (first->boundary[e][c]) {
                    bterms.emplace_back(e, c);
                    out << ",boundary_" << edge_name(static_cast<Edge>(e)) << '_' << (c == 0 ? "normal" : "shear");
                }
            }
        }
    }
    out << ",total,e_error,nu_error\n";
    for (std::size_t t = 0; t < r.log.size(); ++t) {
        const LossBreakdown& b = r.log[t].loss;
        out << t + 1 << ',' << num(b.equilibrium_x) << ',' << num(b.equilibrium_y);
        if (constitutive) {
            out << ',' << num(b.constitutive_xx.value_or(0.0)) << ',' << num(b.constitutive_yy.value_or(0.0)) << ','
                << num(b.constitutive_xy.value_or(0.0));
        }
        for (const auto& [e, c] : bterms) out << ',' << num(b.boundary[e][c].value_or(0.0));
        out << ',' << num(b.unweighted_total) << ',' << num(r.log[t].e_error) << ',' << num(r.log[t].nu_error) << '\n';
    }

    const json j = {{"seed", r.seed},
                    {"variant", variant_name(r.variant)},
                    {"epochs", r.epochs},
                    {"final_e_error", std::isfinite(r.final_e_error) ? json(r.final_e_error) : json(nullptr)},
                    {"final_nu_error", std::isfinite(r.final_nu_error) ? json(r.final_nu_error) : json(nullptr)},
                    {"valid_pixels", r.estimate.valid_count()}};
    std::ofstream(dir / "run.json", std::ios::binary) << j.dump(2) << '\n';
}

void write_summary(const RunSummary& s, std::span<const RunRecord> records, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_field_csv(s.mean_E, dir / "mean_E.csv");
    write_field_csv(s.mean_nu, dir / "mean_nu.csv");
    write_mask(s.valid, s.mean_E.geom(), dir / "valid_mask.csv");
    std::ofstream c(dir / "curves.csv", std::ios::binary);
    c << "epoch,loss_mean,loss_std,e_error_mean,e_error_std,nu_error_mean,nu_error_std\n";
    for (long t = 0; t < s.epochs; ++t) {
        c << t + 1 << ',' << num(s.loss.mean[t]) << ',' << num(s.loss.std[t]) << ',' << num(s.e_error.mean[t]) << ','
          << num(s.e_error.std[t]) << ',' << num(s.nu_error.mean[t]) << ',' << num(s.nu_error.std[t]) << '\n';
    }
    std::ofstream f(dir / "finals.csv", std::ios::binary);
    f << "seed,epochs,e_error,nu_error\n";
    for (const RunRecord& r : records) {
        f << r.seed << ',' << r.epochs << ',' << num(r.final_e_error) << ',' << num(r.final_nu_error) << '\n';
    }
    f << "median,," << num(s.median_e_error) << ',' << num(s.median_nu_error) << '\n';
}

}  // namespace elastinv
