// ficlab: FIC tables with confidence distributions, model averaging and
// risk simulations for GLM submodel selection.
//
// Subcommands: fic, cd, average, simulate {phi-risk, narrow-wide, q2-map,
// harness, limit-density}. A flat key=value config file can override any
// flag. Exit codes: 0 success, 2 config error, 3 fit failure on all
// models, 4 I/O error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ficlab/ficlab.hpp"

using nlohmann::ordered_json;
using namespace ficlab;

namespace {

// ---------------------------------------------------------------- helpers

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Vec parse_vec(const std::string& s, const char* what) {
    auto parts = split_list(s);
    if (parts.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
    Vec v(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        try {
            v[i] = std::stod(parts[i]);
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string(what) + ": bad number '" + parts[i] + "'");
        }
    }
    return v;
}

// "lo:hi:count" inclusive linear grid
Vec parse_grid(const std::string& s, const char* what) {
    std::vector<std::string> f;
    {
        std::string item;
        std::istringstream is(s);
        while (std::getline(is, item, ':')) f.push_back(detail::trim(item));
    }
    if (f.size() != 3) throw std::invalid_argument(std::string(what) + ": expected lo:hi:count");
    double lo, hi;
    int count;
    try {
        lo = std::stod(f[0]);
        hi = std::stod(f[1]);
        count = std::stoi(f[2]);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string(what) + ": bad grid '" + s + "'");
    }
    if (count < 1 || (count == 1 && hi != lo) || hi < lo)
        throw std::invalid_argument(std::string(what) + ": bad grid '" + s + "'");
    Vec g(count);
    for (int i = 0; i < count; ++i)
        g[i] = count == 1 ? lo : lo + (hi - lo) * double(i) / double(count - 1);
    return g;
}

ScoreVariant parse_variant(const std::string& s) {
    if (s == "t") return ScoreVariant::fic_t;
    if (s == "u") return ScoreVariant::fic_u;
    if (s == "median") return ScoreVariant::median;
    if (s == "quantile") return ScoreVariant::quantile;
    throw std::invalid_argument("unknown score variant '" + s + "' (use t, u, median, quantile)");
}

Family parse_family(const std::string& s) {
    if (s == "linear") return Family::linear;
    if (s == "logistic") return Family::logistic;
    if (s == "poisson") return Family::poisson;
    throw std::invalid_argument("unknown family '" + s + "'");
}

SubmodelMask parse_mask(const std::string& label, int q) {
    if (static_cast<int>(label.size()) != q)
        throw std::invalid_argument("model label '" + label + "' must have " + std::to_string(q) +
                                    " characters");
    std::uint32_t bits = 0;
    for (int j = 0; j < q; ++j) {
        if (label[j] == '1') bits |= (1u << j);
        else if (label[j] != '0')
            throw std::invalid_argument("model label '" + label + "' must be 0/1 characters");
    }
    return SubmodelMask(bits, q);
}

std::string fmt(double v) { return format_significant(v); }

// key=value pairs, '-' and '_' interchangeable in keys, repeats collected
std::multimap<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::multimap<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = detail::trim(s.substr(0, eq));
        for (auto& c : key)
            if (c == '-') c = '_';
        kv.emplace(key, detail::trim(s.substr(eq + 1)));
    }
    return kv;
}

void apply_config_scalar(const std::multimap<std::string, std::string>& kv,
                         const std::string& key, std::string& target) {
    auto it = kv.find(key);
    if (it != kv.end()) target = it->second;
}

void apply_config_list(const std::multimap<std::string, std::string>& kv, const std::string& key,
                       std::vector<std::string>& target) {
    auto [lo, hi] = kv.equal_range(key);
    if (lo == hi) return;
    target.clear();
    for (auto it = lo; it != hi; ++it) target.push_back(it->second);
}

// ------------------------------------------------------- shared analysis

struct AnalysisArgs {
    std::string data_path, config_path;
    std::string family = "linear";
    std::string response;
    std::string protected_list, open_list;
    bool no_intercept = false;
    std::vector<std::string> interactions; // name=a*b
    std::vector<std::string> rules;        // dep:req
    std::vector<std::string> gamma0;       // col=v
    std::vector<std::string> at;           // col=v or comma list of them
    std::string focus = "mean-response";
    double threshold = 0.0;
    std::string rank_by = "t";
    double quantile_q = 0.5;
    double ci = 0.9;
    std::string models; // comma list of 0/1 labels, empty = all admissible
    std::string out_prefix = "ficlab";

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--data", data_path, "CSV dataset (header row required)");
        cmd->add_option("--config", config_path,
                        "flat key=value file; entries override the flags");
        cmd->add_option("--family", family, "linear | logistic | poisson");
        cmd->add_option("--response", response, "response column");
        cmd->add_option("--protected", protected_list,
                        "comma list of protected covariate columns");
        cmd->add_option("--open", open_list, "comma list of open covariate columns");
        cmd->add_flag("--no-intercept", no_intercept, "do not prepend an intercept column");
        cmd->add_option("--interaction", interactions,
                        "derived open column, name=colA*colB (repeatable)");
        cmd->add_option("--require", rules,
                        "admissibility rule dep:req, models with dep must include req");
        cmd->add_option("--gamma0", gamma0, "null value for an open coefficient, col=value");
        cmd->add_option("--at", at, "focus point coordinate, col=value (repeatable)");
        cmd->add_option("--focus", focus, "linear-predictor | mean-response | prob-below");
        cmd->add_option("--threshold", threshold, "y0 for the prob-below focus");
        cmd->add_option("--rank-by", rank_by, "t | u | median | quantile");
        cmd->add_option("--quantile", quantile_q, "q for the quantile score");
        cmd->add_option("--ci", ci, "confidence level for intervals");
        cmd->add_option("--models", models, "comma list of 0/1 model labels (default: all)");
        cmd->add_option("--out-prefix", out_prefix, "output path prefix");
    }

    void apply_config() {
        if (config_path.empty()) return;
        auto kv = read_config(config_path);
        apply_config_scalar(kv, "data", data_path);
        apply_config_scalar(kv, "family", family);
        apply_config_scalar(kv, "response", response);
        apply_config_scalar(kv, "protected", protected_list);
        apply_config_scalar(kv, "open", open_list);
        if (kv.count("intercept")) no_intercept = kv.find("intercept")->second == "false";
        apply_config_list(kv, "interaction", interactions);
        apply_config_list(kv, "require", rules);
        apply_config_list(kv, "gamma0", gamma0);
        apply_config_list(kv, "at", at);
        apply_config_scalar(kv, "focus", focus);
        apply_config_scalar(kv, "rank_by", rank_by);
        apply_config_scalar(kv, "models", models);
        apply_config_scalar(kv, "out_prefix", out_prefix);
        if (auto it = kv.find("threshold"); it != kv.end()) threshold = std::stod(it->second);
        if (auto it = kv.find("quantile"); it != kv.end()) quantile_q = std::stod(it->second);
        if (auto it = kv.find("ci"); it != kv.end()) ci = std::stod(it->second);
    }
};

struct PreparedAnalysis {
    DatasetSpec spec;
    LoadedDataset ds;
    FocusSpec focus;
    std::vector<SubmodelMask> masks;
    AnalysisOptions opt;
};

PreparedAnalysis prepare(AnalysisArgs& a) {
    a.apply_config();
    if (a.data_path.empty()) throw std::invalid_argument("--data is required");
    if (a.response.empty()) throw std::invalid_argument("--response is required");
    if (a.open_list.empty()) throw std::invalid_argument("--open is required");
    if (!(a.quantile_q > 0.0 && a.quantile_q < 1.0))
        throw std::invalid_argument("--quantile must be in (0,1)");
    if (!(a.ci > 0.0 && a.ci < 1.0)) throw std::invalid_argument("--ci must be in (0,1)");

    PreparedAnalysis p;
    p.spec.family = parse_family(a.family);
    p.spec.response = a.response;
    p.spec.protected_cols = split_list(a.protected_list);
    p.spec.open_cols = split_list(a.open_list);
    p.spec.intercept = !a.no_intercept;
    for (const auto& s : a.interactions) {
        auto eq = s.find('=');
        auto star = s.find('*');
        if (eq == std::string::npos || star == std::string::npos || star < eq)
            throw std::invalid_argument("--interaction expects name=colA*colB, got '" + s + "'");
        p.spec.interactions.push_back({detail::trim(s.substr(0, eq)),
                                       detail::trim(s.substr(eq + 1, star - eq - 1)),
                                       detail::trim(s.substr(star + 1))});
    }
    for (const auto& s : a.rules) {
        auto colon = s.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("--require expects dep:req, got '" + s + "'");
        p.spec.rules.push_back(
            {detail::trim(s.substr(0, colon)), detail::trim(s.substr(colon + 1))});
    }
    for (const auto& s : a.gamma0) {
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--gamma0 expects col=value, got '" + s + "'");
        p.spec.gamma0[detail::trim(s.substr(0, eq))] = std::stod(s.substr(eq + 1));
    }

    CsvTable csv = read_csv(a.data_path);
    p.ds = assemble_dataset(csv, p.spec);

    std::map<std::string, double> at;
    for (const auto& entry : a.at)
        for (const auto& s : split_list(entry)) {
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("--at expects col=value, got '" + s + "'");
            at[detail::trim(s.substr(0, eq))] = std::stod(s.substr(eq + 1));
        }

    FocusKind kind;
    if (a.focus == "linear-predictor") kind = FocusKind::linear_predictor;
    else if (a.focus == "mean-response") kind = FocusKind::mean_response;
    else if (a.focus == "prob-below") kind = FocusKind::prob_below;
    else throw std::invalid_argument("unknown focus '" + a.focus + "'");
    p.focus = make_focus(p.ds, p.spec, kind, at, a.threshold);

    const int q = p.ds.data.q();
    if (a.models.empty()) {
        p.masks = admissible_masks(q, p.ds.rule_indices);
    } else {
        for (const auto& label : split_list(a.models)) {
            SubmodelMask S = parse_mask(label, q);
            if (!mask_admissible(S, p.ds.rule_indices))
                throw std::invalid_argument("model '" + label + "' violates a --require rule");
            p.masks.push_back(S);
        }
        if (p.masks.empty()) throw std::invalid_argument("--models parsed to an empty list");
    }

    p.opt.rank_by = parse_variant(a.rank_by);
    p.opt.quantile_q = a.quantile_q;
    p.opt.ci_level = a.ci;
    return p;
}

ordered_json table_json(const PreparedAnalysis& p, const AnalysisResult& res) {
    ordered_json j;
    j["n"] = res.background.n;
    j["family"] = family_name(p.spec.family);
    j["rank_by"] = score_variant_name(res.table.rank_by);
    j["quantile_q"] = res.table.quantile_q;
    j["ci_level"] = p.opt.ci_level;
    j["tau0_hat"] = res.background.tau0_hat;
    j["omega_hat"] = std::vector<double>(res.background.omega_hat.begin(),
                                         res.background.omega_hat.end());
    j["open_columns"] = p.ds.z_names;
    ordered_json rows = ordered_json::array();
    std::size_t ci = 0;
    for (const auto& r : res.table.records) {
        ordered_json row;
        row["in_out"] = r.S.label();
        row["estimate"] = r.mu_hat;
        row["stdev"] = r.stdev;
        row["bias"] = r.bias;
        row["root_fic"] = ranking_score(r, res.table.rank_by);
        row["rank"] = r.rank;
        row["fic_u"] = r.fic_u;
        row["fic_t"] = r.fic_t;
        row["quantile_fic"] = r.quantile_fic;
        row["r_s"] = r.r_S;
        row["cd_pointmass"] = res.cds[ci].pointmass();
        row["rmse_ci"] = {res.intervals[ci].first, res.intervals[ci].second};
        ++ci;
        rows.push_back(row);
    }
    j["models"] = rows;
    ordered_json failures = ordered_json::array();
    for (const auto& f : res.fits)
        if (!f.ok) failures.push_back({{"in_out", f.S.label()}, {"error", f.error}});
    j["fit_failures"] = failures;
    return j;
}

void write_cd_curves(const PreparedAnalysis& p, const AnalysisResult& res,
                     const std::string& prefix) {
    std::size_t ci = 0;
    for (const auto& r : res.table.records) {
        CdCurve curve = cd_curve(res.cds[ci]);
        std::string out = "# model=" + r.S.label() + "\n";
        out += "# pointmass=" + fmt(curve.pointmass) + "\n";
        out += "# min_rho=" + fmt(curve.min_rho) + "\n";
        out += "rmse,confidence\n";
        for (std::size_t i = 0; i < curve.rho.size(); ++i)
            out += fmt(curve.rho[i]) + "," + fmt(curve.confidence[i]) + "\n";
        write_text_file(prefix + "_cd_" + r.S.label() + ".csv", out);
        ++ci;
    }
}

void print_fit_failures(const AnalysisResult& res) {
    for (const auto& f : res.fits)
        if (!f.ok)
            std::cerr << "warning: model " << f.S.label() << " failed to fit: " << f.error
                      << "\n";
}

// ------------------------------------------------------------- commands

int cmd_fic(AnalysisArgs& a) {
    PreparedAnalysis p = prepare(a);
    AnalysisResult res = fic_analysis(p.ds.data, p.focus, p.masks, p.opt);
    print_fit_failures(res);

    write_text_file(a.out_prefix + "_table.csv", fic_table_csv(res.table));
    write_text_file(a.out_prefix + "_table.json", table_json(p, res).dump(2) + "\n");
    write_cd_curves(p, res, a.out_prefix);

    // FIC plot: x = root score with CD interval, y = estimate with a normal
    // approximation interval from the stdev column
    double zq = normal_quantile(0.5 + p.opt.ci_level / 2.0);
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    std::vector<double> xs;
    std::size_t ci = 0;
    for (const auto& r : res.table.records) {
        double x = ranking_score(r, res.table.rank_by);
        auto [ilo, ihi] = res.intervals[ci++];
        double elo = r.mu_hat - zq * r.stdev, ehi = r.mu_hat + zq * r.stdev;
        xs.push_back(x);
        x_lo = std::min(x_lo, ilo);
        x_hi = std::max(x_hi, ihi);
        y_lo = std::min(y_lo, elo);
        y_hi = std::max(y_hi, ehi);
    }
    double xpad = 0.05 * (x_hi - x_lo + 1e-12), ypad = 0.05 * (y_hi - y_lo + 1e-12);
    SvgPlot plot(std::max(0.0, x_lo - xpad), x_hi + xpad, y_lo - ypad, y_hi + ypad);
    plot.title("FIC plot (" + std::string(score_variant_name(res.table.rank_by)) + " score)");
    plot.labels("root-FIC", "focus estimate");
    ci = 0;
    for (const auto& r : res.table.records) {
        auto [ilo, ihi] = res.intervals[ci];
        plot.hwhisker(ilo, ihi, r.mu_hat);
        plot.vwhisker(xs[ci], r.mu_hat - zq * r.stdev, r.mu_hat + zq * r.stdev);
        plot.point(xs[ci], r.mu_hat, r.rank == 1 ? "#c43d3d" : "#1f6fb2");
        plot.text(xs[ci], r.mu_hat, " " + r.S.label());
        ++ci;
    }
    write_text_file(a.out_prefix + "_plot.svg", plot.render());

    std::cout << fic_table_csv(res.table);
    for (const auto& r : res.table.records)
        if (r.rank == 1)
            std::cout << "# best: model " << r.S.label() << ", estimate "
                      << fmt(r.mu_hat) << "\n";
    return 0;
}

int cmd_cd(AnalysisArgs& a, std::vector<std::string>& diffs, double diff_level,
           std::size_t diff_samples, std::uint64_t seed) {
    PreparedAnalysis p = prepare(a);
    AnalysisResult res = fic_analysis(p.ds.data, p.focus, p.masks, p.opt);
    print_fit_failures(res);
    write_cd_curves(p, res, a.out_prefix);

    ordered_json j;
    j["n"] = res.background.n;
    j["ci_level"] = p.opt.ci_level;
    ordered_json rows = ordered_json::array();
    double rho_hi = 0.0;
    std::size_t ci = 0;
    for (const auto& r : res.table.records) {
        const RmseCD& cd = res.cds[ci];
        ordered_json row;
        row["in_out"] = r.S.label();
        row["tauS2"] = cd.tauS2;
        row["sigmaS2"] = cd.sigmaS2;
        row["b_obs"] = cd.b_obs;
        row["pointmass"] = cd.pointmass();
        row["median_fic"] = median_fic_rho(cd);
        row["quantile_fic"] = r.quantile_fic;
        row["rmse_ci"] = {res.intervals[ci].first, res.intervals[ci].second};
        rows.push_back(row);
        rho_hi = std::max(rho_hi, cd_quantile_rho(cd, 0.999));
        ++ci;
    }
    j["models"] = rows;

    // mse-difference intervals between named model pairs
    ordered_json dj = ordered_json::array();
    for (const auto& s : diffs) {
        auto colon = s.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("--diff expects labelS:labelT, got '" + s + "'");
        SubmodelMask S = parse_mask(detail::trim(s.substr(0, colon)), p.ds.data.q());
        SubmodelMask T = parse_mask(detail::trim(s.substr(colon + 1)), p.ds.data.q());
        auto [lo, hi] = mse_diff_interval(res.exp, S, T, diff_level, diff_samples, seed);
        dj.push_back({{"pair", s},
                      {"level", diff_level},
                      {"mse_diff_low", lo},
                      {"mse_diff_high", hi}});
    }
    if (!diffs.empty()) j["mse_differences"] = dj;
    write_text_file(a.out_prefix + "_cd.json", j.dump(2) + "\n");

    // overlay plot of all CD curves
    SvgPlot plot(0.0, rho_hi * 1.05 + 1e-12, 0.0, 1.02);
    plot.title("confidence distributions for rmse");
    plot.labels("rmse", "confidence");
    const char* palette[] = {"#1f6fb2", "#c43d3d", "#3d9970", "#b8860b",
                             "#7851a9", "#444444", "#e377c2", "#17becf"};
    std::vector<std::pair<std::string, std::string>> entries;
    ci = 0;
    for (const auto& r : res.table.records) {
        CdCurve curve = cd_curve(res.cds[ci]);
        std::string color = palette[ci % 8];
        plot.polyline(std::vector<double>(curve.rho.begin(), curve.rho.end()),
                      std::vector<double>(curve.confidence.begin(), curve.confidence.end()),
                      color);
        if (entries.size() < 8) entries.push_back({r.S.label(), color});
        ++ci;
    }
    plot.legend(entries);
    write_text_file(a.out_prefix + "_cd_plot.svg", plot.render());

    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_average(AnalysisArgs& a, const std::string& scheme_name, double lambda,
                const std::string& weights_csv, double screen_rho, double screen_conf) {
    PreparedAnalysis p = prepare(a);
    AnalysisResult res = fic_analysis(p.ds.data, p.focus, p.masks, p.opt);
    print_fit_failures(res);

    // weights are computed over the models that actually fit
    std::vector<SubmodelMask> fitted;
    Vec estimates(res.table.records.size());
    std::size_t k = 0;
    for (const auto& r : res.table.records) {
        fitted.push_back(r.S);
        estimates[k++] = r.mu_hat;
    }
    AveragingContext ctx = make_averaging_context(res.exp, fitted);

    WeightScheme scheme;
    if (scheme_name == "exp") scheme = WeightScheme::exp_fixed(lambda);
    else if (scheme_name == "exp-cd") scheme = WeightScheme::exp_cd();
    else if (scheme_name == "post") scheme = WeightScheme::post(p.opt.rank_by, p.opt.quantile_q);
    else if (scheme_name == "aic") scheme = WeightScheme::aic();
    else if (scheme_name == "wide") scheme = WeightScheme::wide();
    else if (scheme_name == "custom")
        scheme = WeightScheme::custom(parse_vec(weights_csv, "--weights"));
    else if (scheme_name != "screen")
        throw std::invalid_argument("unknown scheme '" + scheme_name + "'");

    Vec w;
    if (scheme_name == "screen") {
        if (screen_rho <= 0.0)
            throw std::invalid_argument("--screen-rho must be positive for the screen scheme");
        w = threshold_screened_weights(ctx, *res.exp.D, screen_rho, screen_conf, lambda);
    } else {
        w = model_weights(ctx, *res.exp.D, scheme);
    }
    double mu_star = averaged_estimate(w, estimates);

    ordered_json j;
    j["scheme"] = scheme_name;
    if (scheme_name == "exp" || scheme_name == "screen") j["lambda"] = lambda;
    if (scheme_name == "screen") {
        j["screen_rho"] = screen_rho;
        j["screen_confidence"] = screen_conf;
    }
    if (scheme_name == "post") j["score"] = score_variant_name(p.opt.rank_by);
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < fitted.size(); ++i)
        rows.push_back({{"in_out", fitted[i].label()},
                        {"weight", w[i]},
                        {"estimate", estimates[i]}});
    j["models"] = rows;
    j["estimate"] = mu_star;
    write_text_file(a.out_prefix + "_average.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

// --------------------------------------------------------------- simulate

struct CurveFiles {
    std::string prefix, name;
    void write(const RiskCurve& curve, const ordered_json& meta, const char* xname,
               const Vec* analytic = nullptr) const {
        std::string csv = xname + std::string(",scheme,risk,mc_se");
        if (analytic) csv += ",analytic";
        csv += "\n";
        for (int i = 0; i < curve.grid.size(); ++i) {
            csv += fmt(curve.grid[i]) + "," + curve.scheme + "," + fmt(curve.value[i]) + "," +
                   fmt(curve.mc_se[i]);
            if (analytic) csv += "," + fmt((*analytic)[i]);
            csv += "\n";
        }
        write_text_file(prefix + "_" + name + ".csv", csv);
        write_text_file(prefix + "_" + name + ".json", meta.dump(2) + "\n");

        SvgPlot plot(curve.grid.minCoeff(), curve.grid.maxCoeff(), 0.0,
                     curve.value.maxCoeff() * 1.1 + 1e-12);
        plot.title(name + " (" + curve.scheme + ")");
        plot.labels(xname, "risk");
        plot.polyline(std::vector<double>(curve.grid.begin(), curve.grid.end()),
                      std::vector<double>(curve.value.begin(), curve.value.end()));
        write_text_file(prefix + "_" + name + ".svg", plot.render());
    }
};

int cmd_sim_phi_risk(const std::string& scheme_s, double quantile_q, const std::string& grid_s,
                     std::size_t draws, std::uint64_t seed, const std::string& prefix) {
    ScoreVariant v = parse_variant(scheme_s);
    Vec grid = parse_grid(grid_s, "--grid");
    RiskCurve curve = phi_risk(v, grid, draws, seed, quantile_q);
    ordered_json meta;
    meta["scheme"] = curve.scheme;
    meta["draws"] = draws;
    meta["seed"] = seed;
    Vec analytic;
    const Vec* ap = nullptr;
    if (v == ScoreVariant::fic_u) {
        analytic = 2.0 + 4.0 * grid.array();
        ap = &analytic;
        double worst = 0.0;
        for (int i = 0; i < grid.size(); ++i)
            worst = std::max(worst, std::fabs(curve.value[i] - analytic[i]) /
                                        std::max(curve.mc_se[i], 1e-12));
        meta["max_sigma_from_analytic"] = worst;
    }
    CurveFiles{prefix, "phi_risk"}.write(curve, meta, "phi", ap);
    std::cout << "phi-risk written, scheme " << curve.scheme << "\n";
    return 0;
}

int cmd_sim_narrow_wide(const std::string& scheme_s, double quantile_q, double t0_flag,
                        const std::string& grid_s, std::size_t draws, std::uint64_t seed,
                        const std::string& prefix) {
    double t0;
    std::string label;
    if (t0_flag >= 0.0) {
        t0 = t0_flag;
        label = "t0=" + fmt(t0);
    } else if (scheme_s == "wide") {
        t0 = 0.0;
        label = "wide";
    } else {
        ScoreVariant v = parse_variant(scheme_s);
        t0 = narrow_wide_cutoff(v, quantile_q);
        label = score_variant_name(v);
    }
    Vec grid = parse_grid(grid_s, "--grid");
    RiskCurve curve = narrow_wide_risk(t0, grid, draws, seed, label);
    ordered_json meta;
    meta["scheme"] = label;
    meta["cutoff"] = t0;
    meta["draws"] = draws;
    meta["seed"] = seed;
    CurveFiles{prefix, "narrow_wide"}.write(curve, meta, "eta");
    std::cout << "narrow-wide written, cutoff " << fmt(t0) << "\n";
    return 0;
}

int cmd_sim_q2_map(const std::string& omega_s, const std::string& kappa_s,
                   const std::string& grid_s, const std::string& schemes_s, double quantile_q,
                   std::size_t draws, std::uint64_t seed, const std::string& prefix) {
    Vec omega = parse_vec(omega_s, "--omega");
    Vec kappa = parse_vec(kappa_s, "--kappa");
    Vec grid = parse_grid(grid_s, "--grid");
    std::vector<WeightScheme> schemes;
    int median_idx = -1;
    for (const auto& name : split_list(schemes_s)) {
        ScoreVariant v = parse_variant(name);
        if (v == ScoreVariant::median) median_idx = static_cast<int>(schemes.size());
        schemes.push_back(WeightScheme::post(v, quantile_q));
    }
    if (schemes.empty()) throw std::invalid_argument("--schemes parsed to an empty list");

    RiskMap map = q2_riskmap(omega, kappa, grid, grid, schemes, draws, seed);

    std::string csv = "delta1,delta2,scheme,risk,mc_se\n";
    for (int a = 0; a < grid.size(); ++a)
        for (int b = 0; b < grid.size(); ++b)
            for (std::size_t k = 0; k < schemes.size(); ++k)
                csv += fmt(grid[a]) + "," + fmt(grid[b]) + "," + map.schemes[k] + "," +
                       fmt(map.risk[k](a, b)) + "," + fmt(map.mc_se[k](a, b)) + "\n";
    write_text_file(prefix + "_q2_risk.csv", csv);

    std::string wcsv = "delta1,delta2,winner\n";
    for (int a = 0; a < grid.size(); ++a)
        for (int b = 0; b < grid.size(); ++b)
            wcsv += fmt(grid[a]) + "," + fmt(grid[b]) + "," + map.schemes[map.winner(a, b)] + "\n";
    write_text_file(prefix + "_q2_winner.csv", wcsv);

    ordered_json meta;
    meta["schemes"] = map.schemes;
    meta["draws"] = draws;
    meta["seed"] = seed;
    if (median_idx >= 0 && schemes.size() > 1) {
        Mat ratio = riskmap_ratio(map, median_idx);
        std::string rcsv = "delta1,delta2,ratio\n";
        for (int a = 0; a < grid.size(); ++a)
            for (int b = 0; b < grid.size(); ++b)
                rcsv += fmt(grid[a]) + "," + fmt(grid[b]) + "," + fmt(ratio(a, b)) + "\n";
        write_text_file(prefix + "_q2_ratio.csv", rcsv);
        meta["ratio_reference"] = map.schemes[median_idx];
    }
    write_text_file(prefix + "_q2_map.json", meta.dump(2) + "\n");

    // winner heatmap
    double step = grid.size() > 1 ? grid[1] - grid[0] : 1.0;
    SvgPlot plot(grid.minCoeff() - step / 2, grid.maxCoeff() + step / 2, grid.minCoeff() - step / 2,
                 grid.maxCoeff() + step / 2, 560, 560);
    plot.title("winning scheme by true (delta1, delta2)");
    plot.labels("delta1", "delta2");
    const char* palette[] = {"#c43d3d", "#1f6fb2", "#3d9970", "#b8860b", "#7851a9", "#444444"};
    for (int a = 0; a < grid.size(); ++a)
        for (int b = 0; b < grid.size(); ++b)
            plot.cell(grid[a], grid[b], step, step, palette[map.winner(a, b) % 6]);
    std::vector<std::pair<std::string, std::string>> entries;
    for (std::size_t k = 0; k < map.schemes.size(); ++k)
        entries.push_back({map.schemes[k], palette[k % 6]});
    plot.legend(entries);
    write_text_file(prefix + "_q2_winner.svg", plot.render());

    std::cout << "q2-map written, " << map.schemes.size() << " schemes on a " << grid.size()
              << "x" << grid.size() << " grid\n";
    return 0;
}

int cmd_sim_harness(int rounds, int n, double sigma, const std::string& gamma_s,
                    const std::string& corr_s, const std::string& z0_s, double x0, double ci,
                    const std::string& rank_by, double quantile_q, std::uint64_t seed,
                    const std::string& prefix) {
    HarnessConfig cfg = HarnessConfig::benchmark_defaults();
    cfg.rounds = rounds;
    cfg.n = n;
    cfg.sigma = sigma;
    if (!gamma_s.empty()) cfg.gamma = parse_vec(gamma_s, "--gamma");
    if (!z0_s.empty()) cfg.z0 = parse_vec(z0_s, "--z0");
    const int q = static_cast<int>(cfg.gamma.size());
    if (!corr_s.empty()) {
        Vec c = parse_vec(corr_s, "--corr");
        if (c.size() != q * q)
            throw std::invalid_argument("--corr needs q*q row-major entries");
        cfg.corr = Eigen::Map<Mat>(c.data(), q, q).transpose();
    } else if (q != 3) {
        throw std::invalid_argument("--corr is required when --gamma is not length 3");
    }
    cfg.x0 = x0;
    cfg.ci_level = ci;
    cfg.rank_by = parse_variant(rank_by);
    cfg.quantile_q = quantile_q;

    HarnessResult res = finite_sample_harness(cfg, seed);

    std::string csv = "model,in_out,coverage_pct,winner_pct,avg_root_fic,avg_true_rmse\n";
    for (std::size_t k = 0; k < res.masks.size(); ++k)
        csv += std::to_string(k + 1) + "," + res.masks[k].label() + "," +
               fmt(res.coverage_pct[k]) + "," + fmt(res.winner_pct[k]) + "," +
               fmt(res.avg_root_fic[k]) + "," + fmt(res.avg_true_rmse[k]) + "\n";
    write_text_file(prefix + "_harness.csv", csv);

    ordered_json j;
    j["rounds"] = rounds;
    j["n"] = n;
    j["sigma"] = sigma;
    j["ci_level"] = ci;
    j["rank_by"] = rank_by;
    j["seed"] = seed;
    j["discarded_rounds"] = res.discarded_rounds;
    j["fic_rmse_correlation"] = res.fic_rmse_correlation;
    ordered_json rows = ordered_json::array();
    for (std::size_t k = 0; k < res.masks.size(); ++k)
        rows.push_back({{"in_out", res.masks[k].label()},
                        {"coverage_pct", res.coverage_pct[k]},
                        {"winner_pct", res.winner_pct[k]},
                        {"avg_root_fic", res.avg_root_fic[k]},
                        {"avg_true_rmse", res.avg_true_rmse[k]}});
    j["models"] = rows;
    write_text_file(prefix + "_harness.json", j.dump(2) + "\n");
    std::cout << csv;
    return 0;
}

int cmd_sim_limit_density(double tau0, const std::string& omega_s, const std::string& Q_s,
                          const std::string& delta_s, const std::string& scheme_s, double lambda,
                          const std::string& score_s, double quantile_q, std::size_t draws,
                          std::uint64_t seed, bool emit_draws, const std::string& prefix) {
    Vec omega = parse_vec(omega_s, "--omega");
    const int q = static_cast<int>(omega.size());
    Mat Q = Mat::Identity(q, q);
    if (!Q_s.empty()) {
        Vec c = parse_vec(Q_s, "--Q");
        if (c.size() != q * q) throw std::invalid_argument("--Q needs q*q row-major entries");
        Q = Eigen::Map<Mat>(c.data(), q, q).transpose();
    }
    Vec delta = parse_vec(delta_s, "--delta");
    if (delta.size() != q) throw std::invalid_argument("--delta length must match --omega");

    LimitExperiment exp(tau0, omega, Q);
    AveragingContext ctx = make_averaging_context(exp, all_masks(q));

    WeightScheme scheme;
    if (scheme_s == "wide") scheme = WeightScheme::wide();
    else if (scheme_s == "aic") scheme = WeightScheme::aic();
    else if (scheme_s == "exp") scheme = WeightScheme::exp_fixed(lambda);
    else if (scheme_s == "exp-cd") scheme = WeightScheme::exp_cd();
    else if (scheme_s == "post") scheme = WeightScheme::post(parse_variant(score_s), quantile_q);
    else throw std::invalid_argument("unknown scheme '" + scheme_s + "'");

    LimitSample sample = limit_distribution_sample(ctx, delta, scheme, draws, seed);

    std::vector<double> sorted = sample.draws;
    std::sort(sorted.begin(), sorted.end());
    auto quant = [&](double p) {
        double idx = p * (double(sorted.size()) - 1.0);
        std::size_t lo = static_cast<std::size_t>(idx);
        std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (idx - double(lo)) * (sorted[hi] - sorted[lo]);
    };
    ordered_json j;
    j["scheme"] = scheme_s;
    if (scheme_s == "exp") j["lambda"] = lambda;
    if (scheme_s == "post") j["score"] = score_s;
    j["n_draws"] = draws;
    j["seed"] = seed;
    j["mean"] = sample.mean;
    j["rmse"] = sample.rmse;
    j["rmse_mc_se"] = sample.rmse_se;
    j["quantiles"] = {{"0.05", quant(0.05)},
                      {"0.25", quant(0.25)},
                      {"0.5", quant(0.5)},
                      {"0.75", quant(0.75)},
                      {"0.95", quant(0.95)}};
    write_text_file(prefix + "_limit_density.json", j.dump(2) + "\n");

    if (emit_draws) {
        std::string csv = "draw\n";
        for (double v : sample.draws) csv += fmt(v) + "\n";
        write_text_file(prefix + "_draws.csv", csv);
    }
    std::cout << "limit-density: scheme " << scheme_s << ", rmse " << fmt(sample.rmse) << " (se "
              << fmt(sample.rmse_se) << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"focused model selection with confidence distributions"};
    app.require_subcommand(1);

    AnalysisArgs fic_args, cd_args, avg_args;

    CLI::App* fic = app.add_subcommand("fic", "FIC table, CD curves and FIC plot");
    fic_args.add_flags(fic);

    CLI::App* cd = app.add_subcommand("cd", "confidence distribution curves and summaries");
    cd_args.add_flags(cd);
    std::vector<std::string> cd_diffs;
    double cd_diff_level = 0.9;
    std::size_t cd_diff_samples = 20000;
    std::uint64_t cd_seed = 0;
    cd->add_option("--diff", cd_diffs, "mse-difference interval for a model pair, labelS:labelT");
    cd->add_option("--diff-level", cd_diff_level, "confidence level for --diff");
    cd->add_option("--diff-samples", cd_diff_samples, "ellipsoid samples for --diff");
    cd->add_option("--seed", cd_seed, "RNG seed for --diff sampling");

    CLI::App* avg = app.add_subcommand("average", "model-averaged focus estimate");
    avg_args.add_flags(avg);
    std::string avg_scheme = "exp";
    double avg_lambda = 1.0;
    std::string avg_weights;
    double screen_rho = 0.0, screen_conf = 0.5;
    avg->add_option("--scheme", avg_scheme, "exp | exp-cd | post | aic | wide | custom | screen");
    avg->add_option("--lambda", avg_lambda, "lambda for exp and screen schemes");
    avg->add_option("--weights", avg_weights, "comma list for the custom scheme");
    avg->add_option("--screen-rho", screen_rho, "rmse threshold for the screen scheme");
    avg->add_option("--screen-conf", screen_conf, "required confidence at the threshold");

    CLI::App* sim = app.add_subcommand("simulate", "risk and limit-distribution studies");
    sim->require_subcommand(1);

    // shared simulate flags, registered per subcommand
    std::string s_scheme = "u", s_prefix = "ficlab";
    double s_quantile = 0.5;
    std::size_t s_draws = 200000;
    std::uint64_t s_seed = 0;

    auto add_seed = [&](CLI::App* c) {
        c->add_option("--seed", s_seed, "RNG seed (required)")->required();
        c->add_option("--out-prefix", s_prefix, "output path prefix");
        c->add_option("--draws", s_draws, "Monte Carlo draws");
    };

    CLI::App* phi = sim->add_subcommand("phi-risk", "risk of squared-bias estimators");
    phi->add_option("--scheme", s_scheme, "u | t | median | quantile");
    phi->add_option("--quantile", s_quantile, "q for the quantile scheme");
    std::string phi_grid = "0:16:33";
    phi->add_option("--grid", phi_grid, "phi grid lo:hi:count");
    add_seed(phi);

    CLI::App* nw = sim->add_subcommand("narrow-wide", "threshold estimator risk curve");
    std::string nw_scheme = "median", nw_grid = "-5:5:101";
    double nw_t0 = -1.0, nw_quantile = 0.5;
    nw->add_option("--scheme", nw_scheme, "u | t | median | quantile | wide");
    nw->add_option("--quantile", nw_quantile, "q for the quantile scheme");
    nw->add_option("--t0", nw_t0, "explicit cutoff (overrides --scheme)");
    nw->add_option("--grid", nw_grid, "eta grid lo:hi:count");
    add_seed(nw);

    CLI::App* q2 = sim->add_subcommand("q2-map", "two-parameter winner and ratio maps");
    std::string q2_omega = "1,1", q2_kappa = "1,1", q2_grid = "-6:6:61",
                q2_schemes = "u,t,median";
    double q2_quantile = 0.25;
    q2->add_option("--omega", q2_omega, "focus gradient, two entries");
    q2->add_option("--kappa", q2_kappa, "sqrt of the diagonal of Q, two entries");
    q2->add_option("--grid", q2_grid, "delta grid lo:hi:count (both axes)");
    q2->add_option("--schemes", q2_schemes, "comma list of u,t,median,quantile");
    q2->add_option("--quantile", q2_quantile, "q for the quantile scheme");
    add_seed(q2);

    CLI::App* ha = sim->add_subcommand("harness", "finite-sample linear-model study");
    int ha_rounds = 1000, ha_n = 100;
    double ha_sigma = 2.0, ha_x0 = 0.0, ha_ci = 0.8, ha_quantile = 0.5;
    std::string ha_gamma, ha_corr, ha_z0, ha_rank = "median";
    ha->add_option("--rounds", ha_rounds, "simulation rounds");
    ha->add_option("--n", ha_n, "observations per round");
    ha->add_option("--sigma", ha_sigma, "noise standard deviation");
    ha->add_option("--gamma", ha_gamma, "true open coefficients (comma list)");
    ha->add_option("--corr", ha_corr, "covariate correlation matrix, row-major");
    ha->add_option("--z0", ha_z0, "focus loadings on the open covariates");
    ha->add_option("--x0", ha_x0, "focus loading on the intercept");
    ha->add_option("--ci", ha_ci, "interval level");
    ha->add_option("--rank-by", ha_rank, "t | u | median | quantile");
    ha->add_option("--quantile", ha_quantile, "q for the quantile score");
    add_seed(ha);

    CLI::App* ld = sim->add_subcommand("limit-density", "limit law of an averaging scheme");
    double ld_tau0 = 0.0, ld_lambda = 1.0, ld_quantile = 0.5;
    std::string ld_omega = "1", ld_Q, ld_delta = "0", ld_scheme = "wide", ld_score = "median";
    bool ld_emit = false;
    ld->add_option("--tau0", ld_tau0, "tau0 of the limit experiment");
    ld->add_option("--omega", ld_omega, "omega (comma list)");
    ld->add_option("--Q", ld_Q, "Q row-major (default identity)");
    ld->add_option("--delta", ld_delta, "true delta (comma list)");
    ld->add_option("--scheme", ld_scheme, "wide | post | aic | exp | exp-cd");
    ld->add_option("--score", ld_score, "selection score for post (t,u,median,quantile)");
    ld->add_option("--quantile", ld_quantile, "q for the quantile score");
    ld->add_option("--lambda", ld_lambda, "lambda for exp");
    ld->add_flag("--emit-draws", ld_emit, "also write the raw draws as CSV");
    add_seed(ld);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fic->parsed()) return cmd_fic(fic_args);
        if (cd->parsed())
            return cmd_cd(cd_args, cd_diffs, cd_diff_level, cd_diff_samples, cd_seed);
        if (avg->parsed())
            return cmd_average(avg_args, avg_scheme, avg_lambda, avg_weights, screen_rho,
                               screen_conf);
        if (phi->parsed())
            return cmd_sim_phi_risk(s_scheme, s_quantile, phi_grid, s_draws, s_seed, s_prefix);
        if (nw->parsed())
            return cmd_sim_narrow_wide(nw_scheme, nw_quantile, nw_t0, nw_grid, s_draws, s_seed,
                                       s_prefix);
        if (q2->parsed())
            return cmd_sim_q2_map(q2_omega, q2_kappa, q2_grid, q2_schemes, q2_quantile, s_draws,
                                  s_seed, s_prefix);
        if (ha->parsed())
            return cmd_sim_harness(ha_rounds, ha_n, ha_sigma, ha_gamma, ha_corr, ha_z0, ha_x0,
                                   ha_ci, ha_rank, ha_quantile, s_seed, s_prefix);
        if (ld->parsed())
            return cmd_sim_limit_density(ld_tau0, ld_omega, ld_Q, ld_delta, ld_scheme, ld_lambda,
                                         ld_score, ld_quantile, s_draws, s_seed, ld_emit,
                                         s_prefix);
    } catch (const FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
