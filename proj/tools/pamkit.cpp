// Command-line front end: parses flags, merges them over an optional JSON
// config file (defaults < config < flags), runs the experiment, writes the
// envelope and plot files. Exit codes: 0 success, 2 config error,
// 3 numerical failure, 4 heavy-tail abort.

#include "pamkit/cli_core.hpp"
#include "pamkit/errors.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using pamkit::cli::json;

std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (...) {
            used = 0;
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used])))
            ++used;
        if (item.empty() || used != item.size())
            throw std::invalid_argument("config: cannot parse " + what + " entry '" +
                                        item + "'");
        out.push_back(v);
    }
    if (out.empty())
        throw std::invalid_argument("config: " + what + " must list at least one number");
    return out;
}

struct CommonFlags {
    std::string config;
    std::string out;
    std::string csv;
    std::optional<std::uint64_t> seed;
    std::optional<int> shards;
};

struct NoiseFlags {
    std::optional<int> ell;
    std::optional<double> alpha0;
    std::string family;
    std::optional<double> alpha;
    std::optional<double> hurst;
    std::optional<double> level;
};

void add_common(CLI::App* sub, CommonFlags& c) {
    sub->add_option("--config", c.config, "JSON run configuration file");
    sub->add_option("--out", c.out, "result envelope path (default: stdout)");
    sub->add_option("--csv", c.csv, "prefix for CSV plot files");
    sub->add_option("--seed", c.seed, "master seed (single reproducibility knob)");
    sub->add_option("--shards", c.shards, "Monte Carlo shard count");
}

void add_noise(CLI::App* sub, NoiseFlags& nf) {
    sub->add_option("--ell", nf.ell, "space dimension (1..3)");
    sub->add_option("--alpha0", nf.alpha0, "temporal exponent of |s-r|^(-alpha0)");
    sub->add_option("--family", nf.family,
                    "noise family: riesz | rough_fractional | white_1d | constant");
    sub->add_option("--alpha", nf.alpha, "riesz kernel exponent");
    sub->add_option("--hurst", nf.hurst, "rough_fractional Hurst index");
    sub->add_option("--level", nf.level, "constant family level");
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    return json::parse(in);
}

void apply_common(json& raw, const CommonFlags& c) {
    if (c.seed) raw["seed"] = *c.seed;
    if (c.shards) raw["shards"] = *c.shards;
    if (!c.out.empty()) raw["out"] = c.out;
    if (!c.csv.empty()) raw["csv_prefix"] = c.csv;
}

void apply_noise(json& raw, const NoiseFlags& nf) {
    if (nf.ell) raw["noise"]["ell"] = *nf.ell;
    if (nf.alpha0) raw["noise"]["alpha0"] = *nf.alpha0;
    if (!nf.family.empty()) raw["noise"]["family"]["name"] = nf.family;
    if (nf.alpha) raw["noise"]["family"]["alpha"] = *nf.alpha;
    if (nf.hurst) raw["noise"]["family"]["hurst"] = *nf.hurst;
    if (nf.level) raw["noise"]["family"]["level"] = *nf.level;
}

int emit_error(const char* kind, const std::exception& e) {
    json err;
    err["error"] = kind;
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 0; // caller supplies the exit code
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pamkit: moment experiments for the parabolic Anderson model "
                 "with space-time correlated noise"};
    app.require_subcommand(1);

    // moment ---------------------------------------------------------
    auto* sub_moment = app.add_subcommand("moment", "Feynman-Kac moment estimate");
    CommonFlags mo_c;
    add_common(sub_moment, mo_c);
    std::optional<int> mo_n, mo_grid;
    std::optional<double> mo_t;
    std::optional<std::uint64_t> mo_samples;
    std::string mo_ladder, mo_formula, mo_dump;
    sub_moment->add_option("--n", mo_n, "moment order");
    sub_moment->add_option("--t", mo_t, "time horizon");
    sub_moment->add_option("--samples", mo_samples, "Monte Carlo samples");
    sub_moment->add_option("--grid-m", mo_grid, "time cells per path");
    sub_moment->add_option("--eps-ladder", mo_ladder, "mollification rungs, e.g. 0.4,0.2,0.1");
    sub_moment->add_option("--formula", mo_formula, "bridge | bm");
    sub_moment->add_option("--dump-paths", mo_dump, "binary dump of sampled paths");

    // chaos ----------------------------------------------------------
    auto* sub_chaos = app.add_subcommand("chaos", "second-moment chaos partial sums");
    CommonFlags ch_c;
    add_common(sub_chaos, ch_c);
    std::optional<int> ch_n, ch_grid;
    std::optional<double> ch_t, ch_eps;
    std::optional<std::uint64_t> ch_samples;
    std::string ch_x;
    sub_chaos->add_option("--N", ch_n, "highest chaos order");
    sub_chaos->add_option("--t", ch_t, "time horizon");
    sub_chaos->add_option("--x", ch_x, "evaluation point, e.g. 0.5 or 0.5,0.25");
    sub_chaos->add_option("--eps", ch_eps, "spectral mollification");
    sub_chaos->add_option("--samples", ch_samples, "Monte Carlo samples per term");
    sub_chaos->add_option("--grid-m", ch_grid, "time cells behind the weight sampler");

    // variational ----------------------------------------------------
    auto* sub_var = app.add_subcommand("variational", "energy maximization");
    CommonFlags va_c;
    NoiseFlags va_n;
    add_common(sub_var, va_c);
    add_noise(sub_var, va_n);
    std::optional<int> va_slices, va_mx, va_starts;
    std::optional<double> va_eps, va_box;
    sub_var->add_option("--eps", va_eps, "spectral damping of the interaction");
    sub_var->add_option("--slices", va_slices, "time slices of the profile");
    sub_var->add_option("--box-L", va_box, "spatial half-width");
    sub_var->add_option("--mx", va_mx, "spatial grid points");
    sub_var->add_option("--starts", va_starts, "random multistarts (plus one flat)");

    // lyapunov -------------------------------------------------------
    auto* sub_lya = app.add_subcommand("lyapunov", "t^a-normalized moment growth fit");
    CommonFlags ly_c;
    add_common(sub_lya, ly_c);
    std::optional<int> ly_n, ly_grid;
    std::optional<std::uint64_t> ly_samples;
    std::optional<double> ly_energy;
    std::string ly_tladder, ly_eladder;
    sub_lya->add_option("--n", ly_n, "moment order");
    sub_lya->add_option("--t-ladder", ly_tladder, "time ladder, e.g. 0.5,1,2,4");
    sub_lya->add_option("--samples", ly_samples, "Monte Carlo samples per ladder point");
    sub_lya->add_option("--grid-m", ly_grid, "time cells per path");
    sub_lya->add_option("--eps-ladder", ly_eladder, "mollification rungs");
    sub_lya->add_option("--E", ly_energy, "variational constant for the upper-bound check");

    // indices --------------------------------------------------------
    auto* sub_idx = app.add_subcommand("indices", "exponential growth-index bounds");
    CommonFlags ix_c;
    add_common(sub_idx, ix_c);
    std::optional<int> ix_n;
    std::optional<double> ix_alpha0, ix_alpha, ix_energy, ix_beta;
    bool ix_solve = false;
    sub_idx->add_option("--n", ix_n, "moment order");
    sub_idx->add_option("--alpha0", ix_alpha0, "temporal exponent");
    sub_idx->add_option("--alpha", ix_alpha, "spatial homogeneity degree");
    sub_idx->add_option("--E", ix_energy, "variational constant");
    sub_idx->add_flag("--solve-E", ix_solve, "run the variational solver for E");
    sub_idx->add_option("--beta", ix_beta, "initial-datum decay rate");

    // validate -------------------------------------------------------
    auto* sub_val = app.add_subcommand("validate", "noise condition checks");
    CommonFlags vl_c;
    NoiseFlags vl_n;
    add_common(sub_val, vl_c);
    add_noise(sub_val, vl_n);

    // selftest -------------------------------------------------------
    auto* sub_self = app.add_subcommand("selftest", "closed-form verification suite");
    CommonFlags st_c;
    add_common(sub_self, st_c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        json raw;
        std::string experiment;
        if (sub_moment->parsed()) {
            experiment = "moment";
            raw = load_config(mo_c.config);
            apply_common(raw, mo_c);
            if (mo_n) raw["moment"]["n"] = *mo_n;
            if (mo_t) raw["moment"]["t"] = *mo_t;
            if (mo_samples) raw["moment"]["samples"] = *mo_samples;
            if (mo_grid) raw["moment"]["grid_m"] = *mo_grid;
            if (!mo_ladder.empty())
                raw["moment"]["eps_ladder"] = parse_list(mo_ladder, "eps ladder");
            if (!mo_formula.empty()) raw["moment"]["formula"] = mo_formula;
            if (!mo_dump.empty()) raw["dump_paths"] = mo_dump;
        } else if (sub_chaos->parsed()) {
            experiment = "chaos";
            raw = load_config(ch_c.config);
            apply_common(raw, ch_c);
            if (ch_n) raw["chaos"]["order_cap"] = *ch_n;
            if (ch_t) raw["chaos"]["t"] = *ch_t;
            if (!ch_x.empty()) raw["chaos"]["x"] = parse_list(ch_x, "x");
            if (ch_eps) raw["chaos"]["eps"] = *ch_eps;
            if (ch_samples) raw["chaos"]["samples"] = *ch_samples;
            if (ch_grid) raw["chaos"]["grid_m"] = *ch_grid;
        } else if (sub_var->parsed()) {
            experiment = "variational";
            raw = load_config(va_c.config);
            apply_common(raw, va_c);
            apply_noise(raw, va_n);
            if (va_eps) raw["variational"]["eps"] = *va_eps;
            if (va_slices) raw["variational"]["slices"] = *va_slices;
            if (va_box) raw["variational"]["box_l"] = *va_box;
            if (va_mx) raw["variational"]["mx"] = *va_mx;
            if (va_starts) raw["variational"]["starts"] = *va_starts;
        } else if (sub_lya->parsed()) {
            experiment = "lyapunov";
            raw = load_config(ly_c.config);
            apply_common(raw, ly_c);
            if (ly_n) raw["lyapunov"]["n"] = *ly_n;
            if (!ly_tladder.empty())
                raw["lyapunov"]["t_ladder"] = parse_list(ly_tladder, "t ladder");
            if (ly_samples) raw["lyapunov"]["samples"] = *ly_samples;
            if (ly_grid) raw["lyapunov"]["grid_m"] = *ly_grid;
            if (!ly_eladder.empty())
                raw["lyapunov"]["eps_ladder"] = parse_list(ly_eladder, "eps ladder");
            if (ly_energy) raw["lyapunov"]["energy"] = *ly_energy;
        } else if (sub_idx->parsed()) {
            experiment = "indices";
            raw = load_config(ix_c.config);
            apply_common(raw, ix_c);
            if (ix_n) raw["indices"]["n"] = *ix_n;
            if (ix_alpha0) raw["indices"]["alpha0"] = *ix_alpha0;
            if (ix_alpha) raw["indices"]["alpha"] = *ix_alpha;
            if (ix_energy) raw["indices"]["energy"] = *ix_energy;
            if (ix_solve) raw["indices"]["solve_energy"] = true;
            if (ix_beta) raw["indices"]["beta"] = *ix_beta;
        } else if (sub_val->parsed()) {
            experiment = "validate";
            raw = load_config(vl_c.config);
            apply_common(raw, vl_c);
            apply_noise(raw, vl_n);
        } else {
            experiment = "selftest";
            raw = load_config(st_c.config);
            apply_common(raw, st_c);
        }
        raw["experiment"] = experiment;

        json cfg = pamkit::cli::normalize_config(raw);
        json env = pamkit::cli::run_experiment(cfg);

        std::string text = env.dump(2) + "\n";
        if (cfg.contains("out")) {
            const std::string path = cfg.at("out").get<std::string>();
            std::ofstream f(path, std::ios::trunc);
            if (!f) throw std::invalid_argument("config: cannot write '" + path + "'");
            f << text;
        } else {
            std::cout << text;
        }
        if (cfg.contains("csv_prefix")) {
            const std::string prefix = cfg.at("csv_prefix").get<std::string>();
            for (const auto& [name, body] : pamkit::cli::emit_plotdata(env)) {
                const std::string path = prefix + name + ".csv";
                std::ofstream f(path, std::ios::trunc);
                if (!f) throw std::invalid_argument("config: cannot write '" + path + "'");
                f << body;
            }
        }
        if (experiment == "selftest" &&
            !env.at("results").at("all_pass").get<bool>()) {
            json err;
            err["error"] = "numerical";
            err["message"] = "selftest found failing checks";
            std::cerr << err.dump() << "\n";
            return 3;
        }
        return 0;
    } catch (const pamkit::HeavyTailError& e) {
        emit_error("heavy_tail", e);
        return 4;
    } catch (const pamkit::NumericalError& e) {
        emit_error("numerical", e);
        return 3;
    } catch (const std::invalid_argument& e) {
        emit_error("config", e);
        return 2;
    } catch (const nlohmann::json::exception& e) {
        emit_error("config", e);
        return 2;
    } catch (const std::exception& e) {
        emit_error("internal", e);
        return 3;
    }
}
