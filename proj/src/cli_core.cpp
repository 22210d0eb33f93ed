#include "pamkit/cli_core.hpp"

#include "pamkit/asymptotics.hpp"
#include "pamkit/chaos.hpp"
#include "pamkit/covariance.hpp"
#include "pamkit/errors.hpp"
#include "pamkit/functional.hpp"
#include "pamkit/paths.hpp"
#include "pamkit/variational.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#ifndef PAMKIT_BUILD_ID
#define PAMKIT_BUILD_ID "unknown"
#endif

namespace pamkit::cli {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(where + " must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known) fail("unknown key '" + item.key() + "' in " + where);
    }
}

double get_num(const json& j, const char* key, double dflt, const std::string& where) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_number()) fail(where + "." + key + " must be a number");
    return j.at(key).get<double>();
}

double need_num(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) fail(where + " needs a '" + std::string(key) + "' value");
    if (!j.at(key).is_number()) fail(where + "." + key + " must be a number");
    return j.at(key).get<double>();
}

int get_int(const json& j, const char* key, int dflt, const std::string& where) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_number_integer()) fail(where + "." + key + " must be an integer");
    return j.at(key).get<int>();
}

std::uint64_t get_u64(const json& j, const char* key, std::uint64_t dflt,
                      const std::string& where) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
        fail(where + "." + key + " must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& j, const char* key, bool dflt, const std::string& where) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_boolean()) fail(where + "." + key + " must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& dflt,
                    const std::string& where) {
    if (!j.contains(key)) return dflt;
    if (!j.at(key).is_string()) fail(where + "." + key + " must be a string");
    return j.at(key).get<std::string>();
}

std::vector<double> num_array(const json& v, const std::string& where) {
    if (!v.is_array()) fail(where + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) fail(where + " must contain only numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

// ---------------------------------------------------------------- schema

json norm_noise(const json& noise) {
    check_keys(noise, "noise", {"ell", "alpha0", "family"});
    int ell = get_int(noise, "ell", 1, "noise");
    double alpha0 = get_num(noise, "alpha0", 0.5, "noise");
    if (!noise.contains("family")) fail("noise needs a 'family' block");
    const json& fam = noise.at("family");
    if (!fam.is_object() || !fam.contains("name") || !fam.at("name").is_string())
        fail("noise.family must be an object with a 'name'");
    std::string name = fam.at("name").get<std::string>();

    json nf;
    nf["name"] = name;
    if (name == "riesz") {
        check_keys(fam, "noise.family", {"name", "alpha"});
        nf["alpha"] = need_num(fam, "alpha", "noise.family (riesz)");
    } else if (name == "rough_fractional") {
        check_keys(fam, "noise.family", {"name", "hurst"});
        nf["hurst"] = need_num(fam, "hurst", "noise.family (rough_fractional)");
    } else if (name == "white_1d") {
        check_keys(fam, "noise.family", {"name"});
    } else if (name == "constant") {
        check_keys(fam, "noise.family", {"name", "level"});
        nf["level"] = get_num(fam, "level", 1.0, "noise.family");
    } else if (name == "custom_radial") {
        fail("custom_radial families carry a code-level density handle and "
             "cannot be configured from JSON");
    } else {
        fail("unknown noise family '" + name + "'");
    }

    json out;
    out["ell"] = ell;
    out["alpha0"] = alpha0;
    out["family"] = nf;
    return out;
}

cov::SpectralFamily family_from(const json& nf, int ell) {
    std::string name = nf.at("name").get<std::string>();
    if (name == "riesz") return cov::SpectralFamily::riesz(ell, nf.at("alpha").get<double>());
    if (name == "rough_fractional")
        return cov::SpectralFamily::rough_fractional(nf.at("hurst").get<double>());
    if (name == "white_1d") return cov::SpectralFamily::white_1d();
    return cov::SpectralFamily::constant_cov(ell, nf.at("level").get<double>());
}

cov::NoiseParams noise_from(const json& noise) {
    cov::NoiseParams np;
    np.ell = noise.at("ell").get<int>();
    np.alpha0 = noise.at("alpha0").get<double>();
    np.family = family_from(noise.at("family"), np.ell);
    cov::validate(np);
    return np;
}

json norm_u0(const json& u0) {
    std::string kind = get_str(u0, "kind", "constant", "u0");
    json out;
    out["kind"] = kind;
    if (kind == "constant") {
        check_keys(u0, "u0", {"kind"});
    } else if (kind == "ball") {
        check_keys(u0, "u0", {"kind", "radius"});
        double r = get_num(u0, "radius", 1.0, "u0");
        if (!(r > 0.0)) fail("u0.radius must be positive");
        out["radius"] = r;
    } else if (kind == "gaussian") {
        check_keys(u0, "u0", {"kind", "kappa"});
        double k = get_num(u0, "kappa", 1.0, "u0");
        if (!(k > 0.0)) fail("u0.kappa must be positive");
        out["kappa"] = k;
    } else {
        fail("unknown u0 kind '" + kind + "' (constant, ball, gaussian)");
    }
    return out;
}

fk::InitialDatum u0_from(const json& u0) {
    fk::InitialDatum d;
    std::string kind = u0.at("kind").get<std::string>();
    if (kind == "constant") {
        d.kind = fk::InitialDatum::Kind::constant_one;
    } else if (kind == "ball") {
        d.kind = fk::InitialDatum::Kind::ball_indicator;
        d.radius = u0.at("radius").get<double>();
    } else {
        d.kind = fk::InitialDatum::Kind::gaussian_decay;
        d.kappa = u0.at("kappa").get<double>();
    }
    return d;
}

json norm_points(const json& pts, int ell) {
    json out = json::array();
    if (!pts.is_array() || pts.empty()) fail("moment.points must be a nonempty array");
    auto one = [&](const json& p) {
        auto v = num_array(p, "moment.points entry");
        if (static_cast<int>(v.size()) != ell)
            fail("moment.points entries must have " + std::to_string(ell) +
                 " coordinates");
        out.push_back(json(v));
    };
    if (pts.front().is_number()) {
        one(pts);
    } else {
        for (const auto& p : pts) one(p);
    }
    return out;
}

json default_point(int ell) {
    json p = json::array();
    for (int d = 0; d < ell; ++d) p.push_back(0.0);
    json out = json::array();
    out.push_back(p);
    return out;
}

json norm_eps_ladder(const json& blk, const char* where, bool kernel_free,
                     std::initializer_list<double> dflt) {
    if (!blk.contains("eps_ladder")) {
        json out = json::array();
        if (!kernel_free)
            for (double e : dflt) out.push_back(e);
        return out;
    }
    auto v = num_array(blk.at("eps_ladder"), std::string(where) + ".eps_ladder");
    return json(v);
}

json norm_moment(const json& blk, const json& noise) {
    check_keys(blk, "moment",
               {"n", "t", "samples", "grid_m", "eps_ladder", "formula", "points", "u0",
                "extrapolate", "exact_kernel", "clip_value", "exponent_cap"});
    const int ell = noise.at("ell").get<int>();
    json out;
    out["n"] = get_int(blk, "n", 2, "moment");
    out["t"] = get_num(blk, "t", 1.0, "moment");
    out["samples"] = get_u64(blk, "samples", 10000, "moment");
    out["grid_m"] = get_int(blk, "grid_m", 64, "moment");
    std::string formula = get_str(blk, "formula", "bridge", "moment");
    if (formula != "bridge" && formula != "bm")
        fail("moment.formula must be 'bridge' or 'bm'");
    out["formula"] = formula;
    out["points"] =
        blk.contains("points") ? norm_points(blk.at("points"), ell) : default_point(ell);
    if (formula == "bm" && out["points"].size() != 1)
        fail("the motion formula evaluates one spatial point");
    if (formula == "bridge" && out["points"].size() != 1 &&
        static_cast<int>(out["points"].size()) != out["n"].get<int>())
        fail("moment.points must hold one point or exactly n points");
    out["u0"] = norm_u0(blk.contains("u0") ? blk.at("u0") : json::object());
    bool exact = get_bool(blk, "exact_kernel", false, "moment");
    bool kernel_free =
        exact || noise.at("family").at("name").get<std::string>() == "constant";
    out["eps_ladder"] = norm_eps_ladder(blk, "moment", kernel_free, {0.4, 0.2, 0.1});
    out["extrapolate"] = get_bool(blk, "extrapolate", false, "moment");
    out["exact_kernel"] = exact;
    out["clip_value"] = get_num(blk, "clip_value", 1.0e9, "moment");
    out["exponent_cap"] = get_num(blk, "exponent_cap", 700.0, "moment");
    return out;
}

json norm_chaos(const json& blk, const json& noise) {
    check_keys(blk, "chaos", {"order_cap", "t", "x", "eps", "samples", "grid_m", "u0"});
    const int ell = noise.at("ell").get<int>();
    json out;
    int cap = get_int(blk, "order_cap", 5, "chaos");
    if (cap < 0) fail("chaos.order_cap must be >= 0");
    out["order_cap"] = cap;
    out["t"] = get_num(blk, "t", 1.0, "chaos");
    if (blk.contains("x")) {
        auto v = num_array(blk.at("x"), "chaos.x");
        if (static_cast<int>(v.size()) != ell)
            fail("chaos.x must have " + std::to_string(ell) + " coordinates");
        out["x"] = json(v);
    } else {
        out["x"] = default_point(ell).front();
    }
    out["eps"] = get_num(blk, "eps", 0.5, "chaos");
    out["samples"] = get_u64(blk, "samples", 200000, "chaos");
    out["grid_m"] = get_int(blk, "grid_m", 64, "chaos");
    out["u0"] = norm_u0(blk.contains("u0") ? blk.at("u0") : json::object());
    return out;
}

json norm_variational(const json& blk) {
    check_keys(blk, "variational",
               {"eps", "slices", "box_l", "mx", "starts", "max_iters", "grad_tol",
                "step0", "guard"});
    json out;
    out["eps"] = get_num(blk, "eps", 0.0, "variational");
    out["slices"] = get_int(blk, "slices", 8, "variational");
    out["box_l"] = get_num(blk, "box_l", 8.0, "variational");
    out["mx"] = get_int(blk, "mx", 129, "variational");
    out["starts"] = get_int(blk, "starts", 4, "variational");
    out["max_iters"] = get_int(blk, "max_iters", 400, "variational");
    out["grad_tol"] = get_num(blk, "grad_tol", 1.0e-7, "variational");
    out["step0"] = get_num(blk, "step0", 0.5, "variational");
    if (blk.contains("guard")) out["guard"] = need_num(blk, "guard", "variational");
    return out;
}

json norm_lyapunov(const json& blk, const json& noise) {
    check_keys(blk, "lyapunov",
               {"n", "t_ladder", "samples", "grid_m", "eps_ladder", "energy"});
    json out;
    out["n"] = get_int(blk, "n", 2, "lyapunov");
    if (blk.contains("t_ladder")) {
        out["t_ladder"] = json(num_array(blk.at("t_ladder"), "lyapunov.t_ladder"));
    } else {
        out["t_ladder"] = json::array({0.5, 1.0, 2.0, 4.0});
    }
    out["samples"] = get_u64(blk, "samples", 20000, "lyapunov");
    out["grid_m"] = get_int(blk, "grid_m", 64, "lyapunov");
    bool kernel_free = noise.at("family").at("name").get<std::string>() == "constant";
    out["eps_ladder"] = norm_eps_ladder(blk, "lyapunov", kernel_free, {0.25});
    if (blk.contains("energy")) out["energy"] = need_num(blk, "energy", "lyapunov");
    return out;
}

json norm_indices(const json& blk, const json* noise) {
    check_keys(blk, "indices", {"n", "alpha", "alpha0", "energy", "solve_energy", "beta"});
    json out;
    out["n"] = get_int(blk, "n", 2, "indices");
    if (blk.contains("alpha")) {
        out["alpha"] = need_num(blk, "alpha", "indices");
    } else if (noise) {
        auto fam = family_from(noise->at("family"), noise->at("ell").get<int>());
        auto hom = fam.homogeneity();
        if (!hom) fail("indices: the noise family has no homogeneity degree; give 'alpha'");
        out["alpha"] = *hom;
    } else {
        fail("indices needs 'alpha' (or a noise block to take it from)");
    }
    if (blk.contains("alpha0")) {
        out["alpha0"] = need_num(blk, "alpha0", "indices");
    } else if (noise) {
        out["alpha0"] = noise->at("alpha0").get<double>();
    } else {
        fail("indices needs 'alpha0' (or a noise block to take it from)");
    }
    bool solve = get_bool(blk, "solve_energy", false, "indices");
    if (blk.contains("energy") && solve)
        fail("indices: give 'energy' or 'solve_energy', not both");
    if (!blk.contains("energy") && !solve)
        fail("indices needs 'energy' or 'solve_energy': true");
    if (solve && !noise) fail("indices with solve_energy needs a noise block");
    out["solve_energy"] = solve;
    if (blk.contains("energy")) out["energy"] = need_num(blk, "energy", "indices");
    if (blk.contains("beta")) out["beta"] = need_num(blk, "beta", "indices");
    return out;
}

// --------------------------------------------------------------- format

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json ladder_json(const std::vector<fk::LadderPoint>& ladder) {
    json rows = json::array();
    for (const auto& p : ladder) {
        json r;
        r["eps"] = p.eps;
        r["mean"] = p.mean;
        r["stderr"] = p.stderr_mean;
        rows.push_back(std::move(r));
    }
    return rows;
}

json moment_json(const fk::MomentEstimate& est) {
    json r;
    r["mean"] = est.mean;
    r["stderr"] = est.stderr_mean;
    r["samples"] = est.samples;
    r["accept_fraction"] = est.accept_fraction;
    r["clip_hit_rate"] = est.clip_hit_rate;
    r["ladder"] = ladder_json(est.ladder);
    if (est.extrapolated) {
        json e;
        e["value"] = est.extrapolated->value;
        e["uncertainty"] = est.extrapolated->uncertainty;
        e["exponent"] = est.extrapolated->exponent;
        e["flat"] = est.extrapolated->flat;
        e["warn_nonmonotone"] = est.extrapolated->warn_nonmonotone;
        e["note"] = est.extrapolated->note;
        r["extrapolated"] = std::move(e);
    }
    return r;
}

// ------------------------------------------------------------ experiments

struct PathDump {
    std::ofstream out;
    std::uint64_t count = 0;

    static void put(std::ofstream& s, const void* p, std::size_t n) {
        s.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
};

json run_moment(const json& cfg) {
    auto noise = noise_from(cfg.at("noise"));
    const json& blk = cfg.at("moment");
    const int n = blk.at("n").get<int>();
    const double t = blk.at("t").get<double>();
    auto u0 = u0_from(blk.at("u0"));

    std::vector<std::array<double, 3>> points;
    for (const auto& p : blk.at("points")) {
        std::array<double, 3> x{0.0, 0.0, 0.0};
        for (std::size_t d = 0; d < p.size(); ++d) x[d] = p[d].get<double>();
        points.push_back(x);
    }
    // A single point stands for all n factors evaluated there.
    if (points.size() == 1 && n > 1) points.assign(static_cast<std::size_t>(n), points[0]);

    fk::MomentOptions opt;
    opt.samples = blk.at("samples").get<std::uint64_t>();
    opt.grid_m = blk.at("grid_m").get<int>();
    opt.shards = cfg.at("shards").get<int>();
    opt.seed = SeedSpec{cfg.at("seed").get<std::uint64_t>(), 0};
    opt.eps_ladder = blk.at("eps_ladder").get<std::vector<double>>();
    opt.extrapolate = blk.at("extrapolate").get<bool>();
    opt.exact_kernel = blk.at("exact_kernel").get<bool>();
    opt.clip_value = blk.at("clip_value").get<double>();
    opt.exponent_cap = blk.at("exponent_cap").get<double>();

    PathDump dump;
    std::string dump_path;
    if (cfg.contains("dump_paths")) {
        dump_path = cfg.at("dump_paths").get<std::string>();
        dump.out.open(dump_path, std::ios::binary | std::ios::trunc);
        if (!dump.out) fail("cannot open dump file '" + dump_path + "'");
        const std::uint32_t m32 = static_cast<std::uint32_t>(opt.grid_m);
        const std::uint32_t ell32 = static_cast<std::uint32_t>(noise.ell);
        const std::uint64_t zero = 0;
        PathDump::put(dump.out, &t, 8);
        PathDump::put(dump.out, &m32, 4);
        PathDump::put(dump.out, &ell32, 4);
        PathDump::put(dump.out, &zero, 8); // path count, patched at the end
        PathDump::put(dump.out, &opt.seed.master, 8);
        PathDump::put(dump.out, &opt.seed.stream, 8);
        opt.path_sink = [&dump](const paths::PathSample& p) {
            PathDump::put(dump.out, p.nodes.data(), p.nodes.size() * sizeof(double));
            PathDump::put(dump.out, p.mids.data(), p.mids.size() * sizeof(double));
            return ++dump.count < 4096;
        };
    }

    fk::MomentEstimate est;
    if (blk.at("formula").get<std::string>() == "bridge") {
        est = fk::moment_fk_bridge(noise, n, t, points, u0, opt);
    } else {
        est = fk::moment_fk_bm(noise, n, t, points.front(), u0, opt);
    }

    json results = moment_json(est);
    if (dump.out.is_open()) {
        dump.out.seekp(16);
        PathDump::put(dump.out, &dump.count, 8);
        dump.out.close();
        json d;
        d["path"] = dump_path;
        d["paths_written"] = dump.count;
        results["dump"] = std::move(d);
    }
    return results;
}

json run_chaos(const json& cfg) {
    auto noise = noise_from(cfg.at("noise"));
    const json& blk = cfg.at("chaos");
    auto x = blk.at("x").get<std::vector<double>>();
    auto u0 = u0_from(blk.at("u0"));
    chaos::ChaosOptions opt;
    opt.samples = blk.at("samples").get<std::uint64_t>();
    opt.grid_m = blk.at("grid_m").get<int>();
    opt.shards = cfg.at("shards").get<int>();
    opt.seed = SeedSpec{cfg.at("seed").get<std::uint64_t>(), 0};

    auto series = chaos::second_moment_chaos(noise, blk.at("t").get<double>(), x, u0,
                                             blk.at("order_cap").get<int>(),
                                             blk.at("eps").get<double>(), opt);
    json rows = json::array();
    for (const auto& term : series.terms) {
        json r;
        r["order"] = term.order;
        r["value"] = term.value;
        r["stderr"] = term.stderr_mean;
        r["partial_sum"] = term.partial_sum;
        r["reliable"] = term.reliable;
        rows.push_back(std::move(r));
    }
    json results;
    results["terms"] = std::move(rows);
    results["total"] = series.total;
    results["uncertainty"] = series.uncertainty;
    results["tail_ratio"] = series.tail_ratio;
    results["truncated_early"] = series.truncated_early;
    results["note"] = series.note;
    return results;
}

json profile_json(const var::ProfileGrid& g) {
    json p;
    p["slices"] = g.slices;
    p["box_l"] = g.box_l;
    p["mx"] = g.mx;
    p["values"] = g.values;
    return p;
}

var::SolveResult solve_variational(const json& cfg, const cov::NoiseParams& noise) {
    const json& blk = cfg.at("variational");
    var::SolverOptions opt;
    opt.starts = blk.at("starts").get<int>();
    opt.seed = SeedSpec{cfg.at("seed").get<std::uint64_t>(), 0};
    opt.max_iters = blk.at("max_iters").get<int>();
    opt.grad_tol = blk.at("grad_tol").get<double>();
    opt.step0 = blk.at("step0").get<double>();
    if (blk.contains("guard")) opt.guard = blk.at("guard").get<double>();
    return var::maximize(noise.alpha0, noise.family, blk.at("eps").get<double>(),
                         blk.at("slices").get<int>(), blk.at("box_l").get<double>(),
                         blk.at("mx").get<int>(), opt);
}

json run_variational(const json& cfg) {
    auto noise = noise_from(cfg.at("noise"));
    auto res = solve_variational(cfg, noise);
    json results;
    results["total"] = res.best.total;
    results["interaction"] = res.best.interaction;
    results["kinetic"] = res.best.kinetic;
    results["converged"] = res.converged;
    results["guard"] = res.guard_used;
    results["start_totals"] = res.start_totals;
    json trace = json::array();
    for (const auto& p : res.trace) {
        json r;
        r["iteration"] = p.iter;
        r["total"] = p.total;
        r["interaction"] = p.interaction;
        r["kinetic"] = p.kinetic;
        r["step"] = p.step;
        trace.push_back(std::move(r));
    }
    results["trace"] = std::move(trace);
    auto bound = var::finiteness_bound(noise.alpha0, noise.family);
    json b;
    b["value"] = bound.value;
    b["radius"] = bound.radius;
    results["finiteness_bound"] = std::move(b);
    results["profile"] = profile_json(res.argmax);
    return results;
}

json run_lyapunov(const json& cfg) {
    auto noise = noise_from(cfg.at("noise"));
    const json& blk = cfg.at("lyapunov");
    auto ladder = blk.at("t_ladder").get<std::vector<double>>();
    fk::MomentOptions opt;
    opt.samples = blk.at("samples").get<std::uint64_t>();
    opt.grid_m = blk.at("grid_m").get<int>();
    opt.shards = cfg.at("shards").get<int>();
    opt.seed = SeedSpec{cfg.at("seed").get<std::uint64_t>(), 0};
    opt.eps_ladder = blk.at("eps_ladder").get<std::vector<double>>();
    std::optional<double> energy;
    if (blk.contains("energy")) energy = blk.at("energy").get<double>();

    auto est = asy::lyapunov_mc_estimate(noise, blk.at("n").get<int>(), ladder, opt, energy);
    json results;
    results["a"] = est.a;
    json rows = json::array();
    for (std::size_t i = 0; i < est.t.size(); ++i) {
        json r;
        r["t"] = est.t[i];
        r["log_moment"] = est.log_moment[i];
        r["sigma"] = est.sigma[i];
        rows.push_back(std::move(r));
    }
    results["ladder"] = std::move(rows);
    results["slope"] = est.slope;
    results["slope_stderr"] = est.slope_stderr;
    if (est.upper_constant) results["upper_constant"] = *est.upper_constant;
    if (est.consistent) results["consistent"] = *est.consistent;
    return results;
}

json run_indices(const json& cfg) {
    const json& blk = cfg.at("indices");
    std::optional<cov::NoiseParams> noise;
    if (cfg.contains("noise")) noise = noise_from(cfg.at("noise"));

    double energy = 0.0;
    std::string source;
    json solver_info;
    if (blk.at("solve_energy").get<bool>()) {
        auto res = solve_variational(cfg, *noise);
        energy = res.best.total;
        source = "solver";
        solver_info["total"] = res.best.total;
        solver_info["converged"] = res.converged;
    } else {
        energy = blk.at("energy").get<double>();
        source = "given";
    }

    std::optional<double> beta;
    if (blk.contains("beta")) beta = blk.at("beta").get<double>();
    std::optional<bool> nonneg;
    if (noise) nonneg = noise->family.nonneg_space_kernel();

    auto rep = asy::lambda_bounds(blk.at("n").get<int>(), blk.at("alpha0").get<double>(),
                                  blk.at("alpha").get<double>(), energy, beta, nonneg);
    json results;
    results["n"] = rep.n;
    results["alpha0"] = rep.alpha0;
    results["alpha"] = rep.alpha;
    results["a"] = rep.a;
    results["b"] = rep.b;
    results["energy"] = rep.energy;
    results["energy_source"] = source;
    if (!solver_info.empty()) results["solver"] = std::move(solver_info);
    if (rep.beta) results["beta"] = *rep.beta;
    if (rep.lambda_upper) results["lambda_upper"] = *rep.lambda_upper;
    results["lambda_upper_compact"] = rep.lambda_upper_compact;
    if (rep.lambda_lower) results["lambda_lower"] = *rep.lambda_lower;
    results["note"] = rep.note;
    return results;
}

json run_validate(const json& cfg) {
    auto noise = noise_from(cfg.at("noise")); // throws on invalid parameters
    json results;
    results["family"] = noise.family.name();
    results["ell"] = noise.ell;
    results["alpha0"] = noise.alpha0;

    auto dal = cov::dalang_check(noise.family);
    json dj;
    dj["pass"] = dal.pass;
    dj["conclusive"] = dal.conclusive;
    dj["value"] = dal.value;
    dj["method"] = dal.method;
    dj["note"] = dal.note;

    auto h1 = cov::h1_check(noise.family);
    json hj;
    hj["applicable"] = h1.applicable;
    hj["pass_subadditive"] = h1.pass_a;
    hj["kappa0"] = h1.kappa0;
    hj["pass_square_integrable"] = h1.pass_b;
    hj["conclusive"] = h1.conclusive_b;
    hj["value"] = h1.value_b;
    hj["note"] = h1.note;

    json sj;
    bool scal = noise.scaling_ok();
    sj["holds"] = scal;
    if (scal) {
        auto hom = noise.family.homogeneity();
        sj["alpha"] = *hom;
        if (*hom > 0.0) {
            auto exps = cov::scaling_exponents(*hom, noise.alpha0);
            sj["a"] = exps.a;
            sj["b"] = exps.b;
        }
    }

    json checks;
    checks["dalang"] = std::move(dj);
    checks["density_subadditivity"] = std::move(hj);
    checks["scaling"] = std::move(sj);
    results["checks"] = std::move(checks);
    // Nonnegative kernels stand on the integrability condition alone; the
    // density checks gate well-posedness only when the kernel changes sign.
    bool density_route_needed = !noise.family.nonneg_space_kernel();
    results["pass"] =
        dal.pass && (!density_route_needed || (h1.applicable && h1.pass_a && h1.pass_b));
    return results;
}

json run_selftest(const json& cfg) {
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    json checks = json::array();
    bool all_pass = true;
    auto push = [&](const std::string& name, double expected, double got, double tol) {
        bool pass = std::abs(got - expected) <= tol && std::isfinite(got);
        all_pass = all_pass && pass;
        json c;
        c["name"] = name;
        c["pass"] = pass;
        c["expected"] = expected;
        c["got"] = got;
        c["tol"] = tol;
        checks.push_back(std::move(c));
    };

    { // singular time weights resolve the closed-form double integral
        auto w = fk::TimeWeightMatrix::build(1.0, 64, 0.5);
        double sum = 64.0 * w.band()[0];
        for (int k = 1; k < 64; ++k) sum += 2.0 * (64 - k) * w.band()[k];
        push("time-weight-band-sum", 8.0 / 3.0, sum, 1e-10);
    }
    { // constant kernel: every bridge sample carries weight e^{8/3}
        cov::NoiseParams np;
        np.ell = 1;
        np.alpha0 = 0.5;
        np.family = cov::SpectralFamily::constant_cov(1, 1.0);
        fk::MomentOptions opt;
        opt.samples = 32;
        opt.grid_m = 16;
        opt.shards = 4;
        opt.seed = SeedSpec{seed, 0};
        std::vector<std::array<double, 3>> origin(2, {0.0, 0.0, 0.0});
        auto est = fk::moment_fk_bridge(np, 2, 1.0, origin, fk::InitialDatum{}, opt);
        push("constant-kernel-bridge-moment", std::exp(8.0 / 3.0), est.mean,
             1e-9 * std::exp(8.0 / 3.0));
    }
    push("phi-quadratic-root", 0.25, asy::phi_beta(1.0, 1.0, 1.5), 1e-10);
    push("g-closed-form", 0.40625, asy::g_beta(1.0, 1.0, 1.5), 1e-10);
    {
        auto exps = cov::scaling_exponents(1.0, 0.5);
        push("scaling-exponent-a", 2.0, exps.a, 1e-14);
        push("scaling-exponent-b", 4.0 / 3.0, exps.b, 1e-14);
    }
    { // mollified kernel at zero: closed form vs radial quadrature
        auto fam = cov::SpectralFamily::riesz(1, 0.5);
        double closed = cov::damped_spectral_mass(fam, 1.0);
        double quad = cov::gamma_eps_eval(fam, 0.0, 1.0);
        push("damped-mass-quadrature", closed, quad, 1e-7 * std::abs(closed));
    }
    push("heat-kernel-origin", 0.3989422804014327, paths::heat_kernel(1.0, 0.0, 1), 1e-14);
    push("bridge-covariance-point", 0.125, paths::bridge_cov(0.25, 0.5, 1.0), 1e-15);
    { // growth-index prefactor at a = 2
        auto rep = asy::lambda_bounds(3, 0.5, 1.0, 1.0);
        push("growth-index-lower", 2.0 * std::sqrt(2.0) / (3.0 * std::sqrt(3.0)),
             rep.lambda_lower.value_or(-1.0), 1e-12);
        push("growth-index-compact", std::sqrt(2.0), rep.lambda_upper_compact, 1e-12);
    }
    { // same seed, same estimate, bit for bit
        cov::NoiseParams np;
        np.ell = 1;
        np.alpha0 = 0.5;
        np.family = cov::SpectralFamily::riesz(1, 0.5);
        fk::MomentOptions opt;
        opt.samples = 256;
        opt.grid_m = 32;
        opt.shards = 4;
        opt.seed = SeedSpec{seed, 0};
        opt.eps_ladder = {0.5};
        auto a = fk::bridge_functional(np, 2, 0.5, opt);
        auto b = fk::bridge_functional(np, 2, 0.5, opt);
        push("mc-replay-identical", a.mean, b.mean, 0.0);
    }
    { // spectral atom: chaos terms are exact Poisson weights of 8/3
        cov::NoiseParams np;
        np.ell = 1;
        np.alpha0 = 0.5;
        np.family = cov::SpectralFamily::constant_cov(1, 1.0);
        chaos::ChaosOptions opt;
        opt.samples = 8;
        opt.grid_m = 8;
        opt.shards = 2;
        opt.seed = SeedSpec{seed, 0};
        std::vector<double> x{0.0};
        auto series = chaos::second_moment_chaos(np, 1.0, x, fk::InitialDatum{}, 8, 0.0, opt);
        double expected = 0.0, pow_term = 1.0;
        for (int k = 0; k <= 8; ++k) {
            expected += pow_term;
            pow_term *= (8.0 / 3.0) / (k + 1);
        }
        push("chaos-atom-partial-sum", expected, series.total, 1e-12 * expected);
    }
    { // atom interaction energy equals the time-weight mass (slice masses 1)
        var::EnergyModel model(0.5, cov::SpectralFamily::constant_cov(1, 1.0), 0.0, 4,
                               6.0, 33);
        auto g = var::make_profile(4, 6.0, 33);
        for (int i = 0; i < 4; ++i)
            for (int k = 1; k + 1 < 33; ++k) {
                double x = g.x_at(k);
                g.at(i, k) = std::exp(-x * x);
            }
        var::renormalize(g);
        push("atom-interaction-energy", 8.0 / 3.0, model.energy(g).interaction, 1e-12);
        push("finiteness-bound-atom", 4.0,
             var::finiteness_bound(0.5, cov::SpectralFamily::constant_cov(1, 1.0)).value,
             1e-12);
    }

    json results;
    results["checks"] = std::move(checks);
    results["all_pass"] = all_pass;
    return results;
}

} // namespace

json normalize_config(const json& raw) {
    check_keys(raw, "top level",
               {"experiment", "noise", "seed", "shards", "moment", "chaos", "variational",
                "lyapunov", "indices", "out", "csv_prefix", "dump_paths"});
    if (!raw.contains("experiment") || !raw.at("experiment").is_string())
        fail("an 'experiment' name is required");
    const std::string exp = raw.at("experiment").get<std::string>();
    const bool known = exp == "moment" || exp == "chaos" || exp == "variational" ||
                       exp == "lyapunov" || exp == "indices" || exp == "validate" ||
                       exp == "selftest";
    if (!known) fail("unknown experiment '" + exp + "'");

    json cfg;
    cfg["experiment"] = exp;
    cfg["seed"] = get_u64(raw, "seed", 20260816ULL, "top level");
    int shards = get_int(raw, "shards", 8, "top level");
    if (shards < 1) fail("shards must be >= 1");
    cfg["shards"] = shards;

    const bool needs_noise = exp == "moment" || exp == "chaos" || exp == "variational" ||
                             exp == "lyapunov" || exp == "validate";
    json noise;
    if (raw.contains("noise")) {
        noise = norm_noise(raw.at("noise"));
        noise_from(noise); // constructibility and domain checks up front
        cfg["noise"] = noise;
    } else if (needs_noise) {
        fail("experiment '" + exp + "' needs a noise block");
    }

    if (raw.contains("moment") || exp == "moment")
        cfg["moment"] = norm_moment(raw.contains("moment") ? raw.at("moment") : json::object(),
                                    cfg.contains("noise")
                                        ? cfg.at("noise")
                                        : (fail("moment block needs noise"), json{}));
    if (raw.contains("chaos") || exp == "chaos")
        cfg["chaos"] = norm_chaos(raw.contains("chaos") ? raw.at("chaos") : json::object(),
                                  cfg.contains("noise")
                                      ? cfg.at("noise")
                                      : (fail("chaos block needs noise"), json{}));
    bool want_variational = raw.contains("variational") || exp == "variational";
    if (exp == "indices") {
        json iblk = norm_indices(raw.contains("indices") ? raw.at("indices") : json::object(),
                                 cfg.contains("noise") ? &cfg.at("noise") : nullptr);
        want_variational = want_variational || iblk.at("solve_energy").get<bool>();
        cfg["indices"] = std::move(iblk);
    } else if (raw.contains("indices")) {
        cfg["indices"] = norm_indices(raw.at("indices"),
                                      cfg.contains("noise") ? &cfg.at("noise") : nullptr);
    }
    if (want_variational)
        cfg["variational"] =
            norm_variational(raw.contains("variational") ? raw.at("variational") : json::object());
    if (raw.contains("lyapunov") || exp == "lyapunov")
        cfg["lyapunov"] =
            norm_lyapunov(raw.contains("lyapunov") ? raw.at("lyapunov") : json::object(),
                          cfg.contains("noise")
                              ? cfg.at("noise")
                              : (fail("lyapunov block needs noise"), json{}));

    if (raw.contains("out")) cfg["out"] = get_str(raw, "out", "", "top level");
    if (raw.contains("csv_prefix"))
        cfg["csv_prefix"] = get_str(raw, "csv_prefix", "", "top level");
    if (raw.contains("dump_paths")) {
        if (exp != "moment") fail("dump_paths applies to the moment experiment");
        cfg["dump_paths"] = get_str(raw, "dump_paths", "", "top level");
    }
    return cfg;
}

json run_experiment(const json& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const std::string exp = cfg.at("experiment").get<std::string>();
    json results;
    if (exp == "moment") {
        results = run_moment(cfg);
    } else if (exp == "chaos") {
        results = run_chaos(cfg);
    } else if (exp == "variational") {
        results = run_variational(cfg);
    } else if (exp == "lyapunov") {
        results = run_lyapunov(cfg);
    } else if (exp == "indices") {
        results = run_indices(cfg);
    } else if (exp == "validate") {
        results = run_validate(cfg);
    } else {
        results = run_selftest(cfg);
    }
    const auto wall =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
            .count();

    json env;
    env["tool"] = "pamkit";
    env["version"] = "0.1.0";
    env["build_id"] = PAMKIT_BUILD_ID;
    env["experiment"] = exp;
    env["config"] = cfg;
    env["results"] = results;
    env["timing"] = json{{"wall_ms", wall}};
    return env;
}

std::vector<std::pair<std::string, std::string>> emit_plotdata(const json& envelope) {
    std::vector<std::pair<std::string, std::string>> files;
    const std::string exp = envelope.at("experiment").get<std::string>();
    const json& results = envelope.at("results");

    auto row = [](std::initializer_list<double> vals) {
        std::string line;
        for (double v : vals) {
            if (!line.empty()) line += ",";
            line += fmt_num(v);
        }
        return line + "\n";
    };

    if (exp == "moment" && results.contains("ladder")) {
        std::string text = "eps,mean,stderr\n";
        for (const auto& r : results.at("ladder"))
            text += row({r.at("eps").get<double>(), r.at("mean").get<double>(),
                         r.at("stderr").get<double>()});
        files.emplace_back("ladder", std::move(text));
    } else if (exp == "chaos") {
        std::string text = "order,value,stderr,partial_sum\n";
        for (const auto& r : results.at("terms"))
            text += std::to_string(r.at("order").get<int>()) + "," +
                    fmt_num(r.at("value").get<double>()) + "," +
                    fmt_num(r.at("stderr").get<double>()) + "," +
                    fmt_num(r.at("partial_sum").get<double>()) + "\n";
        files.emplace_back("terms", std::move(text));
    } else if (exp == "variational") {
        std::string trace = "iteration,total,interaction,kinetic\n";
        for (const auto& r : results.at("trace"))
            trace += std::to_string(r.at("iteration").get<int>()) + "," +
                     fmt_num(r.at("total").get<double>()) + "," +
                     fmt_num(r.at("interaction").get<double>()) + "," +
                     fmt_num(r.at("kinetic").get<double>()) + "\n";
        files.emplace_back("trace", std::move(trace));

        const json& prof = results.at("profile");
        const int slices = prof.at("slices").get<int>();
        const int mx = prof.at("mx").get<int>();
        const double box_l = prof.at("box_l").get<double>();
        const auto& vals = prof.at("values");
        std::string text = "slice,x,value\n";
        for (int i = 0; i < slices; ++i)
            for (int k = 0; k < mx; ++k) {
                double x = -box_l + k * (2.0 * box_l / (mx - 1));
                text += std::to_string(i) + "," + fmt_num(x) + "," +
                        fmt_num(vals[static_cast<std::size_t>(i) * mx + k].get<double>()) +
                        "\n";
            }
        files.emplace_back("profile", std::move(text));
    } else if (exp == "lyapunov") {
        std::string text = "t,log_moment,sigma\n";
        for (const auto& r : results.at("ladder"))
            text += row({r.at("t").get<double>(), r.at("log_moment").get<double>(),
                         r.at("sigma").get<double>()});
        files.emplace_back("ladder", std::move(text));
    }
    return files;
}

} // namespace pamkit::cli
