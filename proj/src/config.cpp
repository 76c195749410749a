#include "stomax/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "stomax/error.hpp"

namespace stomax {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class Errors {
public:
    void add(const std::string& key, const std::string& reason) { list_.push_back(key + ": " + reason); }
    [[nodiscard]] bool empty() const { return list_.empty(); }
    [[noreturn]] void raise() const {
        std::string msg = "invalid config (" + std::to_string(list_.size()) + " error" + (list_.size() == 1 ? "" : "s") +
                          ")";
        for (const auto& e : list_) msg += "; " + e;
        throw ConfigError(msg);
    }
    void raise_if_any() const {
        if (!list_.empty()) raise();
    }

private:
    std::vector<std::string> list_;
};

bool parse_double(const std::string& text, double& out) {
    const char* b = text.data();
    const char* e = b + text.size();
    const auto r = std::from_chars(b, e, out);
    return r.ec == std::errc{} && r.ptr == e && std::isfinite(out);
}

template <typename Int>
bool parse_int(const std::string& text, Int& out) {
    const char* b = text.data();
    const char* e = b + text.size();
    const auto r = std::from_chars(b, e, out);
    return r.ec == std::errc{} && r.ptr == e;
}

std::vector<std::string> split_list(const std::string& text) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

bool parse_bool(const std::string& text, bool& out) {
    if (text == "true" || text == "1" || text == "yes") {
        out = true;
        return true;
    }
    if (text == "false" || text == "0" || text == "no") {
        out = false;
        return true;
    }
    return false;
}

struct Entry {
    std::string value;
    int line{0};
};

using Setter = std::function<bool(ExperimentConfig&, const std::string&)>;

template <typename T>
Setter set_int(T ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.*field); };
}

Setter set_double(double ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) { return parse_double(v, c.*field); };
}

Setter set_string(std::string ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) {
        c.*field = v;
        return !v.empty();
    };
}

bool set_size_list(std::vector<std::size_t>& out, const std::string& v) {
    std::vector<std::size_t> values;
    for (const auto& tok : split_list(v)) {
        std::size_t x = 0;
        if (!parse_int(tok, x)) return false;
        values.push_back(x);
    }
    if (values.empty()) return false;
    out = std::move(values);
    return true;
}

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> table{
        {"experiment.kind", set_string(&ExperimentConfig::kind)},
        {"experiment.samples", set_int(&ExperimentConfig::samples)},
        {"experiment.seed", set_int(&ExperimentConfig::seed)},
        {"experiment.threads", set_int(&ExperimentConfig::threads)},
        {"grid.dimension", set_int(&ExperimentConfig::dimension)},
        {"grid.cells", set_int(&ExperimentConfig::cells_x)},
        {"grid.cells_y", set_int(&ExperimentConfig::cells_y)},
        {"grid.length", set_double(&ExperimentConfig::length_x)},
        {"grid.length_y", set_double(&ExperimentConfig::length_y)},
        {"medium.epsilon", set_double(&ExperimentConfig::epsilon)},
        {"medium.mu", set_double(&ExperimentConfig::mu)},
        {"medium.file", set_string(&ExperimentConfig::medium_file)},
        {"noise.modes", set_int(&ExperimentConfig::noise_modes)},
        {"noise.decay", set_double(&ExperimentConfig::noise_decay)},
        {"noise.scale", set_double(&ExperimentConfig::noise_scale)},
        {"scheme.theta", [](ExperimentConfig& c, const std::string& v) { return parse_double(v, c.scheme.theta); }},
        {"scheme.picard_tol",
         [](ExperimentConfig& c, const std::string& v) { return parse_double(v, c.scheme.picard_tol); }},
        {"scheme.picard_max_iters",
         [](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.scheme.picard_max_iters); }},
        {"time.horizon", set_double(&ExperimentConfig::horizon)},
        {"time.steps", set_int(&ExperimentConfig::steps)},
        {"time.store_stride", set_int(&ExperimentConfig::store_stride)},
        {"time.finest_steps",
         [](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.convergence.finest_steps); }},
        {"time.ladder", [](ExperimentConfig& c, const std::string& v) { return set_size_list(c.convergence.factors, v); }},
        {"time.exclude_finest",
         [](ExperimentConfig& c, const std::string& v) { return parse_bool(v, c.convergence.exclude_finest_from_fit); }},
        {"initial.kind", [](ExperimentConfig& c, const std::string& v) {
             c.initial.kind = v;
             return !v.empty();
         }},
        {"initial.amplitude",
         [](ExperimentConfig& c, const std::string& v) { return parse_double(v, c.initial.amplitude); }},
        {"initial.mode", [](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.initial.mode); }},
        {"output.directory", set_string(&ExperimentConfig::output_dir)},
        {"holder.fine_steps",
         [](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.holder.fine_steps); }},
        {"holder.lags", [](ExperimentConfig& c, const std::string& v) { return set_size_list(c.holder.lags, v); }},
        {"truncation.fine_steps",
         [](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.truncation.fine_steps); }},
        {"truncation.freeze_time",
         [](ExperimentConfig& c, const std::string& v) { return parse_double(v, c.truncation.freeze_time); }},
        {"truncation.factors",
         [](ExperimentConfig& c, const std::string& v) { return set_size_list(c.truncation.factors, v); }},
        {"truncation.inner_samples",
         [](ExperimentConfig& c, const std::string& v) { return parse_int(v, c.truncation.inner_samples); }},
        {"stability.powers", [](ExperimentConfig& c, const std::string& v) {
             std::vector<int> values;
             for (const auto& tok : split_list(v)) {
                 int p = 0;
                 if (!parse_int(tok, p)) return false;
                 values.push_back(p);
             }
             if (values.empty()) return false;
             c.stability_powers = std::move(values);
             return true;
         }},
    };
    return table;
}

bool is_kind(const std::string& kind) {
    const auto& k = experiment_kinds();
    return std::find(k.begin(), k.end(), kind) != k.end();
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

void check_divides(Errors& err, const std::string& key, const std::vector<std::size_t>& factors, std::size_t n,
                   const std::string& n_key) {
    for (const auto f : factors) {
        if (f < 1) {
            err.add(key, "factor " + std::to_string(f) + " must be >= 1");
        } else if (n % f != 0) {
            err.add(key, "factor " + std::to_string(f) + " does not divide " + n_key + " = " + std::to_string(n));
        }
    }
    std::set<std::size_t> distinct(factors.begin(), factors.end());
    if (distinct.size() != factors.size()) err.add(key, "factors must be distinct");
}

void collect_violations(const ExperimentConfig& c, Errors& err) {
    if (!is_kind(c.kind)) {
        err.add("experiment.kind",
                "unknown kind '" + c.kind + "' (convergence, energy, holder, truncation, stability, single-run)");
    }
    const std::size_t min_samples = c.kind == "single-run" ? 1 : 2;
    if (c.samples < min_samples) err.add("experiment.samples", "must be >= " + std::to_string(min_samples));

    if (c.dimension != 1 && c.dimension != 2) err.add("grid.dimension", "must be 1 or 2");
    if (c.cells_x < 2) err.add("grid.cells", "must be >= 2");
    if (c.dimension == 2 && c.cells_y < 2) err.add("grid.cells_y", "must be >= 2");
    if (!(c.length_x > 0.0)) err.add("grid.length", "must be > 0");
    if (c.dimension == 2 && !(c.length_y > 0.0)) err.add("grid.length_y", "must be > 0");
    const int min_cells = c.dimension == 2 ? std::min(c.cells_x, c.cells_y) : c.cells_x;

    if (c.medium_file.empty()) {
        if (!(c.epsilon > 0.0)) err.add("medium.epsilon", "must be > 0");
        if (!(c.mu > 0.0)) err.add("medium.mu", "must be > 0");
    } else if (!std::filesystem::is_regular_file(c.medium_file)) {
        err.add("medium.file", "file '" + c.medium_file + "' does not exist");
    }

    try {
        (void)make_model(c.model, c.model_params);
    } catch (const ConfigError& e) {
        err.add("model", e.what());
    }

    if (c.noise_modes < 1) err.add("noise.modes", "must be >= 1");
    if (min_cells >= 2 && c.noise_modes > min_cells - 1) {
        err.add("noise.modes", "must be <= cells - 1 = " + std::to_string(min_cells - 1));
    }
    if (!(c.noise_decay > 1.0)) err.add("noise.decay", "must be > 1 for a trace-class covariance");
    if (!(c.noise_scale > 0.0)) err.add("noise.scale", "must be > 0");

    if (!(c.scheme.theta >= 0.0 && c.scheme.theta <= 1.0)) {
        err.add("scheme.theta", "value " + format_number(c.scheme.theta) + " out of range [0, 1]");
    }
    if (!(c.scheme.picard_tol > 0.0)) err.add("scheme.picard_tol", "must be > 0");
    if (c.scheme.picard_max_iters < 1) err.add("scheme.picard_max_iters", "must be >= 1");

    if (!(c.horizon > 0.0)) err.add("time.horizon", "must be > 0");
    if (c.steps < 1) err.add("time.steps", "must be >= 1");
    if (c.store_stride < 1) err.add("time.store_stride", "must be >= 1");

    if (c.initial.kind != "zero" && c.initial.kind != "mode") {
        err.add("initial.kind", "unknown kind '" + c.initial.kind + "' (zero, mode)");
    }
    if (c.initial.kind == "mode" && (c.initial.mode < 1 || (min_cells >= 2 && c.initial.mode > min_cells - 1))) {
        err.add("initial.mode", "must lie in [1, cells - 1]");
    }
    if (c.output_dir.empty()) err.add("output.directory", "must not be empty");

    if (c.kind == "convergence") {
        const auto& cc = c.convergence;
        if (cc.finest_steps < 1) err.add("time.finest_steps", "must be >= 1");
        if (cc.factors.empty()) err.add("time.ladder", "must not be empty");
        check_divides(err, "time.ladder", cc.factors, cc.finest_steps, "time.finest_steps");
        for (const auto f : cc.factors) {
            if (f == 1) err.add("time.ladder", "factor 1 reproduces the reference");
        }
        const std::size_t fit = cc.factors.size() - (cc.exclude_finest_from_fit ? 1 : 0);
        if (!cc.factors.empty() && fit < 2) err.add("time.ladder", "at least two fitted ladder points are required");
    }
    if (c.kind == "holder") {
        const auto& h = c.holder;
        if (h.fine_steps < 1) err.add("holder.fine_steps", "must be >= 1");
        if (h.lags.size() < 2) err.add("holder.lags", "at least two lags are required");
        for (const auto lag : h.lags) {
            if (lag < 1) err.add("holder.lags", "lag " + std::to_string(lag) + " must be >= 1");
            if (lag > h.fine_steps) {
                err.add("holder.lags", "lag " + std::to_string(lag) + " exceeds holder.fine_steps = " +
                                           std::to_string(h.fine_steps));
            }
        }
    }
    if (c.kind == "truncation") {
        const auto& t = c.truncation;
        if (t.fine_steps < 1) err.add("truncation.fine_steps", "must be >= 1");
        if (t.factors.size() < 2) err.add("truncation.factors", "at least two factors are required");
        check_divides(err, "truncation.factors", t.factors, t.fine_steps, "truncation.fine_steps");
        if (t.inner_samples < 2) err.add("truncation.inner_samples", "must be >= 2");
        if (!(t.freeze_time >= 0.0 && t.freeze_time < c.horizon)) {
            err.add("truncation.freeze_time", "must lie in [0, time.horizon)");
        } else if (!t.factors.empty() && t.fine_steps >= 1) {
            const double tau_f = c.horizon / static_cast<double>(t.fine_steps);
            const double span = tau_f * static_cast<double>(*std::max_element(t.factors.begin(), t.factors.end()));
            if (t.freeze_time + span > c.horizon * (1.0 + 1e-12)) {
                err.add("truncation.freeze_time", "freeze time plus the largest tau exceeds time.horizon");
            }
        }
    }
    if (c.kind == "stability") {
        for (const int p : c.stability_powers) {
            if (p != 2 && p != 4) err.add("stability.powers", "power " + std::to_string(p) + " not in {2, 4}");
        }
    }
    if (c.kind == "energy") {
        try {
            const auto m = make_model(c.model, c.model_params);
            if (!m.zero_drift || !m.additive) {
                err.add("model.name", "energy experiment requires F = 0 and constant B (got '" + c.model + "')");
            }
        } catch (const ConfigError&) {
        }
    }
}

}  // namespace

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return {buf, r.ptr};
}

ExperimentConfig default_config(const std::string& kind) {
    ExperimentConfig c;
    c.kind = kind;
    if (kind == "single-run") {
        c.samples = 1;
    } else if (kind == "energy") {
        c.samples = 1000;
        c.model = "additive";
        c.model_params = {};
        c.scheme.theta = 0.5;
        c.initial = {"zero", 1.0, 1};
        c.steps = 256;
    } else if (kind == "holder") {
        c.samples = 500;
    } else if (kind == "truncation") {
        c.samples = 100;
        c.cells_x = 16;
        c.cells_y = 16;
        c.noise_modes = 15;
    } else if (kind == "stability") {
        c.store_stride = 8;
    }
    return c;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& base_dir) {
    Errors err;
    std::map<std::string, Entry> entries;
    std::istringstream in(text);
    std::string section;
    int lineno = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                err.add(where, "malformed section header '" + line + "'");
                section.clear();
            } else {
                section = trim(line.substr(1, line.size() - 2));
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            err.add(where, "expected 'key = value', got '" + line + "'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            err.add(where, "key '" + key + "' outside of any section");
            continue;
        }
        const std::string path = section + "." + key;
        if (key.empty()) {
            err.add(where, "empty key");
        } else if (entries.count(path)) {
            err.add(path, "duplicate key (first set on line " + std::to_string(entries[path].line) + ")");
        } else {
            entries[path] = {value, lineno};
        }
    }

    const auto kind_it = entries.find("experiment.kind");
    std::string kind = kind_it == entries.end() ? std::string{} : kind_it->second.value;
    if (kind.empty()) {
        err.add("experiment.kind", "required");
        kind = "single-run";
    }
    ExperimentConfig cfg = default_config(is_kind(kind) ? kind : "single-run");
    cfg.kind = kind;

    const bool model_named = entries.count("model.name") > 0;
    if (model_named) {
        cfg.model = entries["model.name"].value;
        cfg.model_params.clear();
    }
    std::vector<std::string> allowed_params;
    try {
        allowed_params = model_parameter_names(cfg.model);
    } catch (const ConfigError& e) {
        err.add("model.name", e.what());
    }

    for (const auto& [path, entry] : entries) {
        if (path == "model.name") continue;
        if (path.rfind("model.", 0) == 0) {
            const std::string p = path.substr(6);
            if (!allowed_params.empty() &&
                std::find(allowed_params.begin(), allowed_params.end(), p) == allowed_params.end()) {
                err.add(path, "unknown parameter for model '" + cfg.model + "'");
                continue;
            }
            double v = 0.0;
            if (!parse_double(entry.value, v)) {
                err.add(path, "expected a finite number, got '" + entry.value + "'");
                continue;
            }
            cfg.model_params[p] = v;
            continue;
        }
        const auto it = schema().find(path);
        if (it == schema().end()) {
            const std::string sec = path.substr(0, path.find('.'));
            bool known_section = sec == "model";
            for (const auto& [k, s] : schema()) known_section = known_section || k.rfind(sec + ".", 0) == 0;
            err.add(path, known_section ? "unknown key" : "unknown section [" + sec + "]");
            continue;
        }
        if (!it->second(cfg, entry.value)) err.add(path, "cannot parse value '" + entry.value + "'");
    }
    if (!cfg.medium_file.empty() && std::filesystem::path(cfg.medium_file).is_relative()) {
        cfg.medium_file = (std::filesystem::path(base_dir) / cfg.medium_file).lexically_normal().string();
    }
    err.raise_if_any();
    collect_violations(cfg, err);
    err.raise_if_any();
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    if (in.bad()) throw std::ios_base::failure("cannot read config file '" + path + "'");
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config_text(text.str(), dir.empty() ? "." : dir.string());
}

void validate_config(const ExperimentConfig& cfg) {
    Errors err;
    collect_violations(cfg, err);
    err.raise_if_any();
}

std::vector<std::pair<std::string, std::string>> describe_config(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> out{
        {"experiment.kind", c.kind},
        {"experiment.samples", std::to_string(c.samples)},
        {"experiment.seed", std::to_string(c.seed)},
        {"experiment.threads", std::to_string(c.threads)},
        {"grid.dimension", std::to_string(c.dimension)},
        {"grid.cells", std::to_string(c.cells_x)},
    };
    if (c.dimension == 2) out.emplace_back("grid.cells_y", std::to_string(c.cells_y));
    out.emplace_back("grid.length", format_number(c.length_x));
    if (c.dimension == 2) out.emplace_back("grid.length_y", format_number(c.length_y));
    if (c.medium_file.empty()) {
        out.emplace_back("medium.epsilon", format_number(c.epsilon));
        out.emplace_back("medium.mu", format_number(c.mu));
    } else {
        out.emplace_back("medium.file", c.medium_file);
    }
    out.emplace_back("model.name", c.model);
    for (const auto& [k, v] : c.model_params) out.emplace_back("model." + k, format_number(v));
    out.emplace_back("noise.modes", std::to_string(c.noise_modes));
    out.emplace_back("noise.decay", format_number(c.noise_decay));
    out.emplace_back("noise.scale", format_number(c.noise_scale));
    out.emplace_back("scheme.theta", format_number(c.scheme.theta));
    out.emplace_back("scheme.picard_tol", format_number(c.scheme.picard_tol));
    out.emplace_back("scheme.picard_max_iters", std::to_string(c.scheme.picard_max_iters));
    out.emplace_back("time.horizon", format_number(c.horizon));
    if (c.kind == "convergence") {
        out.emplace_back("time.finest_steps", std::to_string(c.convergence.finest_steps));
        out.emplace_back("time.ladder", join_sizes(c.convergence.factors));
        out.emplace_back("time.exclude_finest", c.convergence.exclude_finest_from_fit ? "true" : "false");
    } else if (c.kind == "energy" || c.kind == "stability" || c.kind == "single-run") {
        out.emplace_back("time.steps", std::to_string(c.steps));
        out.emplace_back("time.store_stride", std::to_string(c.store_stride));
    }
    out.emplace_back("initial.kind", c.initial.kind);
    if (c.initial.kind == "mode") {
        out.emplace_back("initial.amplitude", format_number(c.initial.amplitude));
        out.emplace_back("initial.mode", std::to_string(c.initial.mode));
    }
    if (c.kind == "holder") {
        out.emplace_back("holder.fine_steps", std::to_string(c.holder.fine_steps));
        out.emplace_back("holder.lags", join_sizes(c.holder.lags));
    } else if (c.kind == "truncation") {
        out.emplace_back("truncation.fine_steps", std::to_string(c.truncation.fine_steps));
        out.emplace_back("truncation.freeze_time", format_number(c.truncation.freeze_time));
        out.emplace_back("truncation.factors", join_sizes(c.truncation.factors));
        out.emplace_back("truncation.inner_samples", std::to_string(c.truncation.inner_samples));
    } else if (c.kind == "stability") {
        std::string p;
        for (std::size_t i = 0; i < c.stability_powers.size(); ++i) {
            p += (i ? " " : "") + std::to_string(c.stability_powers[i]);
        }
        out.emplace_back("stability.powers", p);
    }
    return out;
}

Problem build_problem(const ExperimentConfig& c) {
    validate_config(c);
    const auto grid = std::make_shared<const Grid>(c.dimension == 1
                                                       ? Grid::line(c.length_x, c.cells_x)
                                                       : Grid::rectangle(c.length_x, c.length_y, c.cells_x, c.cells_y));
    const auto medium = std::make_shared<const MediumCoefficients>(
        c.medium_file.empty() ? MediumCoefficients::uniform(grid, c.epsilon, c.mu)
                              : MediumCoefficients::from_file(grid, c.medium_file));
    const auto noise = std::make_shared<const NoiseSpec>(grid, c.noise_modes, c.noise_decay, c.noise_scale);
    return make_problem(medium, make_model(c.model, c.model_params), noise, make_initial_state(grid, c.initial));
}

RunSettings run_settings(const ExperimentConfig& c) {
    RunSettings r;
    r.scheme = c.scheme;
    r.horizon = c.horizon;
    r.num_samples = c.samples;
    r.seed = c.seed;
    r.threads = c.threads;
    return r;
}

}  // namespace stomax
