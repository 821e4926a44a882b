#pragma once

// Panel CSV files and the JSON model file.
//
// CSV: header row, then subject_id,spell_index,y,d,x1..xp in any column
// order. Rows are numbered from 1 after the header in error messages.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffpsurv/error.hpp"
#include "ffpsurv/estimation.hpp"
#include "ffpsurv/model_core.hpp"
#include "ffpsurv/simulation.hpp"

namespace ffpsurv {

inline constexpr int model_format_version = 1;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t row) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw validation_error("unterminated quoted field", row);
    out.push_back(std::move(cur));
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& text, const char* column, std::size_t row) {
    const std::string s = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw validation_error(std::string("column ") + column + ": '" + text + "' is not a number", row);
    }
    return v;
}

inline long parse_integer(const std::string& text, const char* column, std::size_t row) {
    const std::string s = trim(text);
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw validation_error(std::string("column ") + column + ": '" + text + "' is not an integer", row);
    }
    return v;
}

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string quote_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace detail

// y within 1e-9 psi of a grid point is replaced by that point.
inline double snap_to_grid(double y, double psi, std::optional<std::size_t> row = std::nullopt) {
    const long k = grid_cell(y, psi);
    if (k < 0) {
        throw validation_error("y=" + detail::format_real(y) + " is not a non-negative multiple of psi=" +
                                   detail::format_real(psi),
                               row);
    }
    return static_cast<double>(k) * psi;
}

inline PanelDataset parse_panel_csv(std::istream& in, double psi) {
    if (!(psi > 0.0) || !std::isfinite(psi)) throw validation_error("psi must be positive and finite");
    std::string line;
    if (!std::getline(in, line)) throw validation_error("empty file: header row is mandatory");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line, 0);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = detail::trim(header[i]);
        if (!col.emplace(name, i).second) throw validation_error("duplicate column '" + name + "' in header");
    }
    for (const char* need : {"subject_id", "spell_index", "y", "d"}) {
        if (!col.count(need)) throw validation_error(std::string("missing column '") + need + "'");
    }
    std::size_t p = 0;
    while (col.count("x" + std::to_string(p + 1))) ++p;
    if (p == 0) throw validation_error("missing column 'x1': at least one feature is required");
    for (const auto& [name, idx] : col) {
        if (name.size() > 1 && name[0] == 'x' && std::all_of(name.begin() + 1, name.end(), ::isdigit)) {
            const long k = std::stol(name.substr(1));
            if (k < 1 || static_cast<std::size_t>(k) > p) {
                throw validation_error("feature column '" + name + "' without x1..x" + std::to_string(k - 1));
            }
        }
    }

    struct Row {
        long index;
        std::size_t row;
        Spell spell;
    };
    std::map<std::string, std::vector<Row>> by_subject;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line, row);
        if (f.size() != header.size()) {
            throw validation_error("expected " + std::to_string(header.size()) + " fields, found " +
                                       std::to_string(f.size()),
                                   row);
        }
        Row r;
        r.row = row;
        const std::string id = detail::trim(f[col["subject_id"]]);
        if (id.empty()) throw validation_error("empty subject_id", row);
        r.index = detail::parse_integer(f[col["spell_index"]], "spell_index", row);
        if (r.index < 1) throw validation_error("spell_index must be a positive integer", row);
        const double y = detail::parse_real(f[col["y"]], "y", row);
        if (!std::isfinite(y) || y < 0.0) throw validation_error("y must be finite and non-negative", row);
        r.spell.y = snap_to_grid(y, psi, row);
        const long d = detail::parse_integer(f[col["d"]], "d", row);
        if (d != 0 && d != 1) throw validation_error("d must be 0 or 1, found " + std::to_string(d), row);
        r.spell.d = static_cast<int>(d);
        r.spell.x.resize(p);
        for (std::size_t k = 0; k < p; ++k) {
            const std::string name = "x" + std::to_string(k + 1);
            r.spell.x[k] = detail::parse_real(f[col[name]], name.c_str(), row);
            if (!std::isfinite(r.spell.x[k])) throw validation_error(name + " must be finite", row);
        }
        by_subject[id].push_back(std::move(r));
    }

    PanelDataset ds;
    ds.p = p;
    ds.psi = psi;
    for (auto& [id, rows] : by_subject) {
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.index < b.index; });
        Subject s;
        s.id = id;
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (rows[j].index != static_cast<long>(j + 1)) {
                const bool dup = j > 0 && rows[j].index == rows[j - 1].index;
                throw validation_error("subject '" + id + "': spell_index " + std::to_string(rows[j].index) +
                                           (dup ? " is duplicated" : " breaks the dense sequence 1.." +
                                                                         std::to_string(rows.size())),
                                       rows[j].row);
            }
            s.spells.push_back(std::move(rows[j].spell));
        }
        ds.subjects.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

inline PanelDataset read_panel_csv(const std::string& path, double psi) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    return parse_panel_csv(in, psi);
}

inline void write_panel_csv(std::ostream& os, const PanelDataset& ds) {
    os << "subject_id,spell_index,y,d";
    for (std::size_t k = 0; k < ds.p; ++k) os << ",x" << k + 1;
    os << '\n';
    for (const auto& s : ds.subjects) {
        for (std::size_t j = 0; j < s.spells.size(); ++j) {
            const auto& sp = s.spells[j];
            os << detail::quote_field(s.id) << ',' << j + 1 << ',' << detail::format_real(snap_to_grid(sp.y, ds.psi))
               << ',' << sp.d;
            for (double v : sp.x) os << ',' << detail::format_real(v);
            os << '\n';
        }
    }
}

inline void write_panel_csv(const std::string& path, const PanelDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot write '" + path + "'");
    write_panel_csv(out, ds);
    if (!out) throw validation_error("write to '" + path + "' failed");
}

// 64-bit FNV-1a of the dataset's CSV form, in hex.
inline std::string data_hash(const PanelDataset& ds) {
    std::ostringstream os;
    os << "psi=" << detail::format_real(ds.psi) << '\n';
    write_panel_csv(os, ds);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- configuration records ----

inline nlohmann::json to_json(const FitConfig& c) {
    return {{"max_iters", c.max_iters}, {"grad_tol", c.grad_tol},   {"rel_f_tol", c.rel_f_tol},
            {"unit_mean_frailty", c.unit_mean_frailty}, {"frailty", c.frailty}, {"memory", c.memory}};
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw validation_error("fit config must be a JSON object");
    FitConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "max_iters") c.max_iters = v.get<std::size_t>();
            else if (key == "grad_tol") c.grad_tol = v.get<double>();
            else if (key == "rel_f_tol") c.rel_f_tol = v.get<double>();
            else if (key == "unit_mean_frailty") c.unit_mean_frailty = v.get<bool>();
            else if (key == "frailty") c.frailty = v.get<bool>();
            else if (key == "memory") c.memory = v.get<std::size_t>();
            else throw validation_error("unknown fit config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("fit config: ") + e.what());
    }
    c.validate();
    return c;
}

inline FitConfig read_fit_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    try {
        return fit_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw validation_error("'" + path + "': " + e.what());
    }
}

inline nlohmann::json to_json(const SimConfig& c) {
    nlohmann::json hz;
    if (c.hazard.kind() == HazardSpec::Kind::log_hazard)
        hz = {{"kind", "log_hazard"}, {"c", c.hazard.c()}};
    else
        hz = {{"kind", "sqrt_sin"}, {"c1", c.hazard.c1()}, {"c2", c.hazard.c2()}};
    nlohmann::json fr;
    if (c.frailty.kind == FrailtySpec::Kind::gamma)
        fr = {{"kind", "gamma"}, {"shape", c.frailty.shape}, {"rate", c.frailty.rate}};
    else
        fr = {{"kind", "two_point"}, {"p", c.frailty.p}, {"v1", c.frailty.v1}, {"v2", c.frailty.v2}};
    nlohmann::json j = {{"n", c.n},         {"J", c.J},         {"hazard", hz},         {"frailty", fr},
                        {"beta", c.beta},   {"psi", c.psi},     {"y_max", c.y_max},     {"seed", c.seed},
                        {"covariates", "iid standard normal"}};
    if (c.nonlinear) {
        j["nonlinear"] = {{"c2", c.nonlinear->c2},
                          {"c3", c.nonlinear->c3},
                          {"beta4", c.nonlinear->beta4},
                          {"log_floor", c.nonlinear->log_floor}};
    } else {
        j["nonlinear"] = nullptr;
    }
    return j;
}

// ---- model file ----

struct ModelFile {
    FittedModel model;
    std::optional<std::uint64_t> seed;
    std::string data_hash;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json extra = nlohmann::json::object(); // unknown top-level fields, kept verbatim
};

namespace detail {
inline nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
} // namespace detail

inline nlohmann::json to_json(const ModelFile& f) {
    const FittedModel& m = f.model;
    nlohmann::json j = f.extra.is_object() ? f.extra : nlohmann::json::object();
    std::vector<int> mask;
    for (bool b : m.baseline.free_mask()) mask.push_back(b ? 1 : 0);
    j["format_version"] = model_format_version;
    j["psi"] = m.psi();
    j["beta"] = m.beta;
    j["delta"] = m.baseline.increments();
    j["free_mask"] = mask;
    j["alpha"] = m.alpha;
    j["kappa"] = m.kappa;
    j["normalization"] = to_string(m.normalization);
    j["loglik"] = detail::number_or_null(m.loglik);
    j["converged"] = m.converged;
    j["iterations"] = m.iterations;
    j["clamp_count"] = m.clamp_count;
    j["grad_inf_norm"] = detail::number_or_null(m.grad_inf_norm);
    j["stop_reason"] = m.stop_reason;
    nlohmann::json prov = {{"data_hash", f.data_hash}, {"config", f.config}};
    prov["seed"] = f.seed ? nlohmann::json(*f.seed) : nlohmann::json(nullptr);
    j["provenance"] = prov;
    return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw validation_error("model file must hold a JSON object");
    if (!j.contains("format_version")) throw validation_error("model file has no format_version");
    const auto& ver = j["format_version"];
    if (!ver.is_number_integer() || ver.get<long>() != model_format_version) {
        throw validation_error("model format_version " + ver.dump() + " is not supported (expected " +
                               std::to_string(model_format_version) + ")");
    }
    static const std::vector<std::string> known = {
        "format_version", "psi",        "beta",        "delta",        "free_mask",     "alpha",
        "kappa",          "normalization", "loglik",   "converged",    "iterations",    "clamp_count",
        "grad_inf_norm",  "stop_reason", "provenance"};
    ModelFile f;
    try {
        for (const char* need : {"psi", "beta", "delta", "free_mask", "alpha", "kappa", "normalization", "loglik",
                                 "converged", "iterations"}) {
            if (!j.contains(need)) throw validation_error(std::string("model file is missing '") + need + "'");
        }
        FittedModel& m = f.model;
        const double psi = j["psi"].get<double>();
        m.beta = j["beta"].get<std::vector<double>>();
        const auto delta = j["delta"].get<std::vector<double>>();
        std::vector<bool> mask;
        for (const auto& b : j["free_mask"]) {
            if (b.is_boolean()) mask.push_back(b.get<bool>());
            else mask.push_back(b.get<int>() != 0);
        }
        m.baseline = DiscreteBaselineHazard(psi, delta, mask);
        m.alpha = j["alpha"].get<double>();
        m.kappa = j["kappa"].get<double>();
        if (!(m.alpha > 0.0) || !std::isfinite(m.alpha)) throw validation_error("model alpha must be positive");
        if (!(m.kappa > 0.0) || !std::isfinite(m.kappa)) throw validation_error("model kappa must be positive");
        m.normalization = parse_normalization(j["normalization"].get<std::string>());
        if (m.normalization == Normalization::unit_mean && m.alpha != m.kappa) {
            throw validation_error("unit_mean model must have kappa == alpha");
        }
        m.loglik = j["loglik"].is_null() ? std::nan("") : j["loglik"].get<double>();
        m.converged = j["converged"].get<bool>();
        m.iterations = j["iterations"].get<std::size_t>();
        if (j.contains("clamp_count")) m.clamp_count = j["clamp_count"].get<std::size_t>();
        if (j.contains("grad_inf_norm") && !j["grad_inf_norm"].is_null())
            m.grad_inf_norm = j["grad_inf_norm"].get<double>();
        if (j.contains("stop_reason")) m.stop_reason = j["stop_reason"].get<std::string>();
        for (double b : m.beta)
            if (!std::isfinite(b)) throw validation_error("model beta must be finite");
        if (j.contains("provenance")) {
            const auto& p = j["provenance"];
            if (p.contains("seed") && !p["seed"].is_null()) f.seed = p["seed"].get<std::uint64_t>();
            if (p.contains("data_hash")) f.data_hash = p["data_hash"].get<std::string>();
            if (p.contains("config")) f.config = p["config"];
        }
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed model file: ") + e.what());
    }
    for (const auto& [key, v] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) f.extra[key] = v;
    return f;
}

inline void write_model(const std::string& path, const ModelFile& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("cannot write '" + path + "'");
    out << to_json(f).dump(2) << '\n';
    if (!out) throw validation_error("write to '" + path + "' failed");
}

inline ModelFile read_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw validation_error("'" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

} // namespace ffpsurv
