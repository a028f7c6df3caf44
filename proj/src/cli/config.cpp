#include "knobrec/cli.hpp"

#include "knobrec/errors.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace knobrec::cli {

using nlohmann::json;

json default_config() {
    const data::SyntheticSpec synth;
    return {
        {"seed", 1},
        {"out", "out"},
        {"data",
         {{"source", "csv"},
          {"ratings", ""},
          {"items", ""},
          {"prepared", ""},
          {"min_rating", 4.0},
          {"min_interactions", 5},
          {"max_factors", 0},
          {"n_validation", 200},
          {"n_test", 400},
          {"holdout_fraction", 0.2}}},
        {"synthetic",
         {{"n_users", synth.n_users},
          {"n_items", synth.n_items},
          {"n_factors", synth.n_factors},
          {"secondary_factor_probability", synth.secondary_factor_probability},
          {"affinity_concentration", synth.affinity_concentration},
          {"min_interactions", synth.min_interactions},
          {"max_interactions", synth.max_interactions},
          {"disliked_fraction", synth.disliked_fraction},
          {"seed", synth.seed}}},
        {"model",
         {{"variant", "beta_vae"},
          {"activation", "tanh"},
          {"hidden1", 600},
          {"hidden2", 600},
          {"latent", 200},
          {"beta", 1.0},
          {"beta_grid", json::array()},
          {"alpha", 1.0},
          {"gamma", 1.0},
          {"gamma_ss", 1.0},
          {"supervision_fraction", 0.0},
          {"anneal_steps", 0},
          {"anneal_fraction", 0.2}}},
        {"train",
         {{"epochs", 50},
          {"batch_size", 500},
          {"learning_rate", 1e-3},
          {"threads", 1},
          {"state_every", 1},
          {"stop_after", 0}}},
        {"eval",
         {{"k", 100},
          {"n_users", 100},
          {"n_steps", 50},
          {"n_bins", 20},
          {"against_latent", false},
          {"mig_all_users", false},
          {"checkpoint", ""}}},
        {"serve", {{"host", "127.0.0.1"}, {"port", 8080}, {"checkpoint", ""}}},
    };
}

// ------------------------------------------------------------------ parsing

namespace {

struct Cursor {
    const std::string& s;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }
    bool at_end() const { return pos >= s.size(); }
    char peek() const { return at_end() ? '\0' : s[pos]; }
};

json parse_value(Cursor& c);

json parse_string(Cursor& c) {
    ++c.pos;
    std::string out;
    while (!c.at_end() && c.peek() != '"') {
        char ch = c.s[c.pos++];
        if (ch == '\\') {
            if (c.at_end()) break;
            const char e = c.s[c.pos++];
            switch (e) {
            case 'n': ch = '\n'; break;
            case 't': ch = '\t'; break;
            case '"': ch = '"'; break;
            case '\\': ch = '\\'; break;
            case '/': ch = '/'; break;
            default: throw ConfigError(std::string("unsupported escape \\") + e);
            }
        }
        out.push_back(ch);
    }
    if (c.at_end()) throw ConfigError("unterminated string");
    ++c.pos;
    return out;
}

json parse_array(Cursor& c) {
    ++c.pos;
    json out = json::array();
    c.skip_ws();
    if (c.peek() == ']') {
        ++c.pos;
        return out;
    }
    while (true) {
        c.skip_ws();
        out.push_back(parse_value(c));
        c.skip_ws();
        if (c.peek() == ',') {
            ++c.pos;
            c.skip_ws();
            if (c.peek() == ']') {
                ++c.pos;
                return out;
            }
            continue;
        }
        if (c.peek() == ']') {
            ++c.pos;
            return out;
        }
        throw ConfigError("expected ',' or ']' in array");
    }
}

json parse_scalar(Cursor& c) {
    const std::size_t begin = c.pos;
    while (!c.at_end() && c.peek() != ',' && c.peek() != ']' && c.peek() != ' ' && c.peek() != '\t') ++c.pos;
    const std::string token = c.s.substr(begin, c.pos - begin);
    if (token == "true") return true;
    if (token == "false") return false;
    if (token.empty()) throw ConfigError("missing value");

    const bool is_float = token.find_first_of(".eE") != std::string::npos || token == "inf" || token == "nan";
    char* end = nullptr;
    if (!is_float) {
        errno = 0;
        const long long v = std::strtoll(token.c_str(), &end, 10);
        if (*end == '\0' && errno == 0) return v;
    } else {
        const double v = std::strtod(token.c_str(), &end);
        if (*end == '\0') return v;
    }
    throw ConfigError("cannot parse value '" + token + "' (strings need double quotes)");
}

json parse_value(Cursor& c) {
    c.skip_ws();
    if (c.peek() == '"') return parse_string(c);
    if (c.peek() == '[') return parse_array(c);
    return parse_scalar(c);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char ch : k) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-') return false;
    }
    return true;
}

std::string kind_of(const json& v) {
    if (v.is_boolean()) return "a boolean";
    if (v.is_number_integer()) return "an integer";
    if (v.is_number()) return "a number";
    if (v.is_string()) return "a string";
    if (v.is_array()) return "an array";
    return "a table";
}

json coerce(const json& def, const json& value, const std::string& where) {
    if (def.is_number_integer()) {
        if (value.is_number_integer()) return value;
        throw ConfigError(where + " expects an integer, got " + kind_of(value));
    }
    if (def.is_number_float()) {
        if (value.is_number()) return value.get<double>();
        throw ConfigError(where + " expects a number, got " + kind_of(value));
    }
    if (def.is_boolean() && value.is_boolean()) return value;
    if (def.is_string() && value.is_string()) return value;
    if (def.is_array() && value.is_array()) {
        json out = json::array();
        for (const auto& v : value) {
            if (!v.is_number()) throw ConfigError(where + " expects an array of numbers");
            out.push_back(v.get<double>());
        }
        return out;
    }
    throw ConfigError(where + " expects " + kind_of(def) + ", got " + kind_of(value));
}

} // namespace

json parse_toml_value(const std::string& text) {
    const std::string t = trim(text);
    Cursor c{t};
    json v = parse_value(c);
    c.skip_ws();
    if (!c.at_end()) throw ConfigError("trailing characters after value: " + t);
    return v;
}

json parse_toml(const std::string& text, const std::string& source) {
    json out = json::object();
    json* table = &out;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        try {
            const std::string line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                if (!valid_key(section)) throw ConfigError("invalid section name '" + section + "'");
                if (out.contains(section)) throw ConfigError("duplicate section [" + section + "]");
                out[section] = json::object();
                table = &out[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (!valid_key(key)) throw ConfigError("invalid key '" + key + "'");
            if (table->contains(key)) throw ConfigError("duplicate key '" + key + "'");
            (*table)[key] = parse_toml_value(line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return out;
}

std::string to_toml(const json& config) {
    std::ostringstream os;
    for (const auto& [k, v] : config.items()) {
        if (!v.is_object()) os << k << " = " << v.dump() << '\n';
    }
    for (const auto& [k, v] : config.items()) {
        if (!v.is_object()) continue;
        os << "\n[" << k << "]\n";
        for (const auto& [kk, vv] : v.items()) os << kk << " = " << vv.dump() << '\n';
    }
    return os.str();
}

void merge_config(json& config, const json& overrides, const std::string& source) {
    for (const auto& [k, v] : overrides.items()) {
        if (!config.contains(k)) throw ConfigError(source + ": unknown key '" + k + "'");
        json& target = config[k];
        if (target.is_object()) {
            if (!v.is_object()) throw ConfigError(source + ": '" + k + "' must be a [section]");
            for (const auto& [kk, vv] : v.items()) {
                if (!target.contains(kk)) throw ConfigError(source + ": unknown key '" + k + "." + kk + "'");
                target[kk] = coerce(target[kk], vv, source + ": " + k + "." + kk);
            }
        } else {
            target = coerce(target, v, source + ": " + k);
        }
    }
}

void apply_set(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = trim(assignment.substr(0, eq));
    const std::string text = trim(assignment.substr(eq + 1));
    json value;
    try {
        value = parse_toml_value(text);
    } catch (const ConfigError&) {
        value = text;  // bare strings are convenient on the command line
    }
    json overlay;
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
        overlay[key] = value;
    } else {
        overlay[key.substr(0, dot)][key.substr(dot + 1)] = value;
    }
    merge_config(config, overlay, "--set " + key);
}

json resolve_config(const ConfigSources& sources) {
    json config = default_config();
    if (sources.file) {
        std::ifstream in(*sources.file);
        if (!in) throw ConfigError("cannot read config file " + sources.file->string());
        std::ostringstream ss;
        ss << in.rdbuf();
        merge_config(config, parse_toml(ss.str(), sources.file->string()), sources.file->string());
    }
    for (const auto& s : sources.sets) apply_set(config, s);
    if (sources.seed) config["seed"] = *sources.seed;
    if (sources.out) config["out"] = *sources.out;
    return config;
}

// ------------------------------------------------------------ typed views

data::FilterOptions filter_options(const json& config) {
    const auto& d = config.at("data");
    data::FilterOptions f;
    f.min_rating = d.at("min_rating");
    f.min_interactions = d.at("min_interactions");
    f.max_factors = d.at("max_factors");
    return f;
}

data::SyntheticSpec synthetic_spec(const json& config) {
    const auto& s = config.at("synthetic");
    data::SyntheticSpec spec;
    spec.n_users = s.at("n_users");
    spec.n_items = s.at("n_items");
    spec.n_factors = s.at("n_factors");
    spec.secondary_factor_probability = s.at("secondary_factor_probability");
    spec.affinity_concentration = s.at("affinity_concentration");
    spec.min_interactions = s.at("min_interactions");
    spec.max_interactions = s.at("max_interactions");
    spec.disliked_fraction = s.at("disliked_fraction");
    spec.seed = s.at("seed");
    spec.validate();
    return spec;
}

std::vector<double> beta_values(const json& config) {
    const auto& grid = config.at("model").at("beta_grid");
    if (grid.empty()) return {config.at("model").at("beta").get<double>()};
    return grid.get<std::vector<double>>();
}

model::TrainConfig train_config(const json& config, std::size_t n_items, double beta) {
    const auto& m = config.at("model");
    const auto& t = config.at("train");
    model::TrainConfig c;
    c.dims.n_items = n_items;
    c.dims.hidden1 = m.at("hidden1");
    c.dims.hidden2 = m.at("hidden2");
    c.dims.latent = m.at("latent");
    c.activation = model::parse_activation(m.at("activation"));
    c.loss.variant = model::parse_variant(m.at("variant"));
    c.loss.beta = beta;
    c.loss.alpha = m.at("alpha");
    c.loss.gamma = m.at("gamma");
    c.loss.supervision_fraction = m.at("supervision_fraction");
    c.loss.gamma_ss = c.loss.supervision_fraction > 0.0 ? m.at("gamma_ss").get<double>() : 0.0;
    c.loss.anneal_steps = m.at("anneal_steps");
    c.anneal_fraction = m.at("anneal_fraction");
    c.epochs = t.at("epochs");
    c.batch_size = t.at("batch_size");
    c.adam.learning_rate = t.at("learning_rate");
    c.eval_k = config.at("eval").at("k");
    c.seed = config.at("seed");
    c.loss.validate();
    return c;
}

metrics::EvalOptions eval_options(const json& config) {
    const auto& e = config.at("eval");
    metrics::EvalOptions o;
    o.controllability.k = e.at("k");
    o.controllability.n_users = e.at("n_users");
    o.controllability.n_steps = e.at("n_steps");
    o.controllability.seed = config.at("seed");
    o.controllability.against_latent = e.at("against_latent");
    o.n_bins = e.at("n_bins");
    o.mig_all_users = e.at("mig_all_users");
    return o;
}

std::filesystem::path output_dir(const json& config) { return config.at("out").get<std::string>(); }

std::filesystem::path prepared_dir(const json& config) {
    const std::string p = config.at("data").at("prepared");
    return p.empty() ? output_dir(config) : std::filesystem::path(p);
}

} // namespace knobrec::cli
