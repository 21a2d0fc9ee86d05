#include "core/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace nfarec {

namespace {

struct KeyEntry {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for key '" + key + "': " + v);
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        unsigned long long u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return u;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer for key '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("invalid boolean for key '" + key + "': " + v);
}

const std::vector<KeyEntry>& registry() {
    static const std::vector<KeyEntry> entries = [] {
        std::vector<KeyEntry> r;
        auto add_str = [&r](const std::string& name, std::string RunConfig::* field) {
            r.push_back({name, [field](const RunConfig& c) { return c.*field; },
                         [field](RunConfig& c, const std::string& v) { c.*field = v; }});
        };
        auto add_dbl = [&r](const std::string& name, double RunConfig::* field) {
            r.push_back({name, [field](const RunConfig& c) { return fmt_double(c.*field); },
                         [field, name](RunConfig& c, const std::string& v) {
                             c.*field = parse_double(name, v);
                         }});
        };
        auto add_sz = [&r](const std::string& name, std::size_t RunConfig::* field) {
            r.push_back({name, [field](const RunConfig& c) { return std::to_string(c.*field); },
                         [field, name](RunConfig& c, const std::string& v) {
                             c.*field = static_cast<std::size_t>(parse_uint(name, v));
                         }});
        };
        auto add_u64 = [&r](const std::string& name, std::uint64_t RunConfig::* field) {
            r.push_back({name, [field](const RunConfig& c) { return std::to_string(c.*field); },
                         [field, name](RunConfig& c, const std::string& v) {
                             c.*field = parse_uint(name, v);
                         }});
        };
        auto add_bool = [&r](const std::string& name, bool RunConfig::* field) {
            r.push_back({name,
                         [field](const RunConfig& c) { return c.*field ? std::string("true")
                                                                        : std::string("false"); },
                         [field, name](RunConfig& c, const std::string& v) {
                             c.*field = parse_bool(name, v);
                         }});
        };

        add_str("delimiter", &RunConfig::delimiter);
        add_str("columns", &RunConfig::columns);
        add_dbl("rating_min", &RunConfig::rating_min);
        add_dbl("rating_max", &RunConfig::rating_max);
        add_dbl("rating_threshold", &RunConfig::rating_threshold);
        add_sz("min_interactions", &RunConfig::min_interactions);
        add_dbl("split_train", &RunConfig::split_train);
        add_dbl("split_val", &RunConfig::split_val);
        add_dbl("split_test", &RunConfig::split_test);
        add_bool("self_loops", &RunConfig::self_loops);
        add_bool("lenient", &RunConfig::lenient);
        add_sz("d_m", &RunConfig::d_m);
        add_sz("d_ff", &RunConfig::d_ff);
        add_sz("l1_layers", &RunConfig::l1_layers);
        add_sz("l2_layers", &RunConfig::l2_layers);
        add_sz("order", &RunConfig::order);
        add_dbl("beta1", &RunConfig::beta1);
        add_dbl("beta2", &RunConfig::beta2);
        add_dbl("delta", &RunConfig::delta);
        add_dbl("delta2", &RunConfig::delta2);
        add_sz("n_mci", &RunConfig::n_mci);
        add_bool("attention_only", &RunConfig::attention_only);
        add_bool("sinusoidal_time", &RunConfig::sinusoidal_time);
        add_str("seq_pooling", &RunConfig::seq_pooling);
        add_bool("strict_literal_hgc", &RunConfig::strict_literal_hgc);
        add_sz("intensity_hidden", &RunConfig::intensity_hidden);
        add_dbl("learning_rate", &RunConfig::learning_rate);
        add_sz("epochs", &RunConfig::epochs);
        add_u64("seed", &RunConfig::seed);
        add_dbl("adam_beta1", &RunConfig::adam_beta1);
        add_dbl("adam_beta2", &RunConfig::adam_beta2);
        add_dbl("adam_eps", &RunConfig::adam_eps);
        add_dbl("target_frac", &RunConfig::target_frac);
        add_bool("positives_only_loss", &RunConfig::positives_only_loss);
        add_bool("no_seq", &RunConfig::no_seq);
        add_bool("no_gra1", &RunConfig::no_gra1);
        add_bool("no_gra2", &RunConfig::no_gra2);
        add_bool("no_masking", &RunConfig::no_masking);
        add_sz("threads", &RunConfig::threads);
        add_sz("max_seq_len", &RunConfig::max_seq_len);
        add_sz("eval_every", &RunConfig::eval_every);
        add_bool("exclude_train_items", &RunConfig::exclude_train_items);
        add_bool("positive_only_relevance", &RunConfig::positive_only_relevance);
        return r;
    }();
    return entries;
}

const KeyEntry& find_key(const std::string& key) {
    for (const auto& e : registry()) {
        if (e.name == key) return e;
    }
    throw ConfigError("unknown configuration key: '" + key + "'");
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.name);
    return out;
}

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    find_key(key).set(cfg, value);
}

std::string config_get(const RunConfig& cfg, const std::string& key) {
    return find_key(key).get(cfg);
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        config_set(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config(os.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& e : registry()) os << e.name << " = " << e.get(cfg) << "\n";
    return os.str();
}

void apply_preset(RunConfig& cfg, const std::string& name) {
    auto set = [&](double b1, double b2, double d, double d2, std::size_t min_n) {
        cfg.beta1 = b1;
        cfg.beta2 = b2;
        cfg.delta = d;
        cfg.delta2 = d2;
        cfg.min_interactions = min_n;
    };
    if (name == "yelp2023") {
        set(0.12, 1.49, 1.2, 1e-3, 15);
    } else if (name == "movielens") {
        set(1.47, 3.99, 1.2, 0.5, 1);
    } else if (name == "recipes") {
        set(0.12, 3.81, 1.0, 1e-5, 10);
    } else if (name == "books") {
        set(0.25, 3.53, 1.2, 1e-5, 25);
    } else if (name == "beauty") {
        set(0.62, 3.74, 1.2, 1e-3, 5);
    } else {
        throw ConfigError("unknown preset: '" + name + "'");
    }
}

std::vector<std::string> preset_names() {
    return {"yelp2023", "movielens", "recipes", "books", "beauty"};
}

PrepareOptions prepare_options(const RunConfig& cfg) {
    PrepareOptions o;
    std::string delim = cfg.delimiter;
    if (delim == "tab" || delim == "\\t") delim = "\t";
    o.schema.delimiter = delim;
    o.schema.rating_min = cfg.rating_min;
    o.schema.rating_max = cfg.rating_max;
    o.schema.lenient = cfg.lenient;

    // columns is a permutation of user,item,rating,timestamp
    std::istringstream is(cfg.columns);
    std::string tok;
    std::size_t pos = 0;
    bool seen[4] = {false, false, false, false};
    while (std::getline(is, tok, ',')) {
        if (tok == "user") {
            o.schema.user_col = pos;
            seen[0] = true;
        } else if (tok == "item") {
            o.schema.item_col = pos;
            seen[1] = true;
        } else if (tok == "rating") {
            o.schema.rating_col = pos;
            seen[2] = true;
        } else if (tok == "timestamp") {
            o.schema.timestamp_col = pos;
            seen[3] = true;
        } else {
            throw ConfigError("unknown column name: '" + tok + "'");
        }
        ++pos;
    }
    if (!(seen[0] && seen[1] && seen[2] && seen[3])) {
        throw ConfigError("columns must name user, item, rating and timestamp");
    }
    o.rating_threshold = cfg.rating_threshold;
    o.min_interactions = cfg.min_interactions;
    o.split_train = cfg.split_train;
    o.split_val = cfg.split_val;
    o.split_test = cfg.split_test;
    o.orders = cfg.order;
    o.self_loops = cfg.self_loops;
    return o;
}

SeqOptions seq_options(const RunConfig& cfg) {
    SeqOptions o;
    o.d_m = cfg.d_m;
    o.d_ff = cfg.d_ff;
    o.n_layers = cfg.l1_layers;
    o.masking = !cfg.no_masking;
    o.attention_only = cfg.attention_only;
    if (cfg.seq_pooling == "layer-mean") {
        o.layer_mean_pooling = true;
    } else if (cfg.seq_pooling == "final") {
        o.layer_mean_pooling = false;
    } else {
        throw ConfigError("seq_pooling must be 'layer-mean' or 'final', got '" + cfg.seq_pooling +
                          "'");
    }
    o.sinusoidal_time = cfg.sinusoidal_time;
    o.intensity_hidden = cfg.intensity_hidden;
    return o;
}

HgcOptions hgc_options(const RunConfig& cfg) {
    HgcOptions o;
    o.n_layers = cfg.l2_layers;
    o.strict_literal = cfg.strict_literal_hgc;
    return o;
}

}  // namespace nfarec
