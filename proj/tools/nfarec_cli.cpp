// Command-line front end. Talks to the core exclusively through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nfarec/nfarec.h"

namespace {

int exit_code_for(nfa_status st) {
    switch (st) {
        case NFA_OK:
            return 0;
        case NFA_ERR_DIVERGED:
            return 2;
        case NFA_ERR_PROVENANCE:
            return 3;
        default:
            return 1;
    }
}

int report_failure(nfa_status st) {
    std::cerr << "error: " << nfa_last_error() << "\n";
    return exit_code_for(st);
}

struct OwnedString {
    char* s = nullptr;
    ~OwnedString() { nfa_string_free(s); }
    char** out() { return &s; }
    std::string str() const { return s ? std::string(s) : std::string(); }
};

struct ConfigHandle {
    nfa_config* cfg = nullptr;
    ~ConfigHandle() { nfa_config_free(cfg); }
};

struct DatasetHandle {
    nfa_dataset* ds = nullptr;
    ~DatasetHandle() { nfa_dataset_free(ds); }
};

struct ModelHandle {
    nfa_model* model = nullptr;
    ~ModelHandle() { nfa_model_free(model); }
};

struct GlobalOpts {
    std::string config_path;
    std::string preset;
    std::string seed;
    std::string order;
    std::string threads;
    bool positives_only_loss = false;
    bool attention_only = false;
    bool no_seq = false;
    bool no_gra1 = false;
    bool no_gra2 = false;
    bool no_masking = false;
    std::vector<std::string> sets;  // extra key=value overrides
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// precedence: built-in defaults < preset < config file < explicit flags
nfa_status build_config(const GlobalOpts& g, ConfigHandle& out) {
    nfa_status st = nfa_config_create(&out.cfg);
    if (st != NFA_OK) return st;
    if (!g.preset.empty()) {
        if ((st = nfa_config_preset(out.cfg, g.preset.c_str())) != NFA_OK) return st;
    }
    if (!g.config_path.empty()) {
        std::ifstream f(g.config_path);
        if (!f) {
            std::cerr << "error: cannot open config file: " << g.config_path << "\n";
            return NFA_ERR_IO;
        }
        std::string line;
        while (std::getline(f, line)) {
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos) {
                std::cerr << "error: config line is not 'key = value': " << t << "\n";
                return NFA_ERR_CONFIG;
            }
            std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
            if ((st = nfa_config_set(out.cfg, key.c_str(), value.c_str())) != NFA_OK) return st;
        }
    }
    auto set = [&](const char* key, const std::string& value) {
        return nfa_config_set(out.cfg, key, value.c_str());
    };
    if (!g.seed.empty() && (st = set("seed", g.seed)) != NFA_OK) return st;
    if (!g.order.empty() && (st = set("order", g.order)) != NFA_OK) return st;
    if (!g.threads.empty() && (st = set("threads", g.threads)) != NFA_OK) return st;
    if (g.positives_only_loss && (st = set("positives_only_loss", "true")) != NFA_OK) return st;
    if (g.attention_only && (st = set("attention_only", "true")) != NFA_OK) return st;
    if (g.no_seq && (st = set("no_seq", "true")) != NFA_OK) return st;
    if (g.no_gra1 && (st = set("no_gra1", "true")) != NFA_OK) return st;
    if (g.no_gra2 && (st = set("no_gra2", "true")) != NFA_OK) return st;
    if (g.no_masking && (st = set("no_masking", "true")) != NFA_OK) return st;
    for (const std::string& kv : g.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --set expects key=value, got: " << kv << "\n";
            return NFA_ERR_USAGE;
        }
        if ((st = set(trim(kv.substr(0, eq)).c_str(), trim(kv.substr(eq + 1)))) != NFA_OK) {
            return st;
        }
    }
    return NFA_OK;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"negative-feedback-aware sequential recommender"};
    app.require_subcommand(1);
    app.fallthrough(true);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "key = value configuration file");
    app.add_option("--preset", g.preset, "hyperparameter preset")
        ->check(CLI::IsMember({"yelp2023", "movielens", "recipes", "books", "beauty"}));
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--order", g.order, "feedback correlation order L");
    app.add_option("--threads", g.threads, "worker thread count");
    app.add_flag("--positives-only-loss", g.positives_only_loss,
                 "positives-only form of the ranking loss");
    app.add_flag("--attention-only", g.attention_only, "drop the encoder feed-forward sublayer");
    app.add_flag("--no-seq", g.no_seq, "disable the sequential term");
    app.add_flag("--no-gra1", g.no_gra1, "disable the structural term");
    app.add_flag("--no-gra2", g.no_gra2, "disable the feedback-aware term");
    app.add_flag("--no-masking", g.no_masking, "disable causal attention masking");
    app.add_option("--set", g.sets, "extra key=value override (repeatable)");

    std::string raw_path, bundle_dir, checkpoint = "model.ckpt", split = "test", out_dir;
    std::size_t top_k = 10;
    bool include_train = false;
    std::vector<std::string> users;

    auto* prepare = app.add_subcommand("prepare", "parse, filter, split and precompute a dataset");
    prepare->add_option("raw", raw_path, "raw interaction file")->required();
    prepare->add_option("--out", bundle_dir, "output bundle directory")->required();

    auto* train = app.add_subcommand("train", "fit the model on a prepared dataset");
    train->add_option("--data", bundle_dir, "dataset bundle directory")->required();
    train->add_option("--out", checkpoint, "checkpoint output path");

    auto* evaluate = app.add_subcommand("evaluate", "ranking and polarity metrics on a split");
    evaluate->add_option("--data", bundle_dir, "dataset bundle directory")->required();
    evaluate->add_option("--model", checkpoint, "checkpoint path")->required();
    evaluate->add_option("--split", split, "validation or test")
        ->check(CLI::IsMember({"validation", "val", "test"}));
    evaluate->add_flag("--include-train-items", include_train,
                       "keep already-interacted items in the ranking");

    auto* ablate = app.add_subcommand("ablate", "component and correlation-order ablations");
    ablate->add_option("--data", bundle_dir, "dataset bundle directory")->required();

    auto* predict = app.add_subcommand("predict", "top-K recommendations for named users");
    predict->add_option("--data", bundle_dir, "dataset bundle directory")->required();
    predict->add_option("--model", checkpoint, "checkpoint path")->required();
    predict->add_option("--user", users, "user id (repeatable)")->required();
    predict->add_option("--k", top_k, "list length");
    predict->add_flag("--include-train-items", include_train,
                      "keep already-interacted items in the ranking");

    auto* exp = app.add_subcommand("export", "write learned representations as TSV");
    exp->add_option("--data", bundle_dir, "dataset bundle directory")->required();
    exp->add_option("--model", checkpoint, "checkpoint path")->required();
    exp->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    ConfigHandle cfg;
    if (nfa_status st = build_config(g, cfg); st != NFA_OK) {
        if (*nfa_last_error()) std::cerr << "error: " << nfa_last_error() << "\n";
        return exit_code_for(st);
    }

    if (prepare->parsed()) {
        OwnedString stats;
        nfa_status st = nfa_prepare(cfg.cfg, raw_path.c_str(), bundle_dir.c_str(), stats.out());
        if (st != NFA_OK) return report_failure(st);
        std::cout << stats.str();
        return 0;
    }

    DatasetHandle ds;
    if (nfa_status st = nfa_dataset_open(bundle_dir.c_str(), &ds.ds); st != NFA_OK) {
        return report_failure(st);
    }

    if (train->parsed()) {
        OwnedString log;
        nfa_status st = nfa_train(cfg.cfg, ds.ds, checkpoint.c_str(), log.out());
        if (st != NFA_OK && st != NFA_ERR_DIVERGED) return report_failure(st);
        std::cout << log.str();
        if (st == NFA_ERR_DIVERGED) {
            std::cerr << "error: " << nfa_last_error() << "\n";
            return 2;
        }
        return 0;
    }

    if (ablate->parsed()) {
        OwnedString table;
        nfa_status st = nfa_ablate(cfg.cfg, ds.ds, table.out());
        if (st != NFA_OK) return report_failure(st);
        std::cout << table.str();
        return 0;
    }

    ModelHandle model;
    if (nfa_status st = nfa_model_open(checkpoint.c_str(), &model.model); st != NFA_OK) {
        return report_failure(st);
    }

    if (evaluate->parsed()) {
        OwnedString report, machine;
        nfa_status st = nfa_evaluate(model.model, ds.ds, split.c_str(), include_train ? 0 : 1,
                                     report.out(), machine.out());
        if (st != NFA_OK) return report_failure(st);
        std::cout << report.str() << "\n" << machine.str();
        return 0;
    }

    if (predict->parsed()) {
        std::vector<const char*> ids;
        ids.reserve(users.size());
        for (const auto& u : users) ids.push_back(u.c_str());
        OwnedString text;
        nfa_status st = nfa_predict(model.model, ds.ds, ids.data(), ids.size(), top_k,
                                    include_train ? 0 : 1, text.out());
        if (st != NFA_OK) return report_failure(st);
        std::cout << text.str();
        return 0;
    }

    if (exp->parsed()) {
        nfa_status st = nfa_export(model.model, ds.ds, out_dir.c_str());
        if (st != NFA_OK) return report_failure(st);
        std::cout << "wrote representations to " << out_dir << "\n";
        return 0;
    }

    return 1;
}
