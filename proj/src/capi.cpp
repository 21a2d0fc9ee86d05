#include "nfarec/nfarec.h"

#include <cstring>
#include <exception>
#include <sstream>
#include <string>

#include "core/config.hpp"
#include "core/data.hpp"
#include "core/eval.hpp"
#include "core/model.hpp"

using namespace nfarec;

struct nfa_config {
    RunConfig cfg;
};
struct nfa_dataset {
    DatasetBundle bundle;
};
struct nfa_model {
    Model model;
};

namespace {

thread_local std::string g_last_error;

nfa_status fail(nfa_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

nfa_status from_exception() {
    try {
        throw;
    } catch (const Error& e) {
        return fail(static_cast<nfa_status>(static_cast<int>(e.code())), e.what());
    } catch (const std::exception& e) {
        return fail(NFA_ERR_USAGE, e.what());
    } catch (...) {
        return fail(NFA_ERR_USAGE, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

nfa_status require(bool ok, const char* what) {
    return ok ? NFA_OK : fail(NFA_ERR_USAGE, std::string("null argument: ") + what);
}

}  // namespace

extern "C" {

const char* nfa_last_error(void) { return g_last_error.c_str(); }

void nfa_string_free(char* s) { delete[] s; }

nfa_status nfa_config_create(nfa_config** out) {
    if (auto st = require(out, "out"); st != NFA_OK) return st;
    *out = new nfa_config{};
    return NFA_OK;
}

nfa_status nfa_config_load(const char* path, nfa_config** out) {
    if (auto st = require(path && out, "path/out"); st != NFA_OK) return st;
    try {
        *out = new nfa_config{load_config_file(path)};
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_config_set(nfa_config* cfg, const char* key, const char* value) {
    if (auto st = require(cfg && key && value, "cfg/key/value"); st != NFA_OK) return st;
    try {
        config_set(cfg->cfg, key, value);
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_config_get(const nfa_config* cfg, const char* key, char** out_value) {
    if (auto st = require(cfg && key && out_value, "cfg/key/out_value"); st != NFA_OK) return st;
    try {
        *out_value = dup_string(config_get(cfg->cfg, key));
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_config_preset(nfa_config* cfg, const char* preset) {
    if (auto st = require(cfg && preset, "cfg/preset"); st != NFA_OK) return st;
    try {
        apply_preset(cfg->cfg, preset);
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_config_dump(const nfa_config* cfg, char** out_text) {
    if (auto st = require(cfg && out_text, "cfg/out_text"); st != NFA_OK) return st;
    *out_text = dup_string(serialize_config(cfg->cfg));
    return NFA_OK;
}

void nfa_config_free(nfa_config* cfg) { delete cfg; }

nfa_status nfa_prepare(const nfa_config* cfg, const char* raw_path, const char* bundle_dir,
                       char** out_stats) {
    if (auto st = require(cfg && raw_path && bundle_dir, "cfg/raw_path/bundle_dir"); st != NFA_OK) {
        return st;
    }
    try {
        PrepareStats stats;
        DatasetBundle bundle = prepare_dataset(raw_path, prepare_options(cfg->cfg), &stats);
        save_bundle(bundle, bundle_dir);
        if (out_stats) *out_stats = dup_string(stats.text());
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_dataset_open(const char* bundle_dir, nfa_dataset** out) {
    if (auto st = require(bundle_dir && out, "bundle_dir/out"); st != NFA_OK) return st;
    try {
        *out = new nfa_dataset{load_bundle(bundle_dir)};
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

void nfa_dataset_free(nfa_dataset* ds) { delete ds; }

nfa_status nfa_train(const nfa_config* cfg, const nfa_dataset* ds, const char* checkpoint_path,
                     char** out_log) {
    if (auto st = require(cfg && ds && checkpoint_path, "cfg/ds/checkpoint_path"); st != NFA_OK) {
        return st;
    }
    try {
        FitResult fr = fit(ds->bundle, cfg->cfg);
        save_checkpoint(fr.best, checkpoint_path);
        if (out_log) *out_log = dup_string(format_epoch_log(fr.log));
        if (fr.diverged) {
            return fail(NFA_ERR_DIVERGED,
                        "training loss left the finite range; checkpoint holds the last "
                        "finite state");
        }
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_model_open(const char* checkpoint_path, nfa_model** out) {
    if (auto st = require(checkpoint_path && out, "checkpoint_path/out"); st != NFA_OK) return st;
    try {
        *out = new nfa_model{load_checkpoint(checkpoint_path)};
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

void nfa_model_free(nfa_model* model) { delete model; }

nfa_status nfa_evaluate(const nfa_model* model, const nfa_dataset* ds, const char* split,
                        int exclude_train_items, char** out_report, char** out_machine) {
    if (auto st = require(model && ds && split, "model/ds/split"); st != NFA_OK) return st;
    try {
        EvalPolicy policy;
        policy.exclude_train_items = exclude_train_items != 0;
        policy.positive_only_relevance = model->model.cfg.positive_only_relevance;
        MetricReport rep = evaluate(model->model, ds->bundle, split, policy);
        if (out_report) *out_report = dup_string(rep.table());
        if (out_machine) *out_machine = dup_string(rep.machine());
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_ablate(const nfa_config* cfg, const nfa_dataset* ds, char** out_table) {
    if (auto st = require(cfg && ds && out_table, "cfg/ds/out_table"); st != NFA_OK) return st;
    try {
        AblationResult res = ablation_suite(ds->bundle, cfg->cfg);
        *out_table = dup_string(res.table());
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_predict(const nfa_model* model, const nfa_dataset* ds, const char* const* user_ids,
                       size_t n, size_t k, int exclude_train_items, char** out_text) {
    if (auto st = require(model && ds && user_ids && out_text, "model/ds/user_ids/out_text");
        st != NFA_OK) {
        return st;
    }
    try {
        std::vector<std::string> ids(user_ids, user_ids + n);
        EvalPolicy policy;
        policy.exclude_train_items = exclude_train_items != 0;
        PredictResult res = predict_top_k(model->model, ds->bundle, ids, k, policy);
        std::ostringstream os;
        os.precision(17);
        for (const auto& p : res.predictions) {
            for (const auto& [item, score] : p.items) {
                os << p.user_id << "\t" << item << "\t" << score << "\n";
            }
        }
        for (const auto& uid : res.unknown_users) os << "unknown\t" << uid << "\n";
        *out_text = dup_string(os.str());
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

nfa_status nfa_export(const nfa_model* model, const nfa_dataset* ds, const char* out_dir) {
    if (auto st = require(model && ds && out_dir, "model/ds/out_dir"); st != NFA_OK) return st;
    try {
        export_representations(model->model, ds->bundle, out_dir);
        return NFA_OK;
    } catch (...) {
        return from_exception();
    }
}

}  // extern "C"
