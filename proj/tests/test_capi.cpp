#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "nfarec/nfarec.h"

namespace {

struct Str {
    char* p = nullptr;
    ~Str() { nfa_string_free(p); }
    std::string s() const { return p ? p : ""; }
};

std::string temp_path(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p.string();
}

// small log with repeated favorites per user so training has signal
std::string write_raw(const std::string& name) {
    auto path = temp_path(name);
    std::ofstream f(path);
    for (int u = 0; u < 6; ++u) {
        long t = 1000 + u;
        for (int r = 0; r < 4; ++r) {
            for (int k = 0; k < 2; ++k) {
                int item = (u * 2 + k) % 8;
                double rating = (u == 0 && k == 1 && r == 0) ? 1.0 : 5.0;
                f << "u" << u << ",i" << item << "," << rating << "," << t << "\n";
                t += 60;
            }
        }
    }
    return path;
}

}  // namespace

TEST_CASE("config create/set/get round trip") {
    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);

    Str v;
    REQUIRE(nfa_config_get(cfg, "d_m", &v.p) == NFA_OK);
    CHECK(v.s() == "64");

    REQUIRE(nfa_config_set(cfg, "d_m", "16") == NFA_OK);
    Str v2;
    REQUIRE(nfa_config_get(cfg, "d_m", &v2.p) == NFA_OK);
    CHECK(v2.s() == "16");

    REQUIRE(nfa_config_set(cfg, "beta1", "0.33") == NFA_OK);
    Str v3;
    REQUIRE(nfa_config_get(cfg, "beta1", &v3.p) == NFA_OK);
    CHECK(std::stod(v3.s()) == doctest::Approx(0.33));

    nfa_config_free(cfg);
}

TEST_CASE("unknown config key fails and the message names the key") {
    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);
    CHECK(nfa_config_set(cfg, "no_such_knob", "1") == NFA_ERR_CONFIG);
    std::string msg = nfa_last_error();
    CHECK(msg.find("no_such_knob") != std::string::npos);
    CHECK(nfa_config_get(cfg, "no_such_knob", nullptr) == NFA_ERR_USAGE);
    nfa_config_free(cfg);
}

TEST_CASE("dump / load round trip is idempotent") {
    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "order", "3") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "learning_rate", "0.0125") == NFA_OK);
    Str dump1;
    REQUIRE(nfa_config_dump(cfg, &dump1.p) == NFA_OK);

    auto path = temp_path("nfa_capi_cfg.txt");
    std::ofstream(path) << dump1.s();
    nfa_config* cfg2 = nullptr;
    REQUIRE(nfa_config_load(path.c_str(), &cfg2) == NFA_OK);
    Str dump2;
    REQUIRE(nfa_config_dump(cfg2, &dump2.p) == NFA_OK);
    CHECK(dump1.s() == dump2.s());

    Str v;
    REQUIRE(nfa_config_get(cfg2, "order", &v.p) == NFA_OK);
    CHECK(v.s() == "3");

    nfa_config_free(cfg);
    nfa_config_free(cfg2);
}

TEST_CASE("presets install the published hyper-parameter rows") {
    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);
    REQUIRE(nfa_config_preset(cfg, "yelp2023") == NFA_OK);
    auto get = [&](const char* k) {
        Str v;
        REQUIRE(nfa_config_get(cfg, k, &v.p) == NFA_OK);
        return std::stod(v.s());
    };
    CHECK(get("beta1") == doctest::Approx(0.12));
    CHECK(get("beta2") == doctest::Approx(1.49));
    CHECK(get("delta") == doctest::Approx(1.2));
    CHECK(get("delta2") == doctest::Approx(1e-3));
    CHECK(get("min_interactions") == doctest::Approx(15));

    REQUIRE(nfa_config_preset(cfg, "movielens") == NFA_OK);
    CHECK(get("beta1") == doctest::Approx(1.47));
    CHECK(get("beta2") == doctest::Approx(3.99));
    CHECK(get("min_interactions") == doctest::Approx(1));

    CHECK(nfa_config_preset(cfg, "unknown_corpus") == NFA_ERR_CONFIG);
    nfa_config_free(cfg);
}

TEST_CASE("null arguments are usage errors") {
    CHECK(nfa_config_create(nullptr) == NFA_ERR_USAGE);
    CHECK(nfa_config_set(nullptr, "d_m", "8") == NFA_ERR_USAGE);
    CHECK(nfa_dataset_open(nullptr, nullptr) == NFA_ERR_USAGE);
    CHECK(nfa_train(nullptr, nullptr, nullptr, nullptr) == NFA_ERR_USAGE);
    CHECK(nfa_model_open(nullptr, nullptr) == NFA_ERR_USAGE);
    std::string msg = nfa_last_error();
    CHECK(!msg.empty());
}

TEST_CASE("missing files map to io status with the path in the message") {
    nfa_config* cfg2 = nullptr;
    CHECK(nfa_config_load("/nonexistent/cfg.txt", &cfg2) == NFA_ERR_IO);
    CHECK(std::string(nfa_last_error()).find("/nonexistent/cfg.txt") != std::string::npos);

    nfa_dataset* ds = nullptr;
    CHECK(nfa_dataset_open("/nonexistent/bundle", &ds) != NFA_OK);

    nfa_model* m = nullptr;
    CHECK(nfa_model_open("/nonexistent/model.ckpt", &m) == NFA_ERR_IO);
}

TEST_CASE("full pipeline: prepare, train, evaluate, predict, export") {
    auto raw = write_raw("nfa_capi_raw.csv");
    auto bundle_dir = temp_path("nfa_capi_bundle");
    auto ckpt = temp_path("nfa_capi_model.ckpt");

    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "d_m", "8") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "d_ff", "12") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "epochs", "3") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "n_mci", "4") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "learning_rate", "0.05") == NFA_OK);

    Str stats;
    REQUIRE(nfa_prepare(cfg, raw.c_str(), bundle_dir.c_str(), &stats.p) == NFA_OK);
    CHECK(stats.s().find("#Users") != std::string::npos);

    nfa_dataset* ds = nullptr;
    REQUIRE(nfa_dataset_open(bundle_dir.c_str(), &ds) == NFA_OK);

    Str log;
    REQUIRE(nfa_train(cfg, ds, ckpt.c_str(), &log.p) == NFA_OK);
    // three tab-separated epoch lines
    int lines = 0;
    for (char c : log.s()) lines += c == '\n';
    CHECK(lines == 3);
    CHECK(std::filesystem::exists(ckpt));

    nfa_model* model = nullptr;
    REQUIRE(nfa_model_open(ckpt.c_str(), &model) == NFA_OK);

    Str report, machine;
    REQUIRE(nfa_evaluate(model, ds, "test", 0, &report.p, &machine.p) == NFA_OK);
    CHECK(report.s().find("Recall") != std::string::npos);
    CHECK(machine.s().find("ndcg@20\t") != std::string::npos);

    const char* users[] = {"u0", "ghost", "u2"};
    Str pred;
    REQUIRE(nfa_predict(model, ds, users, 3, 4, 0, &pred.p) == NFA_OK);
    int pred_lines = 0, unknown_lines = 0;
    std::string text = pred.s(), line;
    for (std::size_t pos = 0; pos < text.size();) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        line = text.substr(pos, nl - pos);
        if (line.rfind("unknown\t", 0) == 0) {
            ++unknown_lines;
            CHECK(line == "unknown\tghost");
        } else if (!line.empty()) {
            ++pred_lines;
        }
        pos = nl + 1;
    }
    CHECK(pred_lines == 8);  // 2 known users x k=4
    CHECK(unknown_lines == 1);

    auto out_dir = temp_path("nfa_capi_export");
    REQUIRE(nfa_export(model, ds, out_dir.c_str()) == NFA_OK);
    CHECK(std::filesystem::exists(out_dir + "/item_representations.tsv"));

    CHECK(nfa_evaluate(model, ds, "lunch", 0, &report.p, nullptr) == NFA_ERR_CONFIG);

    nfa_model_free(model);
    nfa_dataset_free(ds);
    nfa_config_free(cfg);
}

TEST_CASE("evaluating against a different dataset reports provenance") {
    auto raw1 = write_raw("nfa_capi_rawA.csv");
    // second corpus differs by one rating value
    auto raw2 = temp_path("nfa_capi_rawB.csv");
    {
        std::ifstream in(raw1);
        std::ofstream out(raw2);
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (first) {
                out << "u0,i0,2.0,900\n";
                first = false;
            }
            out << line << "\n";
        }
    }
    auto dirA = temp_path("nfa_capi_bundleA");
    auto dirB = temp_path("nfa_capi_bundleB");
    auto ckpt = temp_path("nfa_capi_modelA.ckpt");

    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "d_m", "8") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "d_ff", "12") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "epochs", "1") == NFA_OK);

    REQUIRE(nfa_prepare(cfg, raw1.c_str(), dirA.c_str(), nullptr) == NFA_OK);
    REQUIRE(nfa_prepare(cfg, raw2.c_str(), dirB.c_str(), nullptr) == NFA_OK);

    nfa_dataset *dsA = nullptr, *dsB = nullptr;
    REQUIRE(nfa_dataset_open(dirA.c_str(), &dsA) == NFA_OK);
    REQUIRE(nfa_dataset_open(dirB.c_str(), &dsB) == NFA_OK);

    REQUIRE(nfa_train(cfg, dsA, ckpt.c_str(), nullptr) == NFA_OK);
    nfa_model* model = nullptr;
    REQUIRE(nfa_model_open(ckpt.c_str(), &model) == NFA_OK);

    Str rep;
    CHECK(nfa_evaluate(model, dsB, "test", 1, &rep.p, nullptr) == NFA_ERR_PROVENANCE);
    CHECK(std::string(nfa_last_error()).find("fingerprint") != std::string::npos);
    CHECK(nfa_evaluate(model, dsA, "test", 1, &rep.p, nullptr) == NFA_OK);

    nfa_model_free(model);
    nfa_dataset_free(dsA);
    nfa_dataset_free(dsB);
    nfa_config_free(cfg);
}

TEST_CASE("training twice with the same seed yields identical logs") {
    auto raw = write_raw("nfa_capi_rawC.csv");
    auto dir = temp_path("nfa_capi_bundleC");
    nfa_config* cfg = nullptr;
    REQUIRE(nfa_config_create(&cfg) == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "d_m", "8") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "d_ff", "12") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "epochs", "2") == NFA_OK);
    REQUIRE(nfa_config_set(cfg, "seed", "99") == NFA_OK);
    REQUIRE(nfa_prepare(cfg, raw.c_str(), dir.c_str(), nullptr) == NFA_OK);
    nfa_dataset* ds = nullptr;
    REQUIRE(nfa_dataset_open(dir.c_str(), &ds) == NFA_OK);

    Str log1, log2;
    REQUIRE(nfa_train(cfg, ds, temp_path("nfa_capi_c1.ckpt").c_str(), &log1.p) == NFA_OK);
    REQUIRE(nfa_train(cfg, ds, temp_path("nfa_capi_c2.ckpt").c_str(), &log2.p) == NFA_OK);
    CHECK(log1.s() == log2.s());

    nfa_dataset_free(ds);
    nfa_config_free(cfg);
}
