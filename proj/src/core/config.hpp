#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/data.hpp"
#include "core/graph_encoder.hpp"
#include "core/seq_encoder.hpp"

namespace nfarec {

// Flat key = value run configuration. Precedence is handled by the caller:
// flags > file > preset > built-in default.
struct RunConfig {
    // data / prepare
    std::string delimiter = ",";
    std::string columns = "user,item,rating,timestamp";
    double rating_min = 1.0;
    double rating_max = 5.0;
    double rating_threshold = 4.0;
    std::size_t min_interactions = 1;
    double split_train = 0.7;
    double split_val = 0.1;
    double split_test = 0.2;
    bool self_loops = true;
    bool lenient = false;

    // model
    std::size_t d_m = 64;
    std::size_t d_ff = 128;
    std::size_t l1_layers = 1;
    std::size_t l2_layers = 1;
    std::size_t order = 2;
    double beta1 = 1.0;
    double beta2 = 1.0;
    double delta = 1.0;
    double delta2 = 1e-3;
    std::size_t n_mci = 20;
    bool attention_only = false;
    bool sinusoidal_time = false;
    std::string seq_pooling = "layer-mean";  // or "final"
    bool strict_literal_hgc = false;
    std::size_t intensity_hidden = 0;  // 0 = linear intensity head

    // training
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::uint64_t seed = 42;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double target_frac = 0.2;  // tail share of the training sequence used as targets
    bool positives_only_loss = false;
    bool no_seq = false;
    bool no_gra1 = false;
    bool no_gra2 = false;
    bool no_masking = false;
    std::size_t threads = 1;
    std::size_t max_seq_len = 0;  // 0 = unlimited
    std::size_t eval_every = 1;

    // evaluation
    bool exclude_train_items = true;
    bool positive_only_relevance = false;
};

std::vector<std::string> config_keys();
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);
std::string config_get(const RunConfig& cfg, const std::string& key);

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// Per-dataset weights as published; unknown name is a config error.
void apply_preset(RunConfig& cfg, const std::string& name);
std::vector<std::string> preset_names();

PrepareOptions prepare_options(const RunConfig& cfg);
SeqOptions seq_options(const RunConfig& cfg);
HgcOptions hgc_options(const RunConfig& cfg);

}  // namespace nfarec
