#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "core/data.hpp"
#include "doctest.h"

using namespace nfarec;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream f(path);
    f << content;
    return path;
}

InteractionRecord rec(const std::string& u, const std::string& i, double r, std::int64_t t) {
    return {u, i, r, t};
}

// brute-force Eq-style correlation oracle: plain triple loops over the dense
// zeta matrix, no shared code with the implementation
std::vector<Mat> brute_force_correlation(const Mat& zeta, std::size_t orders) {
    std::size_t n_users = zeta.rows, n_items = zeta.cols;
    std::vector<Mat> xs;
    Mat x0(n_items, n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        for (std::size_t j = 0; j < n_items; ++j) {
            double s = 0.0;
            for (std::size_t u = 0; u < n_users; ++u) s += zeta.at(u, i) * zeta.at(u, j);
            x0.at(i, j) = s / static_cast<double>(n_users);
        }
    }
    xs.push_back(x0);
    for (std::size_t l = 1; l < orders; ++l) {
        const Mat& prev = xs.back();
        Mat next(n_items, n_items);
        for (std::size_t i = 0; i < n_items; ++i) {
            for (std::size_t j = 0; j < n_items; ++j) {
                double s = 0.0;
                for (std::size_t v = 0; v < n_items; ++v) s += prev.at(i, v) * prev.at(v, j);
                next.at(i, j) = s / static_cast<double>(n_items);
            }
        }
        xs.push_back(next);
    }
    return xs;
}

std::vector<InteractionRecord> random_log(Rng& rng, std::size_t n_users, std::size_t n_items,
                                          std::size_t n_records) {
    std::uniform_int_distribution<std::size_t> du(0, n_users - 1), di(0, n_items - 1);
    std::uniform_int_distribution<int> dr(1, 5);
    std::vector<InteractionRecord> out;
    for (std::size_t k = 0; k < n_records; ++k) {
        out.push_back(rec("u" + std::to_string(du(rng)), "i" + std::to_string(di(rng)),
                          static_cast<double>(dr(rng)), static_cast<std::int64_t>(1000 + k)));
    }
    return out;
}

}  // namespace

TEST_CASE("load_interactions parses well-formed files") {
    auto path = write_temp("nfa_t_ok.csv",
                           "u1,i1,5,100\n"
                           "u1,i2,2,200\n"
                           "u2,i1,4,150\n"
                           "u2,i3,1,300\n");
    LoadSchema schema;
    auto recs = load_interactions(path, schema);
    REQUIRE(recs.size() == 4);
    CHECK(recs[0].user_id == "u1");
    CHECK(recs[3].rating == 1.0);
    CHECK(recs[1].timestamp == 200);
}

TEST_CASE("load_interactions lenient mode skips and reports bad rows") {
    auto path = write_temp("nfa_t_bad.csv",
                           "u1,i1,5,100\n"
                           "u1,i2,2,notatime\n"
                           "u2,i1,4,150\n"
                           "u2,i3,1,300\n");
    LoadSchema strict;
    CHECK_THROWS(load_interactions(path, strict));

    LoadSchema lenient;
    lenient.lenient = true;
    LoadReport report;
    auto recs = load_interactions(path, lenient, &report);
    CHECK(recs.size() == 3);
    CHECK(report.skipped == 1);
    CHECK(report.parsed == 3);
}

TEST_CASE("load_interactions handles :: separated input with column override") {
    auto path = write_temp("nfa_t_ml.dat",
                           "1::10::5::978300760\n"
                           "1::11::3::978302109\n"
                           "2::10::4::978301968\n"
                           "2::12::1::978300275\n"
                           "3::11::2::978824291\n");
    LoadSchema schema;
    schema.delimiter = "::";
    auto recs = load_interactions(path, schema);
    REQUIRE(recs.size() == 5);
    CHECK(recs[0].item_id == "10");
    CHECK(recs[4].timestamp == 978824291);
}

TEST_CASE("load_interactions errors name the offending input") {
    LoadSchema schema;
    CHECK_THROWS_WITH_AS(load_interactions("/nonexistent/raw.csv", schema),
                         doctest::Contains("/nonexistent/raw.csv"), IoError);

    auto path = write_temp("nfa_t_short.csv", "u1,i1,5\n");
    CHECK_THROWS_AS(load_interactions(path, schema), SchemaError);
}

TEST_CASE("polarity threshold is inclusive at 4") {
    CHECK(polarity_of(4.0, 4.0) == 1);
    CHECK(polarity_of(3.0, 4.0) == -1);
    CHECK(polarity_of(5.0, 4.0) == 1);
}

TEST_CASE("filter_min_interactions basic cases") {
    std::vector<InteractionRecord> dense;
    for (int u = 0; u < 3; ++u) {
        for (int i = 0; i < 3; ++i) {
            dense.push_back(rec("u" + std::to_string(u), "i" + std::to_string(i), 5, u * 10 + i));
        }
    }
    CHECK(filter_min_interactions(dense, 3).size() == dense.size());

    auto sparse = dense;
    sparse.push_back(rec("u9", "i0", 5, 99));
    sparse.push_back(rec("u9", "i1", 5, 100));
    auto filtered = filter_min_interactions(sparse, 3);
    CHECK(filtered.size() == dense.size());
    for (const auto& r : filtered) CHECK(r.user_id != "u9");
}

TEST_CASE("filter_min_interactions cascades removals to a fixed point") {
    // u0 has only 2 interactions; removing u0 drops i0 to 2, which drops u1's
    // count via i0's removal, which then drops i1 too
    std::vector<InteractionRecord> log;
    log.push_back(rec("u0", "i0", 5, 1));
    log.push_back(rec("u0", "i1", 5, 2));
    log.push_back(rec("u1", "i0", 5, 3));
    log.push_back(rec("u1", "i1", 5, 4));
    log.push_back(rec("u1", "i2", 5, 5));
    for (int k = 0; k < 3; ++k) {
        log.push_back(rec("u2", "i2", 5, 10 + k));
        log.push_back(rec("u3", "i2", 5, 20 + k));
        log.push_back(rec("u2", "i3", 5, 30 + k));
        log.push_back(rec("u3", "i3", 5, 40 + k));
    }
    auto filtered = filter_min_interactions(log, 3);
    std::set<std::string> users, items;
    for (const auto& r : filtered) {
        users.insert(r.user_id);
        items.insert(r.item_id);
    }
    CHECK(users == std::set<std::string>{"u2", "u3"});
    CHECK(items == std::set<std::string>{"i2", "i3"});
    // re-running is a no-op (fixed point)
    CHECK(filter_min_interactions(filtered, 3).size() == filtered.size());
}

TEST_CASE("filter_min_interactions random logs reach fixed points") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto log = random_log(rng, 8, 8, 40);
        auto once = filter_min_interactions(log, 3);
        auto twice = filter_min_interactions(once, 3);
        REQUIRE(once.size() == twice.size());
    }
}

TEST_CASE("filter_min_interactions empty result raises") {
    std::vector<InteractionRecord> log = {rec("u0", "i0", 5, 1)};
    CHECK_THROWS_AS(filter_min_interactions(log, 5), EmptinessError);
}

TEST_CASE("feedback graph polarity, ordering and time normalization") {
    std::vector<InteractionRecord> log = {
        rec("a", "x", 5, 300), rec("a", "y", 2, 100), rec("a", "z", 4, 200),
        rec("b", "x", 1, 50),
    };
    auto g = build_feedback_graph(log, 4.0);
    REQUIRE(g.n_users == 2);
    REQUIRE(g.n_items == 3);
    std::size_t a = g.user_index.at("a"), b = g.user_index.at("b");
    std::size_t x = g.item_index.at("x"), y = g.item_index.at("y");
    CHECK(g.zeta(a, x) == 1);
    CHECK(g.zeta(a, y) == -1);
    CHECK(g.zeta(b, x) == -1);
    CHECK(g.zeta(b, g.item_index.at("z")) == 0);

    // per-user chronological order
    REQUIRE(g.sequences[a].size() == 3);
    CHECK(g.sequences[a][0].timestamp == 100);
    CHECK(g.sequences[a][2].timestamp == 300);
    // normalized times span [1, 2]
    CHECK(g.sequences[a][0].t_norm == doctest::Approx(1.0));
    CHECK(g.sequences[a][2].t_norm == doctest::Approx(2.0));
    CHECK(g.sequences[a][1].t_norm == doctest::Approx(1.5));
    // single-event user degenerates to t_norm = 1
    CHECK(g.sequences[b][0].t_norm == doctest::Approx(1.0));
}

TEST_CASE("zeta ties resolve to the most recent interaction") {
    std::vector<InteractionRecord> log = {rec("a", "x", 5, 100), rec("a", "x", 1, 200)};
    auto g = build_feedback_graph(log, 4.0);
    CHECK(g.zeta(0, 0) == -1);
}

TEST_CASE("chronological_split floor arithmetic") {
    std::vector<InteractionRecord> log;
    for (int j = 0; j < 10; ++j) log.push_back(rec("u", "i" + std::to_string(j), 5, j));
    auto g = build_feedback_graph(log, 4.0);
    auto split = chronological_split(g);
    CHECK(split.train.sequences[0].size() == 7);
    CHECK(split.validation.sequences[0].size() == 1);
    CHECK(split.test.sequences[0].size() == 2);

    std::vector<InteractionRecord> log3;
    for (int j = 0; j < 3; ++j) log3.push_back(rec("u", "i" + std::to_string(j), 5, j));
    auto s3 = chronological_split(build_feedback_graph(log3, 4.0));
    CHECK(s3.train.sequences[0].size() == 2);
    CHECK(s3.validation.sequences[0].size() == 0);
    CHECK(s3.test.sequences[0].size() == 1);

    std::vector<InteractionRecord> log1 = {rec("u", "i0", 5, 0)};
    auto s1 = chronological_split(build_feedback_graph(log1, 4.0));
    CHECK(s1.train.sequences[0].size() == 1);
    CHECK(s1.report.train_only_users.size() == 1);
}

TEST_CASE("chronological_split never reorders time across parts") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = build_feedback_graph(random_log(rng, 6, 10, 60), 4.0);
        auto split = chronological_split(g);
        for (std::size_t u = 0; u < g.n_users; ++u) {
            std::size_t total = split.train.sequences[u].size() +
                                split.validation.sequences[u].size() +
                                split.test.sequences[u].size();
            REQUIRE(total == g.sequences[u].size());
            auto last_of = [](const std::vector<Interaction>& s) {
                return s.empty() ? std::numeric_limits<std::int64_t>::min() : s.back().timestamp;
            };
            auto first_of = [](const std::vector<Interaction>& s) {
                return s.empty() ? std::numeric_limits<std::int64_t>::max() : s.front().timestamp;
            };
            CHECK(last_of(split.train.sequences[u]) <= first_of(split.validation.sequences[u]));
            CHECK(last_of(split.train.sequences[u]) <= first_of(split.test.sequences[u]));
            CHECK(last_of(split.validation.sequences[u]) <= first_of(split.test.sequences[u]));
        }
    }
}

TEST_CASE("chronological_split validates its ratios") {
    auto g = build_feedback_graph({rec("u", "i0", 5, 0)}, 4.0);
    CHECK_THROWS_AS(chronological_split(g, 0.5, 0.5, 0.2), DomainError);
    CHECK_THROWS_AS(chronological_split(g, 0.8, -0.1, 0.3), DomainError);
}

TEST_CASE("item adjacency: shared-user condition with self-loops") {
    auto g = build_feedback_graph({rec("u", "a", 5, 0), rec("u", "b", 2, 1)}, 4.0);
    Mat A = build_item_adjacency(g);
    for (double v : A.a) CHECK(v == 1.0);

    Mat A_noself = build_item_adjacency(g, false);
    CHECK(A_noself.at(0, 0) == 0.0);
    CHECK(A_noself.at(0, 1) == 1.0);

    auto g2 = build_feedback_graph(
        {rec("u1", "a", 5, 0), rec("u1", "b", 5, 1), rec("u2", "c", 5, 2), rec("u2", "d", 5, 3)},
        4.0);
    Mat B = build_item_adjacency(g2);
    std::size_t a = g2.item_index.at("a"), c = g2.item_index.at("c");
    CHECK(B.at(a, c) == 0.0);
    CHECK(B.at(c, a) == 0.0);
}

TEST_CASE("item adjacency matches brute force on random logs") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = build_feedback_graph(random_log(rng, 6, 8, 30), 4.0);
        Mat A = build_item_adjacency(g);
        for (std::size_t i = 0; i < g.n_items; ++i) {
            for (std::size_t j = 0; j < g.n_items; ++j) {
                double want = 0.0;
                for (std::size_t u = 0; u < g.n_users; ++u) {
                    if (g.zeta(u, i) != 0 && g.zeta(u, j) != 0) want = 1.0;
                }
                REQUIRE(A.at(i, j) == want);
            }
        }
    }
}

TEST_CASE("normalize_adjacency closed forms") {
    Mat A(2, 2);
    A.at(0, 1) = A.at(1, 0) = 1.0;
    Mat Ah = normalize_adjacency(A);
    CHECK(Ah.at(0, 1) == doctest::Approx(1.0));
    CHECK(Ah.at(0, 0) == 0.0);

    Mat B(2, 2, 1.0);
    Mat Bh = normalize_adjacency(B);
    for (double v : Bh.a) CHECK(v == doctest::Approx(0.5));

    Mat C(3, 3);
    C.at(0, 0) = C.at(0, 1) = C.at(1, 0) = C.at(1, 1) = 1.0;  // item 2 isolated
    Mat Ch = normalize_adjacency(C);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(Ch.at(2, j) == 0.0);
        CHECK(Ch.at(j, 2) == 0.0);
    }
}

TEST_CASE("feedback correlation closed forms") {
    auto g1 = build_feedback_graph({rec("u", "i", 5, 0), rec("u", "j", 5, 1)}, 4.0);
    auto c1 = build_feedback_correlation(g1, 1);
    CHECK(c1.X_orders[0].at(0, 1) == doctest::Approx(1.0));

    auto g2 = build_feedback_graph(
        {rec("u1", "i", 5, 0), rec("u1", "j", 5, 1), rec("u2", "i", 5, 2), rec("u2", "j", 1, 3)},
        4.0);
    auto c2 = build_feedback_correlation(g2, 1);
    std::size_t i = g2.item_index.at("i"), j = g2.item_index.at("j");
    CHECK(c2.X_orders[0].at(i, j) == doctest::Approx(0.0));

    CHECK_THROWS_AS(build_feedback_correlation(g1, 0), DomainError);
}

TEST_CASE("feedback correlation equals brute force, all orders, random instances") {
    Rng rng(29);
    for (int trial = 0; trial < 25; ++trial) {
        auto g = build_feedback_graph(random_log(rng, 8, 8, 35), 4.0);
        Mat zeta = g.zeta_matrix();
        for (std::size_t orders = 1; orders <= 4; ++orders) {
            auto got = build_feedback_correlation(g, orders);
            auto want = brute_force_correlation(zeta, orders);
            REQUIRE(got.X_orders.size() == orders);
            Mat want_hat(g.n_items, g.n_items);
            for (std::size_t l = 0; l < orders; ++l) {
                for (std::size_t k = 0; k < want_hat.numel(); ++k) {
                    REQUIRE(std::abs(got.X_orders[l].a[k] - want[l].a[k]) < 1e-12);
                    want_hat.a[k] += want[l].a[k];
                }
            }
            for (std::size_t k = 0; k < want_hat.numel(); ++k) {
                REQUIRE(std::abs(got.X_hat.a[k] - want_hat.a[k]) < 1e-12);
                REQUIRE(got.X_masked.a[k] == std::max(got.X_hat.a[k], 0.0));
                REQUIRE(got.X_masked.a[k] >= 0.0);
            }
            // first-order entries bounded by 1, symmetry at every order
            for (std::size_t r = 0; r < g.n_items; ++r) {
                for (std::size_t c = 0; c < g.n_items; ++c) {
                    REQUIRE(std::abs(got.X_orders[0].at(r, c)) <= 1.0 + 1e-12);
                    for (std::size_t l = 0; l < orders; ++l) {
                        REQUIRE(got.X_orders[l].at(r, c) ==
                                doctest::Approx(got.X_orders[l].at(c, r)).epsilon(1e-12));
                    }
                }
            }
        }
    }
}

TEST_CASE("correlation is invariant under a global feedback sign flip") {
    Rng rng(37);
    auto log = random_log(rng, 6, 7, 30);
    auto flipped = log;
    for (auto& r : flipped) r.rating = r.rating >= 4.0 ? 1.0 : 5.0;
    auto c1 = build_feedback_correlation(build_feedback_graph(log, 4.0), 3);
    auto c2 = build_feedback_correlation(build_feedback_graph(flipped, 4.0), 3);
    for (std::size_t l = 0; l < 3; ++l) {
        REQUIRE(c1.X_orders[l].a == c2.X_orders[l].a);  // bitwise
    }
    REQUIRE(c1.X_hat.a == c2.X_hat.a);
    REQUIRE(c1.X_masked.a == c2.X_masked.a);
}

TEST_CASE("correlation is equivariant under relabeling") {
    Rng rng(43);
    auto log = random_log(rng, 5, 6, 25);
    auto g = build_feedback_graph(log, 4.0);
    auto c = build_feedback_correlation(g, 1);

    // user relabeling: reverse insertion order of user ids
    auto relabeled = log;
    for (auto& r : relabeled) r.user_id = "w" + r.user_id;
    std::reverse(relabeled.begin(), relabeled.end());
    // keep chronological content identical per user by restoring timestamps order
    std::sort(relabeled.begin(), relabeled.end(),
              [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    auto g2 = build_feedback_graph(relabeled, 4.0);
    auto c2 = build_feedback_correlation(g2, 1);
    // item index maps may differ; compare through the id maps
    for (const auto& [id_i, i1] : g.item_index) {
        for (const auto& [id_j, j1] : g.item_index) {
            std::size_t i2 = g2.item_index.at(id_i), j2 = g2.item_index.at(id_j);
            REQUIRE(c.X_orders[0].at(i1, j1) ==
                    doctest::Approx(c2.X_orders[0].at(i2, j2)).epsilon(1e-12));
        }
    }
}

TEST_CASE("correlation block file round-trips") {
    Rng rng(47);
    auto g = build_feedback_graph(random_log(rng, 5, 6, 25), 4.0);
    auto c = build_feedback_correlation(g, 2);
    auto path = (std::filesystem::temp_directory_path() / "nfa_corr.bin").string();
    write_correlation_block(path, c.X_hat, c.X_masked, c.order_count);
    Mat xh, xm;
    std::size_t oc = 0;
    read_correlation_block(path, xh, xm, oc);
    CHECK(oc == 2);
    CHECK(xh == c.X_hat);
    CHECK(xm == c.X_masked);

    // magic check
    std::ofstream bad(path, std::ios::binary);
    bad << "WRONGMAG";
    bad.close();
    CHECK_THROWS_AS(read_correlation_block(path, xh, xm, oc), IoError);
}

TEST_CASE("prepare_dataset produces stats and a loadable bundle") {
    Rng rng(53);
    auto log = random_log(rng, 8, 10, 80);
    std::ostringstream raw;
    for (const auto& r : log) {
        raw << r.user_id << "," << r.item_id << "," << r.rating << "," << r.timestamp << "\n";
    }
    auto path = write_temp("nfa_prep.csv", raw.str());

    PrepareOptions opts;
    opts.min_interactions = 2;
    PrepareStats stats;
    auto bundle = prepare_dataset(path, opts, &stats);
    CHECK(stats.n_users > 0);
    CHECK(stats.pos_percent + stats.neg_percent == doctest::Approx(100.0));
    CHECK(stats.text().find("Perc.") != std::string::npos);

    auto dir = (std::filesystem::temp_directory_path() / "nfa_bundle").string();
    std::filesystem::remove_all(dir);
    save_bundle(bundle, dir);
    auto loaded = load_bundle(dir);
    CHECK(loaded.fingerprint == bundle.fingerprint);
    CHECK(loaded.full.n_users == bundle.full.n_users);
    CHECK(loaded.full.n_items == bundle.full.n_items);
    REQUIRE(loaded.split.train.sequences.size() == bundle.split.train.sequences.size());
    for (std::size_t u = 0; u < bundle.full.n_users; ++u) {
        REQUIRE(loaded.split.train.sequences[u].size() == bundle.split.train.sequences[u].size());
        for (std::size_t j = 0; j < bundle.split.train.sequences[u].size(); ++j) {
            CHECK(loaded.split.train.sequences[u][j].item == bundle.split.train.sequences[u][j].item);
            CHECK(loaded.split.train.sequences[u][j].t_norm ==
                  bundle.split.train.sequences[u][j].t_norm);
        }
    }
    CHECK(loaded.corr.X_masked == bundle.corr.X_masked);
    CHECK(loaded.corr.A_hat == bundle.corr.A_hat);
}
