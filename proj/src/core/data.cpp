#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace nfarec {

namespace {

std::vector<std::string> split_line(const std::string& line, const std::string& delim) {
    std::vector<std::string> out;
    if (delim.empty()) throw SchemaError("empty delimiter");
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(delim, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + delim.size();
    }
    return out;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.precision(17);
    return f;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    if (!f) throw IoError("cannot open for reading: " + path);
    return f;
}

}  // namespace

std::vector<InteractionRecord> load_interactions(const std::string& path, const LoadSchema& schema,
                                                 LoadReport* report) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open interaction file: " + path);
    std::size_t need = std::max({schema.user_col, schema.item_col, schema.rating_col,
                                 schema.timestamp_col}) + 1;
    std::vector<InteractionRecord> out;
    LoadReport rep;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line, schema.delimiter);
        auto fail = [&](const std::string& why) {
            std::string msg = "line " + std::to_string(lineno) + ": " + why;
            if (!schema.lenient) throw SchemaError(msg);
            ++rep.skipped;
            rep.skip_messages.push_back(msg);
        };
        if (fields.size() < need) {
            // a missing declared column is a schema problem, not a bad row
            throw SchemaError("line " + std::to_string(lineno) + ": expected at least " +
                              std::to_string(need) + " columns, got " +
                              std::to_string(fields.size()));
        }
        InteractionRecord r;
        r.user_id = fields[schema.user_col];
        r.item_id = fields[schema.item_col];
        try {
            std::size_t used = 0;
            r.rating = std::stod(fields[schema.rating_col], &used);
            if (used != fields[schema.rating_col].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail("unparsable rating '" + fields[schema.rating_col] + "'");
            continue;
        }
        try {
            std::size_t used = 0;
            r.timestamp = std::stoll(fields[schema.timestamp_col], &used);
            if (used != fields[schema.timestamp_col].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail("unparsable timestamp '" + fields[schema.timestamp_col] + "'");
            continue;
        }
        if (r.timestamp < 0) {
            fail("negative timestamp");
            continue;
        }
        if (r.rating < schema.rating_min || r.rating > schema.rating_max) {
            fail("rating " + std::to_string(r.rating) + " outside declared scale");
            continue;
        }
        out.push_back(std::move(r));
        ++rep.parsed;
    }
    if (report) *report = rep;
    return out;
}

int polarity_of(double rating, double threshold) { return rating >= threshold ? +1 : -1; }

std::vector<InteractionRecord> filter_min_interactions(std::vector<InteractionRecord> records,
                                                       std::size_t n) {
    if (n < 1) throw DomainError("filter_min_interactions: n must be >= 1");
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, std::size_t> ucount, icount;
        for (const auto& r : records) {
            ++ucount[r.user_id];
            ++icount[r.item_id];
        }
        std::vector<InteractionRecord> kept;
        kept.reserve(records.size());
        for (auto& r : records) {
            if (ucount[r.user_id] >= n && icount[r.item_id] >= n) {
                kept.push_back(std::move(r));
            } else {
                changed = true;
            }
        }
        records = std::move(kept);
    }
    if (records.empty()) {
        throw EmptinessError("filter_min_interactions: no interactions survive threshold n=" +
                             std::to_string(n));
    }
    return records;
}

int FeedbackGraph::zeta(std::size_t user, std::size_t item) const {
    int z = 0;
    for (const auto& it : sequences[user]) {
        if (it.item == item) z = it.polarity;  // chronological order, last wins
    }
    return z;
}

Mat FeedbackGraph::zeta_matrix() const {
    Mat Z(n_users, n_items);
    for (std::size_t u = 0; u < n_users; ++u) {
        for (const auto& it : sequences[u]) {
            Z.at(u, it.item) = static_cast<double>(it.polarity);
        }
    }
    return Z;
}

std::size_t FeedbackGraph::n_interactions() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

FeedbackGraph build_feedback_graph(const std::vector<InteractionRecord>& records,
                                   double rating_threshold) {
    FeedbackGraph g;
    for (const auto& r : records) {
        if (g.user_index.emplace(r.user_id, g.user_ids.size()).second) g.user_ids.push_back(r.user_id);
        if (g.item_index.emplace(r.item_id, g.item_ids.size()).second) g.item_ids.push_back(r.item_id);
    }
    g.n_users = g.user_ids.size();
    g.n_items = g.item_ids.size();
    g.sequences.resize(g.n_users);
    for (const auto& r : records) {
        Interaction it;
        it.item = g.item_index.at(r.item_id);
        it.timestamp = r.timestamp;
        it.polarity = polarity_of(r.rating, rating_threshold);
        g.sequences[g.user_index.at(r.user_id)].push_back(it);
    }
    for (auto& seq : g.sequences) {
        std::stable_sort(seq.begin(), seq.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
        // rescale timestamps into [1, 2] so the Hawkes ratio (t - t_j) / t_j
        // is well-defined and scale-free
        std::int64_t lo = seq.front().timestamp, hi = seq.back().timestamp;
        for (auto& it : seq) {
            it.t_norm = hi == lo ? 1.0
                                 : 1.0 + static_cast<double>(it.timestamp - lo) /
                                             static_cast<double>(hi - lo);
        }
    }
    return g;
}

SplitDataset chronological_split(const FeedbackGraph& graph, double r_train, double r_val,
                                 double r_test) {
    if (!(r_train > 0.0 && r_val > 0.0 && r_test > 0.0)) {
        throw DomainError("chronological_split: ratios must be positive");
    }
    if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9) {
        throw DomainError("chronological_split: ratios must sum to 1");
    }
    SplitDataset out;
    out.ratios[0] = r_train;
    out.ratios[1] = r_val;
    out.ratios[2] = r_test;
    auto skeleton = [&]() {
        FeedbackGraph g;
        g.n_users = graph.n_users;
        g.n_items = graph.n_items;
        g.user_index = graph.user_index;
        g.item_index = graph.item_index;
        g.user_ids = graph.user_ids;
        g.item_ids = graph.item_ids;
        g.sequences.resize(g.n_users);
        return g;
    };
    out.train = skeleton();
    out.validation = skeleton();
    out.test = skeleton();
    for (std::size_t u = 0; u < graph.n_users; ++u) {
        const auto& seq = graph.sequences[u];
        std::size_t len = seq.size();
        if (len < 3) {
            out.train.sequences[u] = seq;
            out.report.train_only_users.push_back(u);
            out.report.n_train += len;
            continue;
        }
        std::size_t n_train = static_cast<std::size_t>(std::floor(r_train * static_cast<double>(len)));
        std::size_t n_val = static_cast<std::size_t>(std::floor(r_val * static_cast<double>(len)));
        if (n_train == 0) n_train = 1;
        // grant validation one event when the floor gives none and a test
        // event still remains afterwards
        if (n_val == 0 && len - n_train >= 2) n_val = 1;
        if (n_train + n_val >= len) n_val = len > n_train ? len - n_train - 1 : 0;
        std::size_t n_test = len - n_train - n_val;
        out.train.sequences[u].assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.validation.sequences[u].assign(
            seq.begin() + static_cast<std::ptrdiff_t>(n_train),
            seq.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        out.test.sequences[u].assign(seq.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                                     seq.end());
        out.report.n_train += n_train;
        out.report.n_val += n_val;
        out.report.n_test += n_test;
    }
    return out;
}

Mat build_item_adjacency(const FeedbackGraph& train, bool self_loops) {
    if (train.n_interactions() == 0) {
        throw EmptinessError("build_item_adjacency: training view is empty");
    }
    Mat A(train.n_items, train.n_items);
    for (std::size_t u = 0; u < train.n_users; ++u) {
        std::set<std::size_t> items;
        for (const auto& it : train.sequences[u]) items.insert(it.item);
        for (std::size_t i : items) {
            if (self_loops) A.at(i, i) = 1.0;
            for (std::size_t j : items) {
                if (i != j) A.at(i, j) = 1.0;
            }
        }
    }
    return A;
}

Mat normalize_adjacency(const Mat& A) {
    if (A.rows != A.cols) throw ShapeError("normalize_adjacency: matrix not square");
    std::size_t n = A.rows;
    std::vector<double> dinv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t deg = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (A.at(i, j) != 0.0) ++deg;
        }
        dinv[i] = deg == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(deg));
    }
    Mat out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) = dinv[i] * A.at(i, j) * dinv[j];
        }
    }
    return out;
}

CorrelationSet build_feedback_correlation(const FeedbackGraph& train, std::size_t orders,
                                          bool self_loops) {
    if (orders < 1) throw DomainError("build_feedback_correlation: order count must be >= 1");
    CorrelationSet cs;
    cs.order_count = orders;
    cs.A = build_item_adjacency(train, self_loops);
    cs.A_hat = normalize_adjacency(cs.A);

    std::size_t n_items = train.n_items;
    double inv_u = 1.0 / static_cast<double>(train.n_users);
    Mat X0(n_items, n_items);
    for (std::size_t u = 0; u < train.n_users; ++u) {
        // latest feedback decides zeta, matching FeedbackGraph::zeta
        std::unordered_map<std::size_t, int> z;
        for (const auto& it : train.sequences[u]) z[it.item] = it.polarity;
        for (const auto& [i, zi] : z) {
            for (const auto& [j, zj] : z) {
                X0.at(i, j) += static_cast<double>(zi * zj) * inv_u;
            }
        }
    }
    cs.X_orders.push_back(std::move(X0));
    double inv_i = 1.0 / static_cast<double>(n_items);
    for (std::size_t l = 1; l < orders; ++l) {
        Mat next = mat_mul(cs.X_orders.back(), cs.X_orders.back());
        for (double& v : next.a) v *= inv_i;
        cs.X_orders.push_back(std::move(next));
    }
    cs.X_hat = Mat(n_items, n_items);
    for (const Mat& X : cs.X_orders) {
        for (std::size_t i = 0; i < X.a.size(); ++i) cs.X_hat.a[i] += X.a[i];
    }
    cs.X_masked = cs.X_hat;
    for (double& v : cs.X_masked.a) v = std::max(v, 0.0);
    return cs;
}

std::string dataset_fingerprint(const FeedbackGraph& g) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    auto mix_str = [&](const std::string& s) { mix(s.data(), s.size()); };
    for (const auto& s : g.user_ids) mix_str(s);
    for (const auto& s : g.item_ids) mix_str(s);
    for (const auto& seq : g.sequences) {
        for (const auto& it : seq) {
            mix(&it.item, sizeof(it.item));
            mix(&it.timestamp, sizeof(it.timestamp));
            mix(&it.polarity, sizeof(it.polarity));
        }
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string PrepareStats::text() const {
    std::ostringstream os;
    os << "#Users\t" << n_users << "\n";
    os << "#Items\t" << n_items << "\n";
    os << "#Interactions\t" << n_interactions << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f%%/%.1f%%", pos_percent, neg_percent);
    os << "Perc.(#Pos/#Neg)\t" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.1f", avg_interactions);
    os << "#Avg.\t" << buf << "\n";
    if (load_report.skipped > 0) {
        os << "#SkippedRows\t" << load_report.skipped << "\n";
    }
    return os.str();
}

DatasetBundle prepare_dataset(const std::string& raw_path, const PrepareOptions& opts,
                              PrepareStats* stats) {
    LoadReport lr;
    auto records = load_interactions(raw_path, opts.schema, &lr);
    if (records.empty()) throw EmptinessError("no interactions parsed from " + raw_path);
    records = filter_min_interactions(std::move(records), opts.min_interactions);

    DatasetBundle b;
    b.rating_threshold = opts.rating_threshold;
    b.order_count = opts.orders;
    b.full = build_feedback_graph(records, opts.rating_threshold);
    b.split = chronological_split(b.full, opts.split_train, opts.split_val, opts.split_test);
    b.corr = build_feedback_correlation(b.split.train, opts.orders, opts.self_loops);
    b.fingerprint = dataset_fingerprint(b.full);

    if (stats) {
        stats->n_users = b.full.n_users;
        stats->n_items = b.full.n_items;
        stats->n_interactions = b.full.n_interactions();
        std::size_t pos = 0;
        for (const auto& seq : b.full.sequences) {
            for (const auto& it : seq) pos += it.polarity > 0 ? 1 : 0;
        }
        double total = static_cast<double>(stats->n_interactions);
        stats->pos_percent = 100.0 * static_cast<double>(pos) / total;
        stats->neg_percent = 100.0 - stats->pos_percent;
        stats->avg_interactions = total / static_cast<double>(b.full.n_users);
        stats->load_report = lr;
    }
    return b;
}

void write_correlation_block(const std::string& path, const Mat& X_hat, const Mat& X_masked,
                             std::size_t order_count) {
    auto f = open_out(path, std::ios::binary);
    f.write("NFARECX1", 8);
    std::uint64_t n = X_hat.rows, oc = order_count;
    f.write(reinterpret_cast<const char*>(&n), 8);
    f.write(reinterpret_cast<const char*>(&oc), 8);
    f.write(reinterpret_cast<const char*>(X_hat.a.data()),
            static_cast<std::streamsize>(X_hat.a.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(X_masked.a.data()),
            static_cast<std::streamsize>(X_masked.a.size() * sizeof(double)));
    if (!f) throw IoError("failed writing correlation block: " + path);
}

void read_correlation_block(const std::string& path, Mat& X_hat, Mat& X_masked,
                            std::size_t& order_count) {
    auto f = open_in(path, std::ios::binary);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "NFARECX1", 8) != 0) {
        throw IoError("bad magic in correlation block: " + path);
    }
    std::uint64_t n = 0, oc = 0;
    f.read(reinterpret_cast<char*>(&n), 8);
    f.read(reinterpret_cast<char*>(&oc), 8);
    X_hat = Mat(n, n);
    X_masked = Mat(n, n);
    f.read(reinterpret_cast<char*>(X_hat.a.data()),
           static_cast<std::streamsize>(X_hat.a.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(X_masked.a.data()),
           static_cast<std::streamsize>(X_masked.a.size() * sizeof(double)));
    if (!f) throw IoError("truncated correlation block: " + path);
    order_count = oc;
}

void save_bundle(const DatasetBundle& bundle, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create bundle directory: " + dir);

    {
        auto f = open_out(dir + "/users.txt");
        for (std::size_t i = 0; i < bundle.full.user_ids.size(); ++i) {
            f << i << "\t" << bundle.full.user_ids[i] << "\n";
        }
    }
    {
        auto f = open_out(dir + "/items.txt");
        for (std::size_t i = 0; i < bundle.full.item_ids.size(); ++i) {
            f << i << "\t" << bundle.full.item_ids[i] << "\n";
        }
    }
    {
        auto f = open_out(dir + "/interactions.tsv");
        for (std::size_t u = 0; u < bundle.full.n_users; ++u) {
            for (const auto& it : bundle.full.sequences[u]) {
                f << u << "\t" << it.item << "\t" << it.polarity << "\t" << it.timestamp << "\n";
            }
        }
    }
    {
        // signed feedback of the training view, coordinate triplets
        auto f = open_out(dir + "/zeta.coo");
        Mat Z = bundle.split.train.zeta_matrix();
        for (std::size_t u = 0; u < Z.rows; ++u) {
            for (std::size_t i = 0; i < Z.cols; ++i) {
                if (Z.at(u, i) != 0.0) f << u << "\t" << i << "\t" << static_cast<int>(Z.at(u, i)) << "\n";
            }
        }
    }
    {
        auto f = open_out(dir + "/adjacency.coo");
        const Mat& A = bundle.corr.A;
        for (std::size_t i = 0; i < A.rows; ++i) {
            for (std::size_t j = 0; j < A.cols; ++j) {
                if (A.at(i, j) != 0.0) f << i << "\t" << j << "\t" << 1 << "\n";
            }
        }
    }
    write_correlation_block(dir + "/correlation.bin", bundle.corr.X_hat, bundle.corr.X_masked,
                            bundle.corr.order_count);
    {
        auto f = open_out(dir + "/split_report.txt");
        f << "train\t" << bundle.split.report.n_train << "\n";
        f << "validation\t" << bundle.split.report.n_val << "\n";
        f << "test\t" << bundle.split.report.n_test << "\n";
        f << "train_only_users\t" << bundle.split.report.train_only_users.size() << "\n";
        for (std::size_t u : bundle.split.report.train_only_users) {
            f << "train_only\t" << bundle.full.user_ids[u] << "\n";
        }
    }
    {
        auto f = open_out(dir + "/meta.txt");
        f << "fingerprint\t" << bundle.fingerprint << "\n";
        f << "rating_threshold\t" << bundle.rating_threshold << "\n";
        f << "orders\t" << bundle.order_count << "\n";
        f << "split_train\t" << bundle.split.ratios[0] << "\n";
        f << "split_val\t" << bundle.split.ratios[1] << "\n";
        f << "split_test\t" << bundle.split.ratios[2] << "\n";
    }
}

DatasetBundle load_bundle(const std::string& dir) {
    DatasetBundle b;
    std::unordered_map<std::string, std::string> meta;
    {
        auto f = open_in(dir + "/meta.txt");
        std::string k, v;
        while (f >> k >> v) meta[k] = v;
    }
    b.fingerprint = meta.at("fingerprint");
    b.rating_threshold = std::stod(meta.at("rating_threshold"));
    b.order_count = std::stoul(meta.at("orders"));
    double rt = std::stod(meta.at("split_train"));
    double rv = std::stod(meta.at("split_val"));
    double rs = std::stod(meta.at("split_test"));

    FeedbackGraph& g = b.full;
    {
        auto f = open_in(dir + "/users.txt");
        std::size_t idx;
        std::string id;
        while (f >> idx >> id) {
            g.user_index.emplace(id, idx);
            g.user_ids.push_back(id);
        }
    }
    {
        auto f = open_in(dir + "/items.txt");
        std::size_t idx;
        std::string id;
        while (f >> idx >> id) {
            g.item_index.emplace(id, idx);
            g.item_ids.push_back(id);
        }
    }
    g.n_users = g.user_ids.size();
    g.n_items = g.item_ids.size();
    g.sequences.resize(g.n_users);
    {
        auto f = open_in(dir + "/interactions.tsv");
        std::size_t u, item;
        int pol;
        std::int64_t ts;
        while (f >> u >> item >> pol >> ts) {
            Interaction it;
            it.item = item;
            it.polarity = pol;
            it.timestamp = ts;
            g.sequences.at(u).push_back(it);
        }
    }
    for (auto& seq : g.sequences) {
        if (seq.empty()) continue;
        std::int64_t lo = seq.front().timestamp, hi = seq.back().timestamp;
        for (auto& it : seq) {
            it.t_norm = hi == lo ? 1.0
                                 : 1.0 + static_cast<double>(it.timestamp - lo) /
                                             static_cast<double>(hi - lo);
        }
    }
    b.split = chronological_split(g, rt, rv, rs);
    b.corr.A = Mat(g.n_items, g.n_items);
    {
        auto f = open_in(dir + "/adjacency.coo");
        std::size_t i, j;
        int v;
        while (f >> i >> j >> v) b.corr.A.at(i, j) = static_cast<double>(v);
    }
    b.corr.A_hat = normalize_adjacency(b.corr.A);
    read_correlation_block(dir + "/correlation.bin", b.corr.X_hat, b.corr.X_masked,
                           b.corr.order_count);
    return b;
}

}  // namespace nfarec
