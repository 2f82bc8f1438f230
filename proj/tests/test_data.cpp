#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "magnet/data.hpp"
#include "magnet/error.hpp"
#include "magnet/io.hpp"

using namespace magnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "magnet_test_data";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string write_temp(const std::string& name, const std::string& content) {
    fs::path p = temp_dir() / name;
    std::ofstream out(p);
    out << content;
    return p.string();
}

}  // namespace

TEST_CASE("loader keeps users at or above the interaction threshold") {
    // counts {5, 4, 2} with threshold 4 -> two users survive
    std::string text;
    for (int i = 0; i < 5; ++i) text += "ua\tI" + std::to_string(i) + "\n";
    for (int i = 0; i < 4; ++i) text += "ub\tI" + std::to_string(i) + "\n";
    for (int i = 0; i < 2; ++i) text += "uc\tI" + std::to_string(i) + "\n";
    auto loaded = load_interactions(write_temp("threshold.tsv", text), 4);
    CHECK(loaded.data.num_users == 2);
    CHECK(loaded.dropped_users == 1);
    CHECK(loaded.data.edges.size() == 9);
}

TEST_CASE("loader collapses duplicate pairs to one edge") {
    std::string text;
    for (int i = 0; i < 4; ++i) text += "u0\ti" + std::to_string(i) + "\n";
    text += "u0\ti3\n";  // duplicate of the last pair
    auto loaded = load_interactions(write_temp("dup.tsv", text), 4);
    CHECK(loaded.data.edges.size() == 4);
    CHECK(loaded.raw_edges == 5);
}

TEST_CASE("loader densifies ids in first-appearance order") {
    std::string text =
        "zebra\tz9\nzebra\tz1\nzebra\tz7\nzebra\tz3\n"
        "apple\tz1\napple\tz9\napple\tz3\napple\tz7\n";
    auto loaded = load_interactions(write_temp("order.tsv", text), 4);
    CHECK(loaded.users.external[0] == "zebra");
    CHECK(loaded.users.external[1] == "apple");
    CHECK(loaded.items.external[0] == "z9");
    CHECK(loaded.items.external[1] == "z1");
    CHECK(loaded.items.external[2] == "z7");
    CHECK(loaded.items.external[3] == "z3");
    // the id maps are bijections: round-tripping is identity
    for (size_t t = 0; t < loaded.items.external.size(); ++t)
        CHECK(loaded.items.dense.at(loaded.items.external[t]) == int32_t(t));
}

TEST_CASE("threshold filtering is iterative and can cascade") {
    // After dropping the light user, the heavy user keeps its own count;
    // items never disappear, so a single pass suffices for users.
    std::string text;
    for (int i = 0; i < 4; ++i) text += "keep\ti" + std::to_string(i) + "\n";
    text += "drop\ti0\ndrop\ti1\ndrop\ti2\n";
    auto loaded = load_interactions(write_temp("cascade.tsv", text), 4);
    CHECK(loaded.data.num_users == 1);
    CHECK(loaded.data.edges.size() == 4);
}

TEST_CASE("malformed line raises a parse error naming the line") {
    std::string text = "u0\ti0\nbroken-line-without-tab\n";
    CHECK_THROWS_AS(load_interactions(write_temp("broken.tsv", text), 1), Error);
    try {
        load_interactions(write_temp("broken.tsv", text), 1);
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::data);
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("empty result is an error") {
    std::string text = "u0\ti0\n";
    CHECK_THROWS_AS(load_interactions(write_temp("empty.tsv", text), 4), Error);
}

TEST_CASE("histories are the per-user projection of edges") {
    auto s = testutil::make_interactions(3, 5, {{0, 4}, {0, 1}, {1, 2}, {2, 0}, {2, 3}, {2, 2}});
    REQUIRE(s.histories.size() == 3);
    CHECK(s.histories[0] == std::vector<int32_t>{1, 4});
    CHECK(s.histories[1] == std::vector<int32_t>{2});
    CHECK(s.histories[2] == std::vector<int32_t>{0, 2, 3});
    CHECK(s.contains(0, 4));
    CHECK_FALSE(s.contains(0, 2));
}

TEST_CASE("split honors 8:1:1 on a 10-edge user") {
    std::vector<Edge> edges;
    for (int i = 0; i < 10; ++i) edges.push_back({0, i});
    auto s = testutil::make_interactions(1, 10, edges);
    auto split = split_interactions(s, {0.8, 0.1, 0.1}, 7);
    CHECK(split.train.edges.size() == 8);
    CHECK(split.valid.size() == 1);
    CHECK(split.test.size() == 1);
}

TEST_CASE("split is a disjoint partition of the input") {
    auto cfg = testutil::small_config();
    auto rig = testutil::make_rig<float>(cfg);
    const auto& all = rig->sd.interactions;
    const auto& sp = rig->split;

    std::set<Edge> train(sp.train.edges.begin(), sp.train.edges.end());
    std::set<Edge> valid(sp.valid.begin(), sp.valid.end());
    std::set<Edge> test(sp.test.begin(), sp.test.end());
    CHECK(train.size() == sp.train.edges.size());
    CHECK(valid.size() == sp.valid.size());
    CHECK(test.size() == sp.test.size());

    // pairwise disjoint
    for (const auto& e : valid) CHECK(train.count(e) == 0);
    for (const auto& e : test) {
        CHECK(train.count(e) == 0);
        CHECK(valid.count(e) == 0);
    }
    // union is exactly the input
    CHECK(train.size() + valid.size() + test.size() == all.edges.size());
    for (const auto& e : all.edges)
        CHECK((train.count(e) + valid.count(e) + test.count(e)) == 1);
    // held-out pairs reference users present in train
    for (const auto& [u, i] : valid) CHECK_FALSE(sp.train.histories[u].empty());
    for (const auto& [u, i] : test) CHECK_FALSE(sp.train.histories[u].empty());
}

TEST_CASE("split is deterministic in the seed and changes with it") {
    std::vector<Edge> edges;
    for (int u = 0; u < 10; ++u)
        for (int i = 0; i < 10; ++i) edges.push_back({u, i});
    auto s = testutil::make_interactions(10, 10, edges);
    auto a = split_interactions(s, {0.8, 0.1, 0.1}, 7);
    auto b = split_interactions(s, {0.8, 0.1, 0.1}, 7);
    CHECK(a.train.edges == b.train.edges);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);
    auto c = split_interactions(s, {0.8, 0.1, 0.1}, 8);
    CHECK(a.valid != c.valid);
}

TEST_CASE("users with fewer than 3 edges go entirely to train") {
    auto s = testutil::make_interactions(1, 5, {{0, 0}, {0, 1}});
    auto split = split_interactions(s, {0.8, 0.1, 0.1}, 7);
    CHECK(split.train.edges.size() == 2);
    CHECK(split.valid.empty());
    CHECK(split.test.empty());
    CHECK(split.forced_all_train == 1);
}

TEST_CASE("forced complement of size one is always the negative") {
    auto s = testutil::make_interactions(1, 5, {{0, 0}, {0, 1}, {0, 2}, {0, 3}});
    Rng rng = Rng::derive(7, {1});
    for (int t = 0; t < 20; ++t) {
        auto n = sample_negatives(0, s, 1, rng);
        REQUIRE(n.size() == 1);
        CHECK(n[0] == 4);
    }
}

TEST_CASE("negatives avoid the training history") {
    auto cfg = testutil::small_config();
    auto rig = testutil::make_rig<float>(cfg);
    Rng rng = Rng::derive(7, {2});
    const auto& train = rig->split.train;
    for (int32_t u = 0; u < train.num_users; ++u) {
        if (int32_t(train.histories[u].size()) >= train.num_items) continue;
        auto negs = sample_negatives(u, train, 5, rng);
        for (int32_t j : negs) CHECK_FALSE(train.contains(u, j));
    }
}

TEST_CASE("negative sampling errors when no complement exists") {
    std::vector<Edge> edges;
    for (int i = 0; i < 5; ++i) edges.push_back({0, i});
    auto s = testutil::make_interactions(1, 5, edges);
    Rng rng = Rng::derive(7, {3});
    CHECK_THROWS_AS(sample_negatives(0, s, 1, rng), Error);
}

TEST_CASE("negative draws are uniform over the complement") {
    // complement {4..13} of size 10; chi-square on 1e5 draws
    std::vector<Edge> edges;
    for (int i = 0; i < 4; ++i) edges.push_back({0, i});
    auto s = testutil::make_interactions(1, 14, edges);
    Rng rng = Rng::derive(123, {4});
    const int draws = 100000;
    std::map<int32_t, int> count;
    for (int t = 0; t < draws; ++t) {
        auto n = sample_negatives(0, s, 1, rng);
        ++count[n[0]];
    }
    CHECK(count.size() == 10);
    double expect = draws / 10.0;
    double chi2 = 0;
    for (const auto& [item, c] : count) {
        CHECK(item >= 4);
        chi2 += (c - expect) * (c - expect) / expect;
    }
    // 9 degrees of freedom: 99.9th percentile is about 27.9
    CHECK(chi2 < 27.9);
}

TEST_CASE("synthetic generation is deterministic") {
    SyntheticSpec spec;
    spec.num_users = 40;
    spec.num_items = 24;
    spec.num_blocks = 4;
    auto a = generate_synthetic(spec);
    auto b = generate_synthetic(spec);
    CHECK(a.interactions.edges == b.interactions.edges);
    CHECK(a.feat_a.values == b.feat_a.values);
    CHECK(a.feat_s.values == b.feat_s.values);
    CHECK(a.user_block == b.user_block);
    CHECK(a.item_block == b.item_block);
}

TEST_CASE("zero noise keeps every edge within its block") {
    SyntheticSpec spec;
    spec.num_users = 40;
    spec.num_items = 24;
    spec.num_blocks = 4;
    spec.noise = 0.0;
    auto sd = generate_synthetic(spec);
    for (const auto& [u, i] : sd.interactions.edges)
        CHECK(sd.user_block[u] == sd.item_block[i]);
}

TEST_CASE("noise 0.1 keeps at least 85 percent of edges within-block over 10 seeds") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        SyntheticSpec spec;
        spec.num_users = 100;
        spec.num_items = 60;
        spec.num_blocks = 4;
        spec.noise = 0.1;
        spec.seed = seed;
        auto sd = generate_synthetic(spec);
        size_t within = 0;
        for (const auto& [u, i] : sd.interactions.edges)
            if (sd.user_block[u] == sd.item_block[i]) ++within;
        double frac = double(within) / double(sd.interactions.edges.size());
        CHECK(frac >= 0.85);
    }
}

TEST_CASE("synthetic features separate blocks by cosine similarity") {
    SyntheticSpec spec;
    spec.num_users = 40;
    spec.num_items = 40;
    spec.num_blocks = 4;
    spec.noise = 0.1;
    auto sd = generate_synthetic(spec);
    auto cosine = [&](const FeatureMatrix& f, int32_t i, int32_t j) {
        double dp = 0, ni = 0, nj = 0;
        for (int32_t c = 0; c < f.dim; ++c) {
            dp += double(f.row(i)[c]) * f.row(j)[c];
            ni += double(f.row(i)[c]) * f.row(i)[c];
            nj += double(f.row(j)[c]) * f.row(j)[c];
        }
        return dp / std::sqrt(ni * nj);
    };
    for (char m : {'A', 'S'}) {
        const FeatureMatrix& f = m == 'A' ? sd.feat_a : sd.feat_s;
        double within = 0, cross = 0;
        int nw = 0, nc = 0;
        for (int32_t i = 0; i < f.rows; ++i)
            for (int32_t j = i + 1; j < f.rows; ++j) {
                double s = cosine(f, i, j);
                if (sd.item_block[i] == sd.item_block[j]) {
                    within += s;
                    ++nw;
                } else {
                    cross += s;
                    ++nc;
                }
            }
        CHECK(within / nw > cross / nc);
    }
}

TEST_CASE("feature blob round-trips through the binary format") {
    auto f = testutil::make_features('A', {{1.0f, 2.5f, -3.0f}, {0.0f, 4.0f, 9.5f}});
    fs::path p = temp_dir() / "feat_roundtrip.mgf";
    write_features(p.string(), f);
    auto g = load_features(p.string(), 'A', 2);
    CHECK(g.rows == 2);
    CHECK(g.dim == 3);
    CHECK(g.values == f.values);
}

TEST_CASE("feature loader rejects a row-count mismatch") {
    auto f = testutil::make_features('A', {{1.0f, 2.0f}, {3.0f, 4.0f}});
    fs::path p = temp_dir() / "feat_mismatch.mgf";
    write_features(p.string(), f);
    CHECK_THROWS_AS(load_features(p.string(), 'A', 5), Error);
}

TEST_CASE("feature loader rejects non-finite values naming the row") {
    std::vector<float> vals = {1.0f, std::numeric_limits<float>::quiet_NaN()};
    fs::path p = temp_dir() / "feat_nan.mgf";
    write_blob_f32(p.string(), 2, 1, vals.data());
    try {
        load_features(p.string(), 'A', 2);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::data);
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("truncated feature payload is an input error") {
    auto f = testutil::make_features('A', {{1.0f, 2.0f}, {3.0f, 4.0f}});
    fs::path p = temp_dir() / "feat_trunc.mgf";
    write_features(p.string(), f);
    fs::resize_file(p, fs::file_size(p) - 4);
    CHECK_THROWS_AS(load_features(p.string(), 'A', 2), Error);
}

TEST_CASE("corrupt magic bytes are an input error") {
    fs::path p = temp_dir() / "feat_magic.mgf";
    std::ofstream out(p, std::ios::binary);
    out << "NOPE" << std::string(12, '\0');
    out.close();
    CHECK_THROWS_AS(read_blob(p.string()), Error);
}

TEST_CASE("double blob round-trips exactly") {
    std::vector<double> vals = {1.0, -2.5, 3.141592653589793, 1e-300};
    fs::path p = temp_dir() / "blob64.mgf";
    write_blob_f64(p.string(), 2, 2, vals.data());
    Blob b = read_blob(p.string());
    CHECK(b.tag == 1);
    CHECK(b.rows == 2);
    CHECK(b.dim == 2);
    CHECK(b.f64 == vals);
}

TEST_CASE("exported synthetic data reloads with identical structure") {
    SyntheticSpec spec;
    spec.num_users = 30;
    spec.num_items = 20;
    spec.num_blocks = 2;
    spec.density = 0.3;
    auto sd = generate_synthetic(spec);
    auto bundle = export_remap(sd);

    fs::path dir = temp_dir() / "export";
    fs::create_directories(dir);
    write_interactions_tsv((dir / "interactions.tsv").string(), bundle.interactions);
    write_features((dir / "features_a.mgf").string(), bundle.feat_a);
    write_features((dir / "features_s.mgf").string(), bundle.feat_s);

    auto loaded = load_interactions((dir / "interactions.tsv").string(), 1);
    CHECK(loaded.data.num_users == bundle.interactions.num_users);
    CHECK(loaded.data.num_items == bundle.interactions.num_items);
    CHECK(loaded.data.edges == bundle.interactions.edges);
    auto fa = load_features((dir / "features_a.mgf").string(), 'A', loaded.data.num_items);
    CHECK(fa.values == bundle.feat_a.values);
}

TEST_CASE("id map file round-trips") {
    IdMap m;
    m.intern("alpha");
    m.intern("beta");
    m.intern("gamma");
    fs::path p = temp_dir() / "idmap.tsv";
    write_id_map(p.string(), m);
    IdMap n = read_id_map(p.string());
    CHECK(n.external == m.external);
    CHECK(n.dense.at("beta") == 1);
}
