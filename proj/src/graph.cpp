#include "magnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "magnet/error.hpp"
#include "magnet/io.hpp"
#include "magnet/parallel.hpp"

namespace magnet {

std::vector<Edge> InducedEdges::edge_list() const {
    std::vector<Edge> out;
    out.reserve(total_edges());
    for (int32_t u = 0; u < num_users; ++u)
        for (const auto& [j, s] : candidates[u]) out.emplace_back(u, j);
    return out;
}

size_t InducedEdges::total_edges() const {
    size_t n = 0;
    for (const auto& c : candidates) n += c.size();
    return n;
}

NeighborIndex build_neighbor_index(const FeatureMatrix& features, int k) {
    if (k < 1) throw Error(ErrorKind::config, "neighbor index requires k >= 1");
    const int32_t n = features.rows;
    const int32_t d = features.dim;
    NeighborIndex idx;
    idx.modality = features.modality;
    idx.num_items = n;
    idx.k = std::min<int32_t>(k, std::max(n - 1, 0));
    idx.ids.assign(size_t(n) * idx.k, -1);
    idx.scores.assign(size_t(n) * idx.k, 0.0f);
    if (idx.k == 0) return idx;

    std::vector<double> norm(n);
#pragma omp parallel for schedule(static)
    for (int32_t i = 0; i < n; ++i) {
        double s = 0;
        const float* r = features.row(i);
        for (int32_t t = 0; t < d; ++t) s += double(r[t]) * r[t];
        norm[i] = std::sqrt(s);
    }

    // Each row is independent: full similarity sweep, then top-k selection
    // with ties broken toward the smaller item id.
#pragma omp parallel
    {
        std::vector<double> sim(n);
        std::vector<int32_t> order(n);
#pragma omp for schedule(static)
        for (int32_t i = 0; i < n; ++i) {
            const float* ri = features.row(i);
            for (int32_t j = 0; j < n; ++j) {
                if (j == i || norm[i] == 0.0 || norm[j] == 0.0) {
                    sim[j] = 0.0;
                    continue;
                }
                const float* rj = features.row(j);
                double dp = 0;
                for (int32_t t = 0; t < d; ++t) dp += double(ri[t]) * rj[t];
                sim[j] = dp / (norm[i] * norm[j]);
            }
            order.resize(size_t(n));
            std::iota(order.begin(), order.end(), 0);
            order.erase(order.begin() + i);  // never a self-neighbor
            auto cmp = [&](int32_t a, int32_t b) {
                if (sim[a] != sim[b]) return sim[a] > sim[b];
                return a < b;
            };
            std::partial_sort(order.begin(), order.begin() + idx.k, order.end(), cmp);
            for (int32_t t = 0; t < idx.k; ++t) {
                idx.ids[size_t(i) * idx.k + t] = order[t];
                idx.scores[size_t(i) * idx.k + t] = float(sim[order[t]]);
            }
        }
    }
    return idx;
}

InducedEdges expand_candidates(const InteractionSet& train, const NeighborIndex& idx_a,
                               const NeighborIndex& idx_s, int r) {
    if (r < 0) throw Error(ErrorKind::config, "candidate budget must be nonnegative");
    if (idx_a.num_items != train.num_items || idx_s.num_items != train.num_items)
        throw Error(ErrorKind::internal, "neighbor index catalog mismatch");
    InducedEdges out;
    out.num_users = train.num_users;
    out.r = r;
    out.candidates.resize(train.num_users);

#pragma omp parallel
    {
        std::unordered_map<int32_t, double> acc;
        std::vector<std::pair<int32_t, double>> ranked;
#pragma omp for schedule(static)
        for (int32_t u = 0; u < train.num_users; ++u) {
            acc.clear();
            const auto& hist = train.histories[u];
            auto feed = [&](const NeighborIndex& idx) {
                for (int32_t i : hist) {
                    const int32_t* nid = idx.row_ids(i);
                    const float* ns = idx.row_scores(i);
                    for (int32_t t = 0; t < idx.k; ++t) {
                        int32_t j = nid[t];
                        if (std::binary_search(hist.begin(), hist.end(), j)) continue;
                        acc[j] += 0.5 * double(ns[t]);
                    }
                }
            };
            feed(idx_a);
            feed(idx_s);
            ranked.assign(acc.begin(), acc.end());
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
            });
            if (int(ranked.size()) > r) ranked.resize(r);
            auto& cand = out.candidates[u];
            cand.reserve(ranked.size());
            for (const auto& [j, c] : ranked) cand.emplace_back(j, float(c));
        }
    }
    return out;
}

ViewGraph build_view_graph(const InteractionSet& train, const InducedEdges* induced, View view) {
    ViewGraph g;
    g.view = view;
    g.num_users = train.num_users;
    g.num_items = train.num_items;

    std::vector<Edge> edges = train.edges;
    if (view == View::UIG && induced) {
        auto extra = induced->edge_list();
        edges.insert(edges.end(), extra.begin(), extra.end());
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    }
    g.num_edges = edges.size();

    g.deg_u.assign(g.num_users, 0);
    g.deg_i.assign(g.num_items, 0);
    for (const auto& [u, i] : edges) {
        ++g.deg_u[u];
        ++g.deg_i[i];
    }

    g.u_off.assign(g.num_users + 1, 0);
    for (int32_t u = 0; u < g.num_users; ++u) g.u_off[u + 1] = g.u_off[u] + g.deg_u[u];
    g.u_adj.resize(edges.size());
    g.u_coef.resize(edges.size());
    std::vector<int32_t> cur(g.u_off.begin(), g.u_off.end() - 1);
    for (const auto& [u, i] : edges) {
        double c = 1.0 / std::sqrt(double(g.deg_u[u]) * double(g.deg_i[i]));
        g.u_adj[cur[u]] = i;
        g.u_coef[cur[u]] = c;
        ++cur[u];
    }

    g.i_off.assign(g.num_items + 1, 0);
    for (int32_t i = 0; i < g.num_items; ++i) g.i_off[i + 1] = g.i_off[i] + g.deg_i[i];
    g.i_adj.resize(edges.size());
    g.i_coef.resize(edges.size());
    cur.assign(g.i_off.begin(), g.i_off.end() - 1);
    for (const auto& [u, i] : edges) {  // edges sorted by (u,i): item rows end up user-sorted
        double c = 1.0 / std::sqrt(double(g.deg_u[u]) * double(g.deg_i[i]));
        g.i_adj[cur[i]] = u;
        g.i_coef[cur[i]] = c;
        ++cur[i];
    }
    return g;
}

uint64_t fnv1a64(const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fingerprint_features(const FeatureMatrix& f) {
    uint64_t h = fnv1a64(f.values.data(), f.values.size() * sizeof(float));
    int32_t meta[2] = {f.rows, f.dim};
    return h ^ fnv1a64(meta, sizeof(meta));
}

uint64_t fingerprint_interactions(const InteractionSet& s) {
    uint64_t h = fnv1a64(s.edges.data(), s.edges.size() * sizeof(Edge));
    int32_t meta[2] = {s.num_users, s.num_items};
    return h ^ fnv1a64(meta, sizeof(meta));
}

namespace {

constexpr char kCacheMagic[4] = {'M', 'G', 'C', '1'};

std::string sidecar_path(const std::string& bin_path) { return bin_path + ".json"; }

nlohmann::json read_sidecar(const std::string& bin_path) {
    return nlohmann::json::parse(read_text_file(sidecar_path(bin_path)));
}

std::string hex64(uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)x);
    return buf;
}

}  // namespace

void save_neighbor_index(const std::string& bin_path, const NeighborIndex& idx,
                         uint64_t feature_fingerprint) {
    std::string out;
    out.append(kCacheMagic, 4);
    uint32_t kind = 1, n = uint32_t(idx.num_items), k = uint32_t(idx.k);
    out.append(reinterpret_cast<const char*>(&kind), 4);
    out.append(reinterpret_cast<const char*>(&n), 4);
    out.append(reinterpret_cast<const char*>(&k), 4);
    out.append(reinterpret_cast<const char*>(idx.ids.data()), idx.ids.size() * 4);
    out.append(reinterpret_cast<const char*>(idx.scores.data()), idx.scores.size() * 4);
    write_text_file_atomic(bin_path, out);

    nlohmann::json side;
    side["kind"] = "knn";
    side["modality"] = std::string(1, idx.modality);
    side["k"] = idx.k;
    side["items"] = idx.num_items;
    side["feature_fingerprint"] = hex64(feature_fingerprint);
    write_text_file_atomic(sidecar_path(bin_path), side.dump(2) + "\n");
}

NeighborIndex load_neighbor_index(const std::string& bin_path, uint64_t expect_fingerprint) {
    nlohmann::json side = read_sidecar(bin_path);
    if (side.value("feature_fingerprint", "") != hex64(expect_fingerprint))
        throw Error(ErrorKind::io, bin_path + ": cache fingerprint mismatch");
    std::string bytes = read_text_file(bin_path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCacheMagic, 4) != 0)
        throw Error(ErrorKind::io, bin_path + ": bad cache header");
    uint32_t kind, n, k;
    std::memcpy(&kind, bytes.data() + 4, 4);
    std::memcpy(&n, bytes.data() + 8, 4);
    std::memcpy(&k, bytes.data() + 12, 4);
    if (kind != 1) throw Error(ErrorKind::io, bin_path + ": not a neighbor index");
    size_t cnt = size_t(n) * k;
    if (bytes.size() != 16 + cnt * 8) throw Error(ErrorKind::io, bin_path + ": truncated cache");
    NeighborIndex idx;
    idx.modality = side.value("modality", "A")[0];
    idx.num_items = int32_t(n);
    idx.k = int32_t(k);
    idx.ids.resize(cnt);
    idx.scores.resize(cnt);
    std::memcpy(idx.ids.data(), bytes.data() + 16, cnt * 4);
    std::memcpy(idx.scores.data(), bytes.data() + 16 + cnt * 4, cnt * 4);
    return idx;
}

bool neighbor_index_cache_valid(const std::string& bin_path, int k, uint64_t feature_fingerprint) {
    std::ifstream probe(bin_path, std::ios::binary);
    if (!probe) return false;
    try {
        nlohmann::json side = read_sidecar(bin_path);
        int items = side.value("items", 0);
        int k_eff = std::min(k, std::max(items - 1, 0));
        return side.value("kind", "") == "knn" && side.value("k", -1) == k_eff &&
               side.value("feature_fingerprint", "") == hex64(feature_fingerprint);
    } catch (...) {
        return false;
    }
}

void save_induced_edges(const std::string& bin_path, const InducedEdges& e, int k,
                        uint64_t interactions_fp, uint64_t fp_a, uint64_t fp_s) {
    std::string out;
    out.append(kCacheMagic, 4);
    uint32_t kind = 2, nu = uint32_t(e.num_users), r = uint32_t(e.r);
    out.append(reinterpret_cast<const char*>(&kind), 4);
    out.append(reinterpret_cast<const char*>(&nu), 4);
    out.append(reinterpret_cast<const char*>(&r), 4);
    for (int32_t u = 0; u < e.num_users; ++u) {
        uint32_t cnt = uint32_t(e.candidates[u].size());
        out.append(reinterpret_cast<const char*>(&cnt), 4);
        for (const auto& [j, s] : e.candidates[u]) {
            out.append(reinterpret_cast<const char*>(&j), 4);
            out.append(reinterpret_cast<const char*>(&s), 4);
        }
    }
    write_text_file_atomic(bin_path, out);

    nlohmann::json side;
    side["kind"] = "induced";
    side["r"] = e.r;
    side["k"] = k;
    side["users"] = e.num_users;
    side["interactions_fingerprint"] = hex64(interactions_fp);
    side["feature_fingerprint_a"] = hex64(fp_a);
    side["feature_fingerprint_s"] = hex64(fp_s);
    write_text_file_atomic(sidecar_path(bin_path), side.dump(2) + "\n");
}

InducedEdges load_induced_edges(const std::string& bin_path) {
    std::string bytes = read_text_file(bin_path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCacheMagic, 4) != 0)
        throw Error(ErrorKind::io, bin_path + ": bad cache header");
    uint32_t kind, nu, r;
    std::memcpy(&kind, bytes.data() + 4, 4);
    std::memcpy(&nu, bytes.data() + 8, 4);
    std::memcpy(&r, bytes.data() + 12, 4);
    if (kind != 2) throw Error(ErrorKind::io, bin_path + ": not an induced-edge cache");
    InducedEdges e;
    e.num_users = int32_t(nu);
    e.r = int32_t(r);
    e.candidates.resize(nu);
    size_t pos = 16;
    for (uint32_t u = 0; u < nu; ++u) {
        if (pos + 4 > bytes.size()) throw Error(ErrorKind::io, bin_path + ": truncated cache");
        uint32_t cnt;
        std::memcpy(&cnt, bytes.data() + pos, 4);
        pos += 4;
        if (pos + size_t(cnt) * 8 > bytes.size())
            throw Error(ErrorKind::io, bin_path + ": truncated cache");
        auto& cand = e.candidates[u];
        cand.resize(cnt);
        for (uint32_t t = 0; t < cnt; ++t) {
            std::memcpy(&cand[t].first, bytes.data() + pos, 4);
            std::memcpy(&cand[t].second, bytes.data() + pos + 4, 4);
            pos += 8;
        }
    }
    if (pos != bytes.size()) throw Error(ErrorKind::io, bin_path + ": trailing bytes in cache");
    return e;
}

bool induced_cache_valid(const std::string& bin_path, int k, int r, uint64_t interactions_fp,
                         uint64_t fp_a, uint64_t fp_s) {
    std::ifstream probe(bin_path, std::ios::binary);
    if (!probe) return false;
    try {
        nlohmann::json side = read_sidecar(bin_path);
        return side.value("kind", "") == "induced" && side.value("r", -1) == r &&
               side.value("k", -1) == k &&
               side.value("interactions_fingerprint", "") == hex64(interactions_fp) &&
               side.value("feature_fingerprint_a", "") == hex64(fp_a) &&
               side.value("feature_fingerprint_s", "") == hex64(fp_s);
    } catch (...) {
        return false;
    }
}

}  // namespace magnet
