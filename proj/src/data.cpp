#include "magnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "magnet/error.hpp"
#include "magnet/io.hpp"

namespace magnet {

void InteractionSet::rebuild_histories() {
    histories.assign(num_users, {});
    for (const auto& [u, i] : edges) histories[u].push_back(i);
    for (auto& h : histories) {
        std::sort(h.begin(), h.end());
        h.erase(std::unique(h.begin(), h.end()), h.end());
    }
}

bool InteractionSet::contains(int32_t u, int32_t i) const {
    const auto& h = histories[u];
    return std::binary_search(h.begin(), h.end(), i);
}

int32_t IdMap::intern(const std::string& ext) {
    auto it = dense.find(ext);
    if (it != dense.end()) return it->second;
    int32_t id = int32_t(external.size());
    external.push_back(ext);
    dense.emplace(ext, id);
    return id;
}

LoadedInteractions load_interactions(const std::string& path, int min_interactions) {
    std::string text = read_text_file(path);
    LoadedInteractions out;
    std::vector<Edge> raw;
    size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        ++line_no;
        size_t end = eol;
        if (end > pos && text[end - 1] == '\r') --end;
        if (end > pos) {
            size_t tab = text.find('\t', pos);
            if (tab == std::string::npos || tab >= end)
                throw Error(ErrorKind::data,
                            path + ": line " + std::to_string(line_no) + ": expected user<TAB>item");
            std::string ue = text.substr(pos, tab - pos);
            std::string ie = text.substr(tab + 1, end - tab - 1);
            if (ue.empty() || ie.empty() || ie.find('\t') != std::string::npos)
                throw Error(ErrorKind::data,
                            path + ": line " + std::to_string(line_no) + ": expected user<TAB>item");
            raw.emplace_back(out.users.intern(ue), out.items.intern(ie));
        }
        pos = eol + 1;
    }
    out.raw_edges = int64_t(raw.size());
    if (raw.empty()) throw Error(ErrorKind::data, path + ": no interactions");

    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());

    // Distinct-item counts per user, then drop the small ones. Items keep
    // their ids so feature rows stay aligned; degree-0 items are allowed.
    int32_t nu = int32_t(out.users.external.size());
    std::vector<int32_t> count(nu, 0);
    for (const auto& [u, i] : raw) ++count[u];
    std::vector<int32_t> remap(nu, -1);
    IdMap kept_users;
    for (int32_t u = 0; u < nu; ++u) {
        if (count[u] >= min_interactions) remap[u] = kept_users.intern(out.users.external[u]);
        else ++out.dropped_users;
    }
    if (kept_users.external.empty())
        throw Error(ErrorKind::data, path + ": min-interaction filter removed every user");

    out.data.num_users = int32_t(kept_users.external.size());
    out.data.num_items = int32_t(out.items.external.size());
    for (const auto& [u, i] : raw)
        if (remap[u] >= 0) out.data.edges.emplace_back(remap[u], i);
    std::sort(out.data.edges.begin(), out.data.edges.end());
    out.data.rebuild_histories();
    out.users = std::move(kept_users);
    return out;
}

SplitBundle split_interactions(const InteractionSet& all, std::array<double, 3> ratios,
                               uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw Error(ErrorKind::config, "split ratios must be nonnegative and sum to 1");

    SplitBundle out;
    out.seed = seed;
    out.train.num_users = all.num_users;
    out.train.num_items = all.num_items;

    for (int32_t u = 0; u < all.num_users; ++u) {
        std::vector<int32_t> items = all.histories[u];
        int n = int(items.size());
        if (n < 3) {
            for (int32_t i : items) out.train.edges.emplace_back(u, i);
            if (n > 0) ++out.forced_all_train;
            continue;
        }
        Rng r = Rng::derive(seed, {rng_stream::kSplit, uint64_t(u)});
        for (int k = n - 1; k > 0; --k)
            std::swap(items[k], items[r.next_below(uint64_t(k) + 1)]);
        int nv = int(std::floor(n * ratios[1]));
        int nt = int(std::floor(n * ratios[2]));
        int ntr = n - nv - nt;  // rounding remainder goes to train
        std::vector<int32_t> va(items.begin() + ntr, items.begin() + ntr + nv);
        std::vector<int32_t> te(items.begin() + ntr + nv, items.end());
        std::sort(va.begin(), va.end());
        std::sort(te.begin(), te.end());
        for (int k = 0; k < ntr; ++k) out.train.edges.emplace_back(u, items[k]);
        for (int32_t i : va) out.valid.emplace_back(u, i);
        for (int32_t i : te) out.test.emplace_back(u, i);
    }
    std::sort(out.train.edges.begin(), out.train.edges.end());
    out.train.rebuild_histories();
    return out;
}

std::vector<int32_t> sample_negatives(int32_t user, const InteractionSet& train, int count,
                                      Rng& rng) {
    const auto& h = train.histories[user];
    if (int32_t(h.size()) >= train.num_items)
        throw Error(ErrorKind::data,
                    "user " + std::to_string(user) + " interacted with the whole catalog");
    std::vector<int32_t> out;
    out.reserve(count);
    while (int(out.size()) < count) {
        int32_t j = int32_t(rng.next_below(uint64_t(train.num_items)));
        if (!std::binary_search(h.begin(), h.end(), j)) out.push_back(j);
    }
    return out;
}

FeatureMatrix load_features(const std::string& path, char modality, int32_t num_items) {
    Blob b = read_blob(path);
    if (b.tag != 0) throw Error(ErrorKind::data, path + ": feature payload must be f32");
    if (int32_t(b.rows) != num_items)
        throw Error(ErrorKind::data, path + ": feature rows (" + std::to_string(b.rows) +
                                         ") do not match catalog size (" +
                                         std::to_string(num_items) + ")");
    if (b.dim == 0) throw Error(ErrorKind::data, path + ": feature dim is zero");
    for (size_t t = 0; t < b.f32.size(); ++t)
        if (!std::isfinite(b.f32[t]))
            throw Error(ErrorKind::data, path + ": non-finite feature value in row " +
                                             std::to_string(t / b.dim));
    FeatureMatrix f;
    f.modality = modality;
    f.rows = int32_t(b.rows);
    f.dim = int32_t(b.dim);
    f.values = std::move(b.f32);
    return f;
}

void write_features(const std::string& path, const FeatureMatrix& f) {
    write_blob_f32(path, uint32_t(f.rows), uint32_t(f.dim), f.values.data());
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_users <= 0 || spec.num_items <= 0 || spec.num_blocks <= 0 ||
        spec.num_blocks > std::min(spec.num_users, spec.num_items))
        throw Error(ErrorKind::config, "synthetic spec: invalid sizes");
    if (spec.density <= 0 || spec.density > 1 || spec.noise < 0)
        throw Error(ErrorKind::config, "synthetic spec: invalid density/noise");

    SyntheticData out;
    auto block_of = [&](int32_t idx, int32_t total) {
        return int32_t(uint64_t(idx) * spec.num_blocks / uint64_t(total));
    };
    out.user_block.resize(spec.num_users);
    out.item_block.resize(spec.num_items);
    for (int32_t u = 0; u < spec.num_users; ++u) out.user_block[u] = block_of(u, spec.num_users);
    for (int32_t i = 0; i < spec.num_items; ++i) out.item_block[i] = block_of(i, spec.num_items);

    // Items of each block are a contiguous id range; record the boundaries.
    std::vector<int32_t> bstart(spec.num_blocks + 1, spec.num_items);
    for (int32_t i = spec.num_items - 1; i >= 0; --i) bstart[out.item_block[i]] = i;
    bstart[spec.num_blocks] = spec.num_items;

    // Within a block, preference is not uniform: every item sits at an angle
    // on a taste circle and every user favors items near a preferred angle.
    // The true angle is written into exactly one feature modality per block
    // (A for even blocks, S for odd); the other modality carries an
    // independent decoy angle of equal strength. Recovering the within-block
    // ranking therefore requires trusting the right modality per item:
    // behavior alone pins down the block but undersamples the angle, and
    // averaging the two modalities mixes the signal with the decoy.
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    constexpr double kTasteConcentration = 2.0;  // in-block pick weight exp(k*cos(dAngle))
    constexpr double kTasteStrength = 0.6;       // angle amplitude in feature space
    std::vector<double> true_angle(size_t(spec.num_items)), decoy_angle(size_t(spec.num_items));
    for (int32_t i = 0; i < spec.num_items; ++i) {
        Rng r = Rng::derive(spec.seed, {rng_stream::kSynthTaste, uint64_t(i)});
        true_angle[size_t(i)] = kTwoPi * r.next_double();
        decoy_angle[size_t(i)] = kTwoPi * r.next_double();
    }

    int target = std::max(1, int(std::llround(spec.density * spec.num_items)));
    InteractionSet& s = out.interactions;
    s.num_users = spec.num_users;
    s.num_items = spec.num_items;
    for (int32_t u = 0; u < spec.num_users; ++u) {
        Rng r = Rng::derive(spec.seed, {rng_stream::kSynthEdges, uint64_t(u)});
        double theta = kTwoPi * r.next_double();
        int32_t b = out.user_block[u];
        int32_t lo = bstart[b], hi = bstart[b + 1];
        // cumulative taste weights over the user's block
        std::vector<double> cum(size_t(hi - lo));
        double total = 0;
        for (int32_t i = lo; i < hi; ++i) {
            total += std::exp(kTasteConcentration * std::cos(theta - true_angle[size_t(i)]));
            cum[size_t(i - lo)] = total;
        }
        // Fill to the target history length; without cross-block noise only
        // the user's own block is reachable. The cross/in-block decision is
        // made once per accepted pick (so the cross fraction tracks `noise`),
        // and duplicates are rejected inside the chosen channel.
        int32_t want = spec.noise > 0 ? target : std::min<int32_t>(target, hi - lo);
        std::set<int32_t> picked;
        int64_t guard = 256LL * target;
        while (int32_t(picked.size()) < want && guard > 0) {
            bool cross =
                spec.noise > 0 && hi - lo < spec.num_items && r.next_double() < spec.noise;
            int32_t item;
            do {
                if (cross) {
                    // uniform over items outside the user's block
                    int32_t j = int32_t(r.next_below(uint64_t(spec.num_items - (hi - lo))));
                    item = (j < lo) ? j : j + (hi - lo);
                } else {
                    double x = r.next_double() * total;
                    auto it = std::lower_bound(cum.begin(), cum.end(), x);
                    item = lo + int32_t(it - cum.begin());
                    if (item >= hi) item = hi - 1;  // x == total edge case
                }
            } while (picked.count(item) && --guard > 0);
            picked.insert(item);
        }
        for (int32_t i : picked) s.edges.emplace_back(u, i);
    }
    std::sort(s.edges.begin(), s.edges.end());
    s.rebuild_histories();

    // Unit-norm block centroids plus per-item Gaussian noise: items within a
    // block stay far more similar than items across blocks. The first two
    // dimensions additionally carry the item's taste angle -- the true one in
    // the modality this block trusts, the decoy in the other.
    auto make_features = [&](char modality, int32_t dim, uint64_t mtag) {
        FeatureMatrix f;
        f.modality = modality;
        f.rows = spec.num_items;
        f.dim = dim;
        f.values.resize(size_t(spec.num_items) * dim);
        std::vector<std::vector<double>> centroids(spec.num_blocks, std::vector<double>(dim));
        for (int32_t b = 0; b < spec.num_blocks; ++b) {
            Rng r = Rng::derive(spec.seed, {rng_stream::kSynthCentroid, mtag, uint64_t(b)});
            double n2 = 0;
            for (int32_t k = 0; k < dim; ++k) {
                centroids[b][k] = r.next_normal();
                n2 += centroids[b][k] * centroids[b][k];
            }
            double inv = 1.0 / std::sqrt(std::max(n2, 1e-30));
            for (int32_t k = 0; k < dim; ++k) centroids[b][k] *= inv;
        }
        for (int32_t i = 0; i < spec.num_items; ++i) {
            Rng r = Rng::derive(spec.seed, {rng_stream::kSynthFeature, mtag, uint64_t(i)});
            const auto& c = centroids[out.item_block[i]];
            for (int32_t k = 0; k < dim; ++k)
                f.row(i)[k] = float(c[k] + spec.noise * r.next_normal());
            if (dim >= 2) {
                bool trusted = (out.item_block[i] % 2 == 0) == (modality == 'A');
                double ang = trusted ? true_angle[size_t(i)] : decoy_angle[size_t(i)];
                f.row(i)[0] += float(kTasteStrength * std::cos(ang));
                f.row(i)[1] += float(kTasteStrength * std::sin(ang));
            }
        }
        return f;
    };
    out.feat_a = make_features('A', spec.dim_a, 0);
    out.feat_s = make_features('S', spec.dim_s, 1);
    return out;
}

void write_interactions_tsv(const std::string& path, const InteractionSet& s) {
    std::string out;
    out.reserve(s.edges.size() * 12);
    for (const auto& [u, i] : s.edges) {
        out += std::to_string(u);
        out += '\t';
        out += std::to_string(i);
        out += '\n';
    }
    write_text_file_atomic(path, out);
}

void write_id_map(const std::string& path, const IdMap& m) {
    std::string out;
    for (size_t d = 0; d < m.external.size(); ++d) {
        out += m.external[d];
        out += '\t';
        out += std::to_string(d);
        out += '\n';
    }
    write_text_file_atomic(path, out);
}

IdMap read_id_map(const std::string& path) {
    std::string text = read_text_file(path);
    IdMap m;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error(ErrorKind::data, path + ": line " + std::to_string(line_no) + ": bad id map");
        std::string ext = line.substr(0, tab);
        int32_t d = int32_t(std::stol(line.substr(tab + 1)));
        if (d != int32_t(m.external.size()))
            throw Error(ErrorKind::data, path + ": dense ids must be contiguous from 0");
        m.intern(ext);
    }
    return m;
}

ExportBundle export_remap(const SyntheticData& sd) {
    const InteractionSet& in = sd.interactions;
    ExportBundle out;
    out.item_remap.assign(in.num_items, -1);
    int32_t next = 0;
    for (const auto& e : in.edges)  // edges are (user, item)-sorted = file order
        if (out.item_remap[e.second] < 0) out.item_remap[e.second] = next++;

    out.interactions.num_users = in.num_users;
    out.interactions.num_items = next;
    out.interactions.edges.reserve(in.edges.size());
    for (const auto& e : in.edges)
        out.interactions.edges.push_back({e.first, out.item_remap[e.second]});
    std::sort(out.interactions.edges.begin(), out.interactions.edges.end());
    out.interactions.rebuild_histories();

    auto remap_features = [&](const FeatureMatrix& f) {
        FeatureMatrix r;
        r.modality = f.modality;
        r.rows = next;
        r.dim = f.dim;
        r.values.assign(size_t(next) * f.dim, 0.0f);
        for (int32_t i = 0; i < f.rows; ++i) {
            int32_t d = out.item_remap[i];
            if (d < 0) continue;
            std::copy(f.row(i), f.row(i) + f.dim, r.row(d));
        }
        return r;
    };
    out.feat_a = remap_features(sd.feat_a);
    out.feat_s = remap_features(sd.feat_s);
    return out;
}

}  // namespace magnet
