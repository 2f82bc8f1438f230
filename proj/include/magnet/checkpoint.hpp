#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "magnet/io.hpp"
#include "magnet/train.hpp"

namespace magnet {

inline constexpr const char* kCheckpointFormat = "magnet-checkpoint-v1";

namespace detail {

template <class T>
void write_mat_blob(const std::filesystem::path& path, const Mat<T>& m) {
    if constexpr (std::is_same_v<T, double>) {
        write_blob_f64(path.string(), uint32_t(m.rows), uint32_t(m.cols), m.v.data());
    } else {
        write_blob_f32(path.string(), uint32_t(m.rows), uint32_t(m.cols), m.v.data());
    }
}

template <class T>
void read_mat_blob(const std::filesystem::path& path, Mat<T>& m) {
    Blob b = read_blob(path.string());
    if (int64_t(b.rows) != int64_t(m.rows) || int64_t(b.dim) != int64_t(m.cols))
        throw Error(ErrorKind::io, "checkpoint tensor shape mismatch in " + path.string());
    if constexpr (std::is_same_v<T, double>) {
        if (b.tag != 1)
            throw Error(ErrorKind::io, "expected f64 blob in " + path.string());
        m.v = std::move(b.f64);
    } else {
        if (b.tag != 0)
            throw Error(ErrorKind::io, "expected f32 blob in " + path.string());
        m.v = std::move(b.f32);
    }
}

}  // namespace detail

// Writes the trainer's current state: every parameter tensor, both Adam
// moments, the stage automaton, epoch counters, and validation history,
// alongside the fully resolved config and its fingerprint. Loading into a
// trainer built from the same config resumes training bit-for-bit.
template <class T>
void save_checkpoint(const std::string& dir, const Trainer<T>& tr) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "params");

    nlohmann::json man;
    man["format"] = kCheckpointFormat;
    man["precision"] = std::is_same_v<T, double> ? "f64" : "f32";
    man["config"] = nlohmann::json::parse(tr.cfg.to_json());
    man["config_fingerprint"] = tr.cfg.fingerprint();
    man["epochs_done"] = tr.epochs_done;
    man["adam_t"] = tr.adam_t;
    man["schedule"] = {{"stage", tr.sched.stage},
                       {"counter", tr.sched.counter},
                       {"step", tr.sched.step},
                       {"epoch", tr.sched.epoch}};
    man["best"] = {{"epoch", tr.best_epoch}, {"ndcg20", tr.best_ndcg}};
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& h : tr.val_history)
        hist.push_back({{"epoch", int(h[0])}, {"recall20", h[1]}, {"ndcg20", h[2]}});
    man["val_history"] = hist;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& t : tr.model.params.tensors)
        plist.push_back({{"name", t.name}, {"rows", t.value.rows}, {"cols", t.value.cols}});
    man["params"] = plist;
    write_text_file_atomic((fs::path(dir) / "manifest.json").string(), man.dump(2) + "\n");

    for (const auto& t : tr.model.params.tensors) {
        fs::path base = fs::path(dir) / "params" / t.name;
        detail::write_mat_blob(base.string() + ".mgf", t.value);
        detail::write_mat_blob(base.string() + ".m.mgf", t.adam_m);
        detail::write_mat_blob(base.string() + ".v.mgf", t.adam_v);
    }
}

inline nlohmann::json read_checkpoint_manifest(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path p = fs::path(dir) / "manifest.json";
    nlohmann::json man;
    try {
        man = nlohmann::json::parse(read_text_file(p.string()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, "invalid checkpoint manifest " + p.string() + ": " + e.what());
    }
    if (!man.contains("format") || man["format"] != kCheckpointFormat)
        throw Error(ErrorKind::io, "unrecognized checkpoint format in " + p.string());
    return man;
}

// Restores a checkpoint into a trainer that was set up with the identical
// config (enforced via fingerprint) and data shapes.
template <class T>
void load_checkpoint(const std::string& dir, Trainer<T>& tr) {
    namespace fs = std::filesystem;
    nlohmann::json man = read_checkpoint_manifest(dir);

    std::string want_prec = std::is_same_v<T, double> ? "f64" : "f32";
    if (man.value("precision", "") != want_prec)
        throw Error(ErrorKind::config, "checkpoint precision " + man.value("precision", "?") +
                                           " does not match requested " + want_prec);
    std::string fp = man.value("config_fingerprint", "");
    if (fp != tr.cfg.fingerprint())
        throw Error(ErrorKind::config,
                    "checkpoint was produced with a different config (fingerprint " + fp +
                        " vs " + tr.cfg.fingerprint() + ")");

    for (auto& t : tr.model.params.tensors) {
        fs::path base = fs::path(dir) / "params" / t.name;
        detail::read_mat_blob(base.string() + ".mgf", t.value);
        detail::read_mat_blob(base.string() + ".m.mgf", t.adam_m);
        detail::read_mat_blob(base.string() + ".v.mgf", t.adam_v);
    }
    tr.adam_t = man.value("adam_t", int64_t(0));
    tr.epochs_done = man.value("epochs_done", 0);
    const auto& sj = man.at("schedule");
    tr.sched.stage = sj.value("stage", 1);
    tr.sched.counter = sj.value("counter", 0);
    tr.sched.step = sj.value("step", int64_t(0));
    tr.sched.epoch = sj.value("epoch", 0);
    tr.best_epoch = man.at("best").value("epoch", 0);
    tr.best_ndcg = man.at("best").value("ndcg20", -1.0);
    tr.val_history.clear();
    for (const auto& h : man.at("val_history"))
        tr.val_history.push_back(
            {double(h.value("epoch", 0)), h.value("recall20", 0.0), h.value("ndcg20", 0.0)});
    // The stored parameters are the best-so-far state whenever the writer
    // saved after restoring its best snapshot; reseed the in-memory copy.
    tr.best = tr.snapshot();
    tr.best.best_epoch = tr.best_epoch;
    tr.best.best_ndcg = tr.best_ndcg;
}

}  // namespace magnet
