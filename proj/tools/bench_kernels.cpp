// Timing comparison of the parallel kernels against their serial reference
// implementations on a synthetic workload. Usage: bench_kernels [scale]

#include <chrono>
#include <cstdio>
#include <string>

#include "magnet/data.hpp"
#include "magnet/encoder.hpp"
#include "magnet/graph.hpp"
#include "magnet/parallel.hpp"
#include "magnet/ref.hpp"

using namespace magnet;

namespace {

double seconds_of(const std::function<void()>& fn, int reps) {
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();
    int scale = argc > 1 ? std::stoi(argv[1]) : 1;

    SyntheticSpec spec;
    spec.num_users = 600 * scale;
    spec.num_items = 400 * scale;
    spec.dim_a = 64;
    spec.dim_s = 48;
    spec.density = 0.05;
    SyntheticData sd = generate_synthetic(spec);
    ViewGraph g = build_view_graph(sd.interactions, nullptr, View::UI);

    const int d = 64;
    Mat<float> e0u(spec.num_users, d), e0i(spec.num_items, d);
    Rng r(42);
    for (auto& v : e0u.v) v = float(r.next_double() - 0.5);
    for (auto& v : e0i.v) v = float(r.next_double() - 0.5);

    std::printf("threads: %d\n", max_threads());
    std::printf("%-28s %12s %12s %8s\n", "kernel", "serial(ms)", "parallel(ms)", "speedup");

    {
        Mat<float> out_p(spec.num_users, d), out_s(spec.num_users, d);
        double tp = seconds_of([&] { spmm(g.u_off, g.u_adj, g.u_coef, e0i, out_p); }, 20);
        double ts = seconds_of(
            [&] { ref::spmm_serial(g.u_off, g.u_adj, g.u_coef, e0i, out_s); }, 20);
        bool same = out_p.v == out_s.v;
        std::printf("%-28s %12.3f %12.3f %7.2fx%s\n", "graph propagation (spmm)", ts * 1e3,
                    tp * 1e3, ts / tp, same ? "" : "  MISMATCH");
    }
    {
        NeighborIndex ip, is;
        double tp = seconds_of([&] { ip = build_neighbor_index(sd.feat_a, 20); }, 3);
        double ts = seconds_of([&] { is = ref::knn_bruteforce(sd.feat_a, 20); }, 3);
        bool same = ip.ids == is.ids;
        std::printf("%-28s %12.3f %12.3f %7.2fx%s\n", "cosine knn (k=20)", ts * 1e3, tp * 1e3,
                    ts / tp, same ? "" : "  MISMATCH");
    }
    return 0;
}
