#include "hpx/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace hpx {

namespace {

std::atomic<std::size_t> g_override{0};
// Nested parallel_for calls run inline on the calling worker.
thread_local bool t_inside = false;

std::size_t env_workers() {
    static const std::size_t n = [] {
        std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("HPX_THREADS")) {
            try {
                const long v = std::stol(env);
                if (v >= 1) {
                    return std::min<std::size_t>(static_cast<std::size_t>(v), hw);
                }
            } catch (...) {
            }
        }
        return hw;
    }();
    return n;
}

}  // namespace

std::size_t worker_count() {
    const auto o = g_override.load();
    return o ? o : env_workers();
}

void set_worker_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t min_parallel) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1 || n < min_parallel || t_inside) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(workers);
    auto run = [&](std::size_t w) {
        const bool outer = t_inside;
        t_inside = true;
        try {
            for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) {
                body(i);
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
        t_inside = outer;
    };
    {
        std::vector<std::jthread> threads;
        threads.reserve(workers - 1);
        for (std::size_t w = 1; w < workers && w * chunk < n; ++w) {
            threads.emplace_back(run, w);
        }
        run(0);
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace hpx
