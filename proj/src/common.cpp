#include "usm/common.hpp"

#include <algorithm>
#include <atomic>
#include <functional>

namespace usm {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) { g_threads = std::max(1, n); }

int thread_count() { return g_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain) {
    if (n == 0) return;
    const std::size_t chunks = (n + grain - 1) / grain;
    const int workers = std::min<std::size_t>(g_threads, chunks);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        while (true) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) break;
            const std::size_t begin = c * grain;
            fn(begin, std::min(begin + grain, n));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

}  // namespace usm
