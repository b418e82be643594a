#include "hdgmm/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hdgmm {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_chunks(Eigen::Index n, int threads,
                     const std::function<void(Eigen::Index, Eigen::Index)>& fn) {
    if (n <= 0) return;
    const int workers = std::min<Eigen::Index>(resolve_threads(threads), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }

    const Eigen::Index base = n / workers;
    const Eigen::Index rem = n % workers;

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));

    Eigen::Index begin = 0;
    for (int w = 0; w < workers; ++w) {
        const Eigen::Index len = base + (w < rem ? 1 : 0);
        const Eigen::Index end = begin + len;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
        begin = end;
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace hdgmm
