#include "bilip/common.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace bilip {

int default_jobs() {
    if (const char* env = std::getenv("BILIP_JOBS")) {
        int j = std::atoi(env);
        if (j >= 1) return j;
    }
    return 1;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
    if (jobs <= 0) jobs = default_jobs();
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0 && jobs > static_cast<int>(hw)) jobs = static_cast<int>(hw);
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    std::exception_ptr first_error = nullptr;
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    for (int t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace bilip
