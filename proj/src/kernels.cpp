#include "apc/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace apc::kern {

namespace {

std::atomic<bool>& flag() {
    // APCLAB_SERIAL=1 forces the serial reference kernels for a whole process.
    static std::atomic<bool> on = [] {
        const char* env = std::getenv("APCLAB_SERIAL");
        return !(env && env[0] == '1');
    }();
    return on;
}

} // namespace

bool parallel_enabled() { return flag().load(std::memory_order_relaxed); }

void set_parallel(bool on) { flag().store(on, std::memory_order_relaxed); }

} // namespace apc::kern
