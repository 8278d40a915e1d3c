#pragma once

// Process-wide count of outbound HTTP requests. Offline runs assert this
// stays at zero; every external client bumps it before touching the socket.

#include <atomic>
#include <cstdint>

namespace xlwm {

inline std::atomic<std::uint64_t>& net_request_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

}  // namespace xlwm
