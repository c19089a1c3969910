#include "fft.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace calibrex::detail {

namespace {

struct PlanPair {
    fftw_plan forward;
    fftw_plan inverse;
};

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Plans live for the whole process; FFTW owns them.
PlanPair plans_for(std::size_t length) {
    static std::map<std::size_t, PlanPair> cache;
    std::lock_guard lock(planner_mutex());
    if (const auto it = cache.find(length); it != cache.end())
        return it->second;

    const auto n = static_cast<int>(length);
    auto real = fftw_buffer<double>(length);
    auto spectrum = fftw_buffer<fftw_complex>(length / 2 + 1);
    PlanPair p{fftw_plan_dft_r2c_1d(n, real.get(), spectrum.get(), FFTW_ESTIMATE),
               fftw_plan_dft_c2r_1d(n, spectrum.get(), real.get(), FFTW_ESTIMATE)};
    if (p.forward == nullptr || p.inverse == nullptr)
        throw std::runtime_error("FFTW could not plan a transform of length " +
                                 std::to_string(length));
    cache.emplace(length, p);
    return p;
}

}  // namespace

RealFft::RealFft(std::size_t length) : length_(length) {
    if (length < 2)
        throw std::invalid_argument("FFT length must be at least 2");
    const auto p = plans_for(length);
    forward_ = p.forward;
    inverse_ = p.inverse;
}

void RealFft::forward(double* in, fftw_complex* out) const {
    fftw_execute_dft_r2c(forward_, in, out);
}

void RealFft::inverse(fftw_complex* in, double* out) const {
    fftw_execute_dft_c2r(inverse_, in, out);
}

}  // namespace calibrex::detail
