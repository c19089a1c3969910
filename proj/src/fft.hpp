#pragma once

// Thin RAII layer over FFTW's real-to-complex transforms. Plans are created
// once per length and shared; fftw_execute_* on distinct buffers is
// thread-safe, plan creation is serialized here.

#include <complex>
#include <cstddef>
#include <memory>

#include <fftw3.h>

namespace calibrex::detail {

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
    auto* raw = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (raw == nullptr)
        throw std::bad_alloc();
    return FftwBuffer<T>(raw);
}

class RealFft {
public:
    explicit RealFft(std::size_t length);

    std::size_t length() const noexcept { return length_; }
    std::size_t spectrum_length() const noexcept { return length_ / 2 + 1; }

    /// in has length(), out has spectrum_length() entries.
    void forward(double* in, fftw_complex* out) const;
    /// Unnormalized inverse; destroys `in`.
    void inverse(fftw_complex* in, double* out) const;

private:
    std::size_t length_;
    fftw_plan forward_;
    fftw_plan inverse_;
};

}  // namespace calibrex::detail
