#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <type_traits>
#include <vector>

#include "gsmfast/errors.hpp"

namespace gsmfast {

using cplx = std::complex<double>;

/**
 * Dense row-major tensor with a fixed rank.
 *
 * The last index is contiguous, so `Tensor<cplx, 3>` indexed (f, t, m) keeps
 * each microphone vector x_ft in one cache line for small M.
 */
template <typename T, std::size_t Rank> class Tensor {
    static_assert(Rank >= 1, "Tensor rank must be positive");

  public:
    using value_type = T;
    using extents_type = std::array<std::size_t, Rank>;

    Tensor() { extents_.fill(0); }

    explicit Tensor(const extents_type& extents, const T& value = T())
        : extents_(extents), data_(count(extents), value) {
        compute_strides();
    }

    template <typename... Dims>
        requires(sizeof...(Dims) == Rank &&
                 (std::is_convertible_v<Dims, std::size_t> && ...))
    explicit Tensor(Dims... dims)
        : Tensor(extents_type{static_cast<std::size_t>(dims)...}) {}

    template <typename... Idx>
        requires(sizeof...(Idx) == Rank)
    T& operator()(Idx... idx) noexcept {
        return data_[offset(static_cast<std::size_t>(idx)...)];
    }

    template <typename... Idx>
        requires(sizeof...(Idx) == Rank)
    const T& operator()(Idx... idx) const noexcept {
        return data_[offset(static_cast<std::size_t>(idx)...)];
    }

    /// Contiguous view of the innermost dimension at a fixed leading index.
    template <typename... Idx>
        requires(sizeof...(Idx) == Rank - 1)
    std::span<T> row(Idx... idx) noexcept {
        return {data_.data() + offset(static_cast<std::size_t>(idx)..., std::size_t{0}),
                extents_[Rank - 1]};
    }

    template <typename... Idx>
        requires(sizeof...(Idx) == Rank - 1)
    std::span<const T> row(Idx... idx) const noexcept {
        return {data_.data() + offset(static_cast<std::size_t>(idx)..., std::size_t{0}),
                extents_[Rank - 1]};
    }

    const extents_type& extents() const noexcept { return extents_; }
    std::size_t extent(std::size_t axis) const noexcept { return extents_[axis]; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> flat() noexcept { return data_; }
    std::span<const T> flat() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    void fill(const T& value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const Tensor& other) const = default;

  private:
    static std::size_t count(const extents_type& e) {
        return std::accumulate(e.begin(), e.end(), std::size_t{1},
                               std::multiplies<>());
    }

    void compute_strides() {
        std::size_t s = 1;
        for (std::size_t i = Rank; i-- > 0;) {
            strides_[i] = s;
            s *= extents_[i];
        }
    }

    template <typename... Idx> std::size_t offset(Idx... idx) const noexcept {
        const std::array<std::size_t, Rank> ix{idx...};
        std::size_t off = 0;
        for (std::size_t i = 0; i < Rank; ++i) {
            assert(ix[i] < extents_[i]);
            off += ix[i] * strides_[i];
        }
        return off;
    }

    extents_type extents_{};
    extents_type strides_{};
    std::vector<T> data_;
};

template <typename T> using Tensor2 = Tensor<T, 2>;
template <typename T> using Tensor3 = Tensor<T, 3>;
template <typename T> using Tensor4 = Tensor<T, 4>;

} // namespace gsmfast
