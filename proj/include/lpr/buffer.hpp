#pragma once

// Reservoir-sampled replay memory.
//
// The k-th example ever seen (1-based) is kept with probability
// capacity / k once the buffer is full, replacing a uniformly chosen slot.
// This yields a uniform sample over the whole history regardless of stream
// length. Construct with unlimited_capacity to keep everything (append-only).
//
// Draw discipline, for bit-exact reproduction: update() consumes exactly one
// next_below(seen) per incoming row once the buffer is full and nothing
// before that; sample(n) consumes exactly min(n, size) next_below calls via a
// partial Fisher-Yates shuffle; sample_for_preconditioner(1.0) consumes none.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lpr/errors.hpp"
#include "lpr/matrix.hpp"
#include "lpr/rng.hpp"

namespace lpr {

inline constexpr std::size_t unlimited_capacity = std::numeric_limits<std::size_t>::max();

struct BufferItem {
    std::vector<double> features;
    int label = 0;
};

struct BufferSample {
    Matrix x;
    std::vector<int> y;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0)
            throw input_error("ReplayBuffer: capacity must be positive (use unlimited_capacity for no bound)");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    std::uint64_t seen() const { return seen_; }
    bool empty() const { return items_.empty(); }
    std::size_t feature_dim() const { return dim_; }
    const std::vector<BufferItem>& items() const { return items_; }

    // Offer every row of the batch to the reservoir.
    void update(const Matrix& x, const std::vector<int>& y, SplitMix64& rng) {
        if (y.size() != x.rows)
            throw shape_error("ReplayBuffer::update: " + std::to_string(y.size()) + " labels for " +
                              std::to_string(x.rows) + " rows");
        if (x.rows == 0) return;
        if (dim_ == 0 && items_.empty()) {
            dim_ = x.cols;
        } else if (x.cols != dim_) {
            throw shape_error("ReplayBuffer::update: feature width " + std::to_string(x.cols) +
                              " does not match stored width " + std::to_string(dim_));
        }
        for (std::size_t r = 0; r < x.rows; ++r) {
            ++seen_;
            BufferItem item;
            const double* row = x.data.data() + r * x.cols;
            item.features.assign(row, row + x.cols);
            item.label = y[r];
            if (items_.size() < capacity_) {
                items_.push_back(std::move(item));
            } else {
                const std::uint64_t j = rng.next_below(seen_);
                if (j < capacity_) items_[static_cast<std::size_t>(j)] = std::move(item);
            }
        }
    }

    // Draw min(n, size) distinct items uniformly without replacement.
    BufferSample sample(std::size_t n, SplitMix64& rng) const {
        const std::size_t k = std::min(n, items_.size());
        BufferSample out;
        out.x = Matrix(k, dim_);
        out.y.resize(k);
        if (k == 0) return out;
        std::vector<std::size_t> idx(items_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
            std::swap(idx[i], idx[j]);
            const BufferItem& item = items_[idx[i]];
            for (std::size_t c = 0; c < dim_; ++c) out.x(i, c) = item.features[c];
            out.y[i] = item.label;
        }
        return out;
    }

    // Rows for rebuilding the preconditioner: a fraction p of the buffer,
    // rounded up. p == 1 returns every stored row in storage order without
    // touching the generator, so full-buffer refreshes are deterministic
    // regardless of sampling history.
    Matrix sample_for_preconditioner(double p, SplitMix64& rng) const {
        if (!(p > 0.0) || p > 1.0)
            throw input_error("sample_for_preconditioner: fraction must be in (0, 1], got " + std::to_string(p));
        if (items_.empty()) return Matrix(0, dim_);
        if (p == 1.0) {
            Matrix all(items_.size(), dim_);
            for (std::size_t i = 0; i < items_.size(); ++i)
                for (std::size_t c = 0; c < dim_; ++c) all(i, c) = items_[i].features[c];
            return all;
        }
        const std::size_t m =
            static_cast<std::size_t>(std::min<double>(static_cast<double>(items_.size()),
                                                      std::ceil(p * static_cast<double>(items_.size()))));
        const BufferSample s = sample(m, rng);
        return s.x;
    }

  private:
    std::size_t capacity_;
    std::size_t dim_ = 0;
    std::uint64_t seen_ = 0;
    std::vector<BufferItem> items_;
};

}  // namespace lpr
