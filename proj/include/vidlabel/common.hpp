#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidlabel {

using LabelId = std::uint32_t;

// Error hierarchy. The CLI maps these onto exit codes (usage 1, data 2, numerical 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class RankDeficientError : public NumericalError {
public:
    RankDeficientError(const std::string& what, std::size_t effective_rank)
        : NumericalError(what), effective_rank_(effective_rank) {}

    std::size_t effective_rank() const noexcept { return effective_rank_; }

private:
    std::size_t effective_rank_;
};

/// Dense row-major matrix of doubles; the common currency for samples of vectors.
class RowMatrix {
public:
    RowMatrix() = default;
    RowMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    // The first appended row fixes the column count of an empty matrix.
    void append_row(std::span<const double> values);
    void reserve_rows(std::size_t n) { data_.reserve(n * cols_); }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool operator==(const RowMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// A vector result that may be degenerate (e.g. a zero projection that could not be normalized).
struct FlaggedVector {
    std::vector<double> values;
    bool degenerate = false;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Scales v to unit L2 norm in place; returns false (leaving v untouched) when the norm is zero.
bool l2_normalize(std::span<double> v);

/// SplitMix64 finalizer; used to derive independent RNG streams from (seed, key) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

/// 64-bit FNV-1a, used for config hashes embedded in output artifacts.
std::uint64_t fnv1a64(std::string_view text);

std::string hex64(std::uint64_t value);

}  // namespace vidlabel
