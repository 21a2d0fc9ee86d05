#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfarec {

enum class ErrorCode {
    usage = 1,
    shape = 10,
    domain = 11,
    index = 12,
    numeric = 13,
    io = 20,
    schema = 21,
    config = 22,
    emptiness = 23,
    provenance = 30,
    diverged = 31,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorCode::shape, w) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorCode::domain, w) {}
};
struct IndexError : Error {
    explicit IndexError(const std::string& w) : Error(ErrorCode::index, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorCode::numeric, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorCode::io, w) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorCode::schema, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorCode::config, w) {}
};
struct EmptinessError : Error {
    explicit EmptinessError(const std::string& w) : Error(ErrorCode::emptiness, w) {}
};
struct ProvenanceError : Error {
    explicit ProvenanceError(const std::string& w) : Error(ErrorCode::provenance, w) {}
};

// Plain dense row-major matrix, no autodiff. Used for static structures
// (adjacency, correlation matrices) and as the value buffer behind tensors.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    std::size_t numel() const { return rows * cols; }

    bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && a == o.a; }
};

// C = A[m×k] * B[k×n], accumulating into C (caller zeroes C).
void mm_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
// C += A[m×k] * B[n×k]^T
void mm_nt_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
// C += A[k×m]^T * B[k×n]
void mm_tn_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);

Mat mat_mul(const Mat& A, const Mat& B);
Mat mat_mul_nt(const Mat& A, const Mat& B);

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

using Rng = std::mt19937_64;

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace nfarec
