#include "core/common.hpp"

#include <cmath>
#include <sstream>

namespace nfarec {

void mm_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void mm_nt_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

void mm_tn_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
               std::size_t n) {
    // A is k×m, B is k×n, C is m×n
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = A + p * m;
        const double* bp = B + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double api = ap[i];
            if (api == 0.0) continue;
            double* ci = C + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += api * bp[j];
            }
        }
    }
}

Mat mat_mul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) {
        throw ShapeError("mat_mul: " + shape_str({A.rows, A.cols}) + " x " +
                         shape_str({B.rows, B.cols}));
    }
    Mat C(A.rows, B.cols);
    mm_acc(A.a.data(), B.a.data(), C.a.data(), A.rows, A.cols, B.cols);
    return C;
}

Mat mat_mul_nt(const Mat& A, const Mat& B) {
    if (A.cols != B.cols) {
        throw ShapeError("mat_mul_nt: " + shape_str({A.rows, A.cols}) + " x " +
                         shape_str({B.rows, B.cols}) + "^T");
    }
    Mat C(A.rows, B.rows);
    mm_nt_acc(A.a.data(), B.a.data(), C.a.data(), A.rows, A.cols, B.rows);
    return C;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace nfarec
