#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

namespace hforget {

inline constexpr int kNumParams = 5;
// Packed upper triangle of a symmetric 5x5 matrix, row-major: (0,0),(0,1),...,(0,4),(1,1),...
inline constexpr int kSymPacked = 15;

using Vec5 = Eigen::Matrix<double, kNumParams, 1>;
using Mat5 = Eigen::Matrix<double, kNumParams, kNumParams>;

using QuoteId = std::int64_t;
using ShardId = std::int64_t;

using SymPacked = std::array<double, kSymPacked>;

// Position of (row, col), row <= col, inside a SymPacked array.
constexpr int packed_index(int row, int col) {
    return row * kNumParams - row * (row - 1) / 2 + (col - row);
}

inline Mat5 unpack_symmetric(const SymPacked& p) {
    Mat5 m;
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a; b < kNumParams; ++b) {
            m(a, b) = p[packed_index(a, b)];
            m(b, a) = m(a, b);
        }
    }
    return m;
}

inline SymPacked pack_upper(const Mat5& m) {
    SymPacked p{};
    for (int a = 0; a < kNumParams; ++a) {
        for (int b = a; b < kNumParams; ++b) p[packed_index(a, b)] = m(a, b);
    }
    return p;
}

}  // namespace hforget
