#include <catch2/catch_amalgamated.hpp>

#include "xview/matrix.hpp"
#include "xview/rng.hpp"

using namespace xview;

TEST_CASE("matrix shape and storage invariants", "[matrix]") {
    Matrix m(3, 4, 1.5);
    REQUIRE(m.rows == 3);
    REQUIRE(m.cols == 4);
    REQUIRE(m.size() == 12);
    for (double v : m.data) REQUIRE(v == 1.5);
    m(2, 3) = -7.0;
    REQUIRE(m.data[11] == -7.0);  // row-major layout

    REQUIRE_THROWS_AS(Matrix(0, 3), dimension_error);
    REQUIRE_THROWS_AS(Matrix(3, -1), dimension_error);
}

TEST_CASE("matmul_values against hand computation", "[matrix]") {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix b(3, 2);
    b.data = {7, 8, 9, 10, 11, 12};
    Matrix c = matmul_values(a, b);
    REQUIRE(c(0, 0) == 58.0);
    REQUIRE(c(0, 1) == 64.0);
    REQUIRE(c(1, 0) == 139.0);
    REQUIRE(c(1, 1) == 154.0);

    Matrix bad(2, 2);
    REQUIRE_THROWS_AS(matmul_values(a, bad), dimension_error);
}

TEST_CASE("transpose and identity", "[matrix]") {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix t = transpose_values(a);
    REQUIRE(t.rows == 3);
    REQUIRE(t(0, 1) == 4.0);
    REQUIRE(t(2, 0) == 3.0);

    Matrix i3 = Matrix::identity(3);
    Matrix p = matmul_values(i3, a.rows == 2 ? transpose_values(a) : a);
    REQUIRE(max_abs_diff(p, transpose_values(a)) == 0.0);
}

TEST_CASE("pcg32 determinism across instances", "[rng]") {
    Rng a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u32() == b.next_u32());

    // distinct streams from the same seed diverge
    Rng c(42, 8);
    int differ = 0;
    Rng a2(42, 7);
    for (int i = 0; i < 64; ++i) differ += a2.next_u32() != c.next_u32();
    REQUIRE(differ > 32);
}

TEST_CASE("pcg32 reference vector", "[rng]") {
    // First outputs of the published pcg32 minimal demo for seed 42, stream 54.
    Rng r(42, 54);
    const uint32_t expected[5] = {0xa15c02b7u, 0x7b47f409u, 0xba1d3330u, 0x83d2f293u, 0xbfa4784bu};
    for (uint32_t e : expected) REQUIRE(r.next_u32() == e);
}

TEST_CASE("pcg32 golden values", "[rng]") {
    // Pinned outputs; a change here means the generator algorithm changed
    // and every seeded artifact in the project would shift.
    Rng r(1, 0);
    REQUIRE(r.next_u32() == 3795398737u);
    REQUIRE(r.next_u32() == 17903413u);
    Rng s(12345, 6);
    REQUIRE(s.next_u32() == 1985316396u);
    REQUIRE(s.next_u32() == 1977560913u);
    REQUIRE(s.next_u32() == 3056590845u);
}

TEST_CASE("uniform range and mean", "[rng]") {
    Rng r(7, 0);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(std::fabs(sum / 20000 - 0.5) < 0.01);
}

TEST_CASE("below is unbiased over small ranges", "[rng]") {
    Rng r(11, 0);
    std::vector<int> counts(5, 0);
    const int n = 50000;
    for (int i = 0; i < n; ++i) ++counts[r.below(5)];
    for (int c : counts) REQUIRE(std::fabs(c - n / 5.0) < 5 * std::sqrt(n / 5.0));
}

TEST_CASE("normal moments", "[rng]") {
    Rng r(13, 0);
    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        sum += v;
        sq += v * v;
    }
    REQUIRE(std::fabs(sum / n) < 0.02);
    REQUIRE(std::fabs(sq / n - 1.0) < 0.03);
}

TEST_CASE("shuffle is a permutation and seed-stable", "[rng]") {
    std::vector<int> v(20);
    for (int i = 0; i < 20; ++i) v[i] = i;
    Rng r(99, 1);
    r.shuffle(v);
    std::vector<int> w = v;
    std::sort(w.begin(), w.end());
    for (int i = 0; i < 20; ++i) REQUIRE(w[i] == i);

    std::vector<int> v2(20);
    for (int i = 0; i < 20; ++i) v2[i] = i;
    Rng r2(99, 1);
    r2.shuffle(v2);
    REQUIRE(v == v2);
}
