#include <doctest.h>

#include <limits>
#include <stdexcept>

#include "flowsr/tensor.hpp"

using flowsr::Tensor;

TEST_CASE("construction and basic accessors") {
    Tensor t({2, 3, 4});
    CHECK(t.rank() == 3);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(2) == 4);
    CHECK(t.size() == 24);
    for (std::int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

    Tensor f({2, 2}, 1.5);
    CHECK(f[0] == 1.5);
    CHECK(f[3] == 1.5);
}

TEST_CASE("from_data checks the element count") {
    CHECK_NOTHROW(Tensor::from_data({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("4-d indexing is row major") {
    Tensor t({2, 2, 2, 2});
    t.at4(1, 0, 1, 0) = 7.0;
    CHECK(t[t.index4(1, 0, 1, 0)] == 7.0);
    // [c,d,h,w] with w fastest
    CHECK(t.index4(0, 0, 0, 1) == 1);
    CHECK(t.index4(0, 0, 1, 0) == 2);
    CHECK(t.index4(0, 1, 0, 0) == 4);
    CHECK(t.index4(1, 0, 0, 0) == 8);
}

TEST_CASE("elementwise compound ops") {
    Tensor a = Tensor::from_data({3}, {1, 2, 3});
    Tensor b = Tensor::from_data({3}, {10, 20, 30});
    a += b;
    CHECK(a[2] == 33);
    a -= b;
    CHECK(a[2] == 3);
    a *= 2.0;
    CHECK(a[0] == 2);
    Tensor c({4});
    CHECK_THROWS_AS(a += c, std::invalid_argument);
}

TEST_CASE("reductions") {
    Tensor a = Tensor::from_data({4}, {-5, 1, 2, 3});
    CHECK(flowsr::sum(a) == 1.0);
    CHECK(flowsr::max_abs(a) == 5.0);
    Tensor b = Tensor::from_data({4}, {-5, 1, 2, 4});
    CHECK(flowsr::max_abs_diff(a, b) == 1.0);
}

TEST_CASE("finite check") {
    Tensor a = Tensor::from_data({2}, {1, 2});
    CHECK(a.all_finite());
    a[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(a.all_finite());
    a[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(a.all_finite());
}

TEST_CASE("channel concat and slice round trip") {
    Tensor a({2, 1, 2, 2});
    Tensor b({3, 1, 2, 2});
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i);
    for (std::int64_t i = 0; i < b.size(); ++i) b[i] = 100.0 + static_cast<double>(i);
    Tensor ab = flowsr::concat_channels(a, b);
    CHECK(ab.dim(0) == 5);
    Tensor a2 = flowsr::slice_channels(ab, 0, 2);
    Tensor b2 = flowsr::slice_channels(ab, 2, 5);
    CHECK(flowsr::max_abs_diff(a, a2) == 0.0);
    CHECK(flowsr::max_abs_diff(b, b2) == 0.0);
    CHECK_THROWS_AS(flowsr::slice_channels(ab, 4, 6), std::invalid_argument);
}

TEST_CASE("shape helpers") {
    CHECK(flowsr::shape_numel({2, 3, 4}) == 24);
    CHECK(flowsr::shape_str({2, 3}) == "[2,3]");
    Tensor a({2, 3});
    Tensor b({2, 3});
    Tensor c({3, 2});
    CHECK(a.same_shape(b));
    CHECK_FALSE(a.same_shape(c));
}
