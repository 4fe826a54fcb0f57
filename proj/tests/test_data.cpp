#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "sqr/data.hpp"

using namespace sqr;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

} // namespace

TEST_CASE("load_csv basics") {
    const std::string path = temp_path("sqr_test_basic.csv");
    write_file(path, "x,y\n1,2\n3,4\n");
    const Dataset ds = load_csv(path);
    CHECK(ds.n() == 2);
    CHECK(ds.d() == 1);
    CHECK(ds.names == std::vector<std::string>{"x"});
    CHECK(ds.target_name == "y");
    CHECK(ds.features(1, 0) == 3.0);
    CHECK(ds.target[1] == 4.0);
    std::remove(path.c_str());
}

TEST_CASE("load_csv rejects bad rows with indexed errors") {
    const std::string path = temp_path("sqr_test_bad.csv");
    write_file(path, "x,y\n1,2\n3,NaN\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("row 2"), DataError);

    write_file(path, "x,y\n1,2\n3,\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("row 2"), DataError);

    write_file(path, "x,y\n1,2\n3,abc\n");
    CHECK_THROWS_AS(load_csv(path), DataError);

    write_file(path, "x,y\n"); // header only, no data rows
    CHECK_THROWS_AS(load_csv(path), DataError);

    CHECK_THROWS_AS(load_csv(temp_path("sqr_no_such_file.csv")), DataError);
    std::remove(path.c_str());
}

TEST_CASE("target column selection by name") {
    const std::string path = temp_path("sqr_test_target.csv");
    write_file(path, "a,b,c\n1,2,3\n4,5,6\n");
    const Dataset ds = load_csv(path, "b");
    CHECK(ds.target == std::vector<double>{2.0, 5.0});
    CHECK(ds.names == std::vector<std::string>{"a", "c"});
    CHECK_THROWS_AS(load_csv(path, "zzz"), DataError);
    std::remove(path.c_str());
}

TEST_CASE("write/load round trip is bit exact") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    Dataset ds;
    ds.features = Matrix(30, 3);
    ds.names = {"a", "b", "c"};
    ds.target_name = "y";
    for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t j = 0; j < 3; ++j) ds.features(i, j) = u(rng) / 3.0;
        ds.target.push_back(u(rng) / 7.0);
    }
    const std::string path = temp_path("sqr_test_roundtrip.csv");
    write_csv(ds, path);
    const Dataset back = load_csv(path);
    REQUIRE(back.n() == ds.n());
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(back.target[i] == ds.target[i]);
        for (std::size_t j = 0; j < 3; ++j) CHECK(back.features(i, j) == ds.features(i, j));
    }
    std::remove(path.c_str());
}

TEST_CASE("kfold partitions rows with balanced sizes") {
    const FoldPlan p10 = kfold(10, 5, 3);
    std::vector<int> sizes(5, 0);
    for (const int f : p10.assignments) ++sizes[f];
    for (const int s : sizes) CHECK(s == 2);

    const FoldPlan p11 = kfold(11, 5, 3);
    std::vector<int> sizes11(5, 0);
    for (const int f : p11.assignments) ++sizes11[f];
    std::sort(sizes11.begin(), sizes11.end());
    CHECK(sizes11 == std::vector<int>{2, 2, 2, 2, 3});

    const FoldPlan again = kfold(11, 5, 3);
    CHECK(again.assignments == p11.assignments);

    CHECK_THROWS_AS(kfold(3, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(kfold(10, 1, 0), std::invalid_argument);
}

TEST_CASE("split_fold partitions the dataset") {
    Dataset ds;
    ds.features = Matrix(10, 1);
    ds.names = {"x"};
    ds.target_name = "y";
    for (int i = 0; i < 10; ++i) {
        ds.features(i, 0) = i;
        ds.target.push_back(2 * i);
    }
    const FoldPlan plan = kfold(10, 5, 1);
    auto [train, test] = split_fold(ds, plan, 0);
    CHECK(train.n() == 8);
    CHECK(test.n() == 2);
    std::multiset<double> all(train.target.begin(), train.target.end());
    all.insert(test.target.begin(), test.target.end());
    std::multiset<double> expect(ds.target.begin(), ds.target.end());
    CHECK(all == expect);
}

TEST_CASE("subsample") {
    std::mt19937_64 rng(5);
    Dataset small;
    small.features = Matrix(500, 1);
    small.names = {"x"};
    small.target_name = "y";
    for (int i = 0; i < 500; ++i) {
        small.features(i, 0) = i;
        small.target.push_back(i);
    }
    const Dataset same = subsample(small, 10000, 1);
    CHECK(same.target == small.target); // identity including order

    Dataset big;
    big.features = Matrix(20000, 1);
    big.names = {"x"};
    big.target_name = "y";
    for (int i = 0; i < 20000; ++i) {
        big.features(i, 0) = i;
        big.target.push_back(i);
    }
    const Dataset cut = subsample(big, 10000, 1);
    CHECK(cut.n() == 10000);
    std::set<double> seen;
    for (const double v : cut.target) {
        CHECK(v >= 0.0);
        CHECK(v < 20000.0);
        CHECK(seen.insert(v).second); // no duplicates
    }
}

TEST_CASE("normal quantile function") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.9) == doctest::Approx(1.2815515655446004).epsilon(1e-9));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    for (const double p : {0.001, 0.1, 0.42, 0.77, 0.999})
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
    CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
}

TEST_CASE("heteroskedastic generator matches its analytic quantiles") {
    const SynthResult res = synth_heteroskedastic(100000, 3.0, 1.0, 77);
    CHECK(res.quantile(0.5, 0.0) == 0.0);  // all quantiles collapse at x = 0
    CHECK(res.quantile(0.9, 0.0) == 0.0);
    CHECK(res.quantile(0.5, 0.7) == doctest::Approx(3.0 * 0.7).epsilon(1e-12));

    // empirical 0.9-quantile of y for x in [0.45, 0.55] vs q_.9(0.5), within 2%
    std::vector<double> bucket;
    for (std::size_t i = 0; i < res.data.n(); ++i) {
        const double x = res.data.features(i, 0);
        if (x >= 0.45 && x <= 0.55) bucket.push_back(res.data.target[i]);
    }
    REQUIRE(bucket.size() > 1000);
    std::sort(bucket.begin(), bucket.end());
    const double emp = bucket[static_cast<std::size_t>(0.9 * bucket.size())];
    const double truth = res.quantile(0.9, 0.5);
    CHECK(std::abs(emp - truth) / std::abs(truth) < 0.02);
}

TEST_CASE("linear and trig generators") {
    const SynthResult lin = synth_linear(1000, 2.0, 3.0, 0.5, 9);
    CHECK(lin.quantile(0.5, 0.4) == doctest::Approx(2.0 + 3.0 * 0.4));
    CHECK(lin.quantile(0.9, 0.4) - lin.quantile(0.9, 0.0) ==
          doctest::Approx(3.0 * 0.4)); // parallel quantile lines

    const SynthResult trig = synth_trig(1000, 3.0, 1.0, 0.5, 9);
    CHECK(trig.quantile(0.5, M_PI / 2.0) == doctest::Approx(3.0));
    for (std::size_t i = 0; i < trig.data.n(); ++i) {
        CHECK(trig.data.features(i, 0) >= 0.0);
        CHECK(trig.data.features(i, 0) <= 2.0 * M_PI);
    }

    // determinism
    const SynthResult a = synth_heteroskedastic(50, 3.0, 1.0, 4);
    const SynthResult b = synth_heteroskedastic(50, 3.0, 1.0, 4);
    CHECK(a.data.target == b.data.target);
}
