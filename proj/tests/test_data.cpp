#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "durm/data.hpp"

using namespace durm;
namespace fs = std::filesystem;

namespace {

fs::path write_temp_csv(const std::string& name, const std::string& body) {
    const fs::path path = fs::temp_directory_path() / name;
    std::ofstream out(path);
    out << body;
    return path;
}

}  // namespace

TEST_CASE("gen_blobs produces the requested layout")
{
    const Dataset d = gen_blobs(42, 3, 50, 2, 5.0, 1.0);
    CHECK(d.size() == 150);
    CHECK(d.dim() == 2);
    CHECK(d.num_classes == 3);
    std::vector<std::size_t> hist = class_histogram(d);
    for (std::size_t c = 0; c < 3; ++c) CHECK(hist[c] == 50);
    CHECK(d.provenance.find("blobs(") == 0);
    CHECK(d.provenance.find("seed=42") != std::string::npos);
}

TEST_CASE("gen_blobs is deterministic in the seed")
{
    const Dataset a = gen_blobs(7, 2, 20, 3, 4.0, 0.5);
    const Dataset b = gen_blobs(7, 2, 20, 3, 4.0, 0.5);
    const Dataset c = gen_blobs(8, 2, 20, 3, 4.0, 0.5);
    CHECK(a.features.data == b.features.data);
    CHECK(a.labels == b.labels);
    CHECK(a.features.data != c.features.data);
}

TEST_CASE("gen_blobs centers sit on signed axes")
{
    // Class c < dim centers at +separation on axis c; spread 0.2 keeps the
    // sample mean within ~6 sigma / sqrt(n) of the center.
    const double sep = 6.0;
    const Dataset d = gen_blobs(11, 4, 200, 2, sep, 0.2);
    CHECK(d.num_classes == 4);
    for (std::size_t c = 0; c < 4; ++c) {
        Vector mean(2, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d.labels[i] != c) continue;
            for (std::size_t k = 0; k < 2; ++k) mean[k] += d.features(i, k);
            ++n;
        }
        for (double& v : mean) v /= double(n);
        const std::size_t axis = c % 2;
        const double sign = c < 2 ? 1.0 : -1.0;
        CHECK(mean[axis] == doctest::Approx(sign * sep).epsilon(0.02));
        CHECK(std::abs(mean[1 - axis]) < 0.1);
    }
}

TEST_CASE("gen_blobs rejects more classes than signed axes")
{
    CHECK_THROWS_AS(gen_blobs(1, 5, 10, 2, 3.0, 1.0), std::invalid_argument);
    CHECK_NOTHROW(gen_blobs(1, 4, 10, 2, 3.0, 1.0));
}

TEST_CASE("load_csv reads features and integer labels at face value")
{
    const fs::path path = write_temp_csv("durm_csv_int.csv",
        "f0,f1,label\n"
        "0.5,1.5,0\n"
        "1.0,-2.0,2\n"
        "3.25,0.0,0\n");
    const Dataset d = load_csv(path.string(), "label");
    CHECK(d.size() == 3);
    CHECK(d.dim() == 2);
    // Highest label is 2, so the class count covers the gap.
    CHECK(d.num_classes == 3);
    CHECK(d.features(1, 1) == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(d.labels == std::vector<std::size_t>{0, 2, 0});
    CHECK(d.provenance.find("csv:") == 0);
    CHECK(d.provenance.find("sha256:") != std::string::npos);
    fs::remove(path);
}

TEST_CASE("load_csv maps string labels by first appearance")
{
    const fs::path path = write_temp_csv("durm_csv_str.csv",
        "x,label,y\n"
        "0.0,cat,1.0\n"
        "1.0,dog,2.0\n"
        "2.0,cat,3.0\n"
        "3.0,bird,4.0\n");
    const Dataset d = load_csv(path.string(), "label");
    CHECK(d.num_classes == 3);
    CHECK(d.labels == std::vector<std::size_t>{0, 1, 0, 2});
    CHECK(d.dim() == 2);
    CHECK(d.features(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    fs::remove(path);
}

TEST_CASE("load_csv errors name the data row and column")
{
    const fs::path path = write_temp_csv("durm_csv_bad.csv",
        "a,b,label\n"
        "1.0,2.0,0\n"
        "1.0,oops,1\n");
    try {
        load_csv(path.string(), "label");
        CHECK(false);
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("'b'") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("load_csv rejects a missing label column and missing file")
{
    const fs::path path = write_temp_csv("durm_csv_nolabel.csv",
        "a,b\n1.0,2.0\n");
    CHECK_THROWS_AS(load_csv(path.string(), "label"), std::runtime_error);
    fs::remove(path);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "label"),
                    std::runtime_error);
}

TEST_CASE("stratified split keeps per-class proportions")
{
    const Dataset d = gen_blobs(5, 3, 10, 2, 4.0, 1.0);
    const Split s = train_test_split(d, 0.5, 77, true);
    CHECK(s.train.size() == 15);
    CHECK(s.test.size() == 15);
    const std::vector<std::size_t> train_hist = class_histogram(s.train);
    const std::vector<std::size_t> test_hist = class_histogram(s.test);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(train_hist[c] == 5);
        CHECK(test_hist[c] == 5);
    }
}

TEST_CASE("split partitions the dataset without loss or overlap")
{
    const Dataset d = gen_blobs(9, 3, 40, 2, 4.0, 1.0);
    const Split s = train_test_split(d, 1.0 / 3.0, 13, true);
    CHECK(s.train.size() + s.test.size() == d.size());

    // Feature rows are distinct with probability 1, so key on them.
    std::set<std::string> seen;
    auto key = [](const Dataset& ds, std::size_t i) {
        std::string k;
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            k += std::to_string(ds.features(i, j)) + ",";
        }
        return k;
    };
    for (std::size_t i = 0; i < s.train.size(); ++i) seen.insert(key(s.train, i));
    for (std::size_t i = 0; i < s.test.size(); ++i) {
        CHECK(seen.count(key(s.test, i)) == 0);
        seen.insert(key(s.test, i));
    }
    CHECK(seen.size() == d.size());
}

TEST_CASE("split is deterministic and seed sensitive")
{
    const Dataset d = gen_blobs(3, 2, 30, 2, 4.0, 1.0);
    const Split a = train_test_split(d, 0.25, 5, true);
    const Split b = train_test_split(d, 0.25, 5, true);
    const Split c = train_test_split(d, 0.25, 6, true);
    CHECK(a.train.features.data == b.train.features.data);
    CHECK(a.train.features.data != c.train.features.data);
}

TEST_CASE("split provenance records the part and parameters")
{
    const Dataset d = gen_blobs(3, 2, 30, 2, 4.0, 1.0);
    const Split s = train_test_split(d, 0.25, 5, true);
    CHECK(s.train.provenance.find("part=train") != std::string::npos);
    CHECK(s.test.provenance.find("part=test") != std::string::npos);
    CHECK(s.train.provenance.find("blobs(") != std::string::npos);
}

TEST_CASE("split rejects out-of-range fractions")
{
    const Dataset d = gen_blobs(3, 2, 30, 2, 4.0, 1.0);
    CHECK_THROWS_AS(train_test_split(d, 0.0, 5, true), std::invalid_argument);
    CHECK_THROWS_AS(train_test_split(d, 1.0, 5, true), std::invalid_argument);
}

TEST_CASE("make_longtail applies the exponential profile")
{
    // Head 100 per class, ratio 10 over 3 classes: quotas 100, 32, 10.
    const Dataset d = gen_blobs(21, 3, 100, 2, 4.0, 1.0);
    const Dataset lt = make_longtail(d, 10.0, 31);
    const std::vector<std::size_t> hist = class_histogram(lt);
    CHECK(hist[0] == 100);
    CHECK(hist[1] == 32);
    CHECK(hist[2] == 10);
    CHECK(lt.num_classes == 3);
    CHECK(lt.provenance.find("longtail") != std::string::npos);
}

TEST_CASE("make_longtail with ratio one returns every sample")
{
    const Dataset d = gen_blobs(21, 3, 50, 2, 4.0, 1.0);
    const Dataset lt = make_longtail(d, 1.0, 9);
    CHECK(lt.size() == d.size());
    CHECK(class_histogram(lt) == class_histogram(d));
}

TEST_CASE("make_longtail rejects invalid ratios")
{
    const Dataset d = gen_blobs(21, 2, 10, 2, 4.0, 1.0);
    CHECK_THROWS_AS(make_longtail(d, 0.5, 9), std::invalid_argument);
}

TEST_CASE("class_histogram counts every label")
{
    Dataset d;
    d.features = Matrix(4, 1);
    d.labels = {0, 2, 2, 1};
    d.num_classes = 3;
    const std::vector<std::size_t> hist = class_histogram(d);
    CHECK(hist == std::vector<std::size_t>{1, 1, 2});
}
