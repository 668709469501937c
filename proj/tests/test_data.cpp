#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "serm/dataset.hpp"

using namespace serm;
using th::vec;

namespace {

std::string write_file(const std::string& name, const std::string& text) {
  std::ofstream(name) << text;
  return name;
}

}  // namespace

TEST_CASE("csv: three rows, 0/1 labels") {
  const auto path = write_file("data_basic.csv", "a,b,label\n1,2,1\n3,4,0\n5,6,1\n");
  const auto r = load_csv(path, "label", "1");
  CHECK(r.rejects.empty());
  CHECK(r.data.size() == 3);
  CHECK(r.data.dim() == 2);
  CHECK(r.data.y == vec({1, -1, 1}));
  CHECK(r.data.X(1, 1) == 4.0);
  CHECK(r.data.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("csv: blank and non-numeric cells are rejected with line numbers") {
  const auto path = write_file("data_bad.csv", "a,b,label\n1,,1\n3,4,0\nx,6,1\n7,8,1\n");
  const auto r = load_csv(path, "label", "1");
  CHECK(r.data.size() == 2);
  REQUIRE(r.rejects.size() == 2);
  CHECK(r.rejects[0].line == 2);
  CHECK(r.rejects[1].line == 4);
  CHECK_THROWS_AS(load_csv(path, "target", "1"), InvalidInput);
  CHECK_THROWS_AS(load_csv("no_such_file.csv", "label", "1"), InvalidInput);
}

TEST_CASE("csv: tangent columns round trip") {
  Dataset d = gen_synthetic(SyntheticSpec{ParabolaManifoldSpec{}, 20, 3, 0.0});
  write_csv(d, "data_tangent.csv");
  const auto r = load_csv("data_tangent.csv", "label", "1");
  CHECK(r.rejects.empty());
  REQUIRE(r.data.has_tangents());
  CHECK(r.data.dim() == 2);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    REQUIRE((r.data.row(i) - d.row(i)).norm() <= 1e-12);
    REQUIRE((r.data.tangents[i] - d.tangents[i]).norm() <= 1e-12);
    REQUIRE(r.data.y(i) == d.y(i));
  }
  write_file("data_badtan.csv", "a,b,label,tangent_1\n1,2,1,0.5\n");
  CHECK_THROWS_AS(load_csv("data_badtan.csv", "label", "1"), InvalidInput);
}

TEST_CASE("standardizer: train columns get mean 0 and sd 1/sqrt(d); inverse round trip") {
  th::Rng r(31);
  Dataset d;
  d.X.resize(200, 4);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 4; ++j) d.X(i, j) = 3.0 * j + (j + 1) * r.normal();
  d.y = Eigen::VectorXd::Ones(200);
  const Standardizer s = fit_standardizer(d);
  const Eigen::MatrixXd z = s.transform(d.X);
  for (int j = 0; j < 4; ++j) {
    const double mean = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mean).square().mean());
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(sd == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK((s.inverse(z) - d.X).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("standardizer: constant feature keeps sd 1 and is counted") {
  Dataset d;
  d.X.resize(3, 2);
  d.X << 1, 5, 2, 5, 3, 5;
  d.y = vec({1, -1, 1});
  const Standardizer s = fit_standardizer(d);
  CHECK(s.constant_features == 1);
  CHECK(s.sd(1) == 1.0);
  CHECK(s.transform(d.X).col(1).cwiseAbs().maxCoeff() == 0.0);
  const auto sets = standardize_fit_transform(d, {d});
  CHECK(sets.others.size() == 1);
  CHECK((sets.others[0].X - sets.train.X).norm() == 0.0);
}

TEST_CASE("split: 60/20/20, deterministic, a partition") {
  Dataset d;
  d.X.resize(10, 1);
  for (int i = 0; i < 10; ++i) d.X(i, 0) = i;
  d.y = Eigen::VectorXd::Ones(10);
  const auto a = split(d, 5), b = split(d, 5), c = split(d, 6);
  CHECK(a.train.size() == 6);
  CHECK(a.val.size() == 2);
  CHECK(a.test.size() == 2);
  CHECK(a.train.X == b.train.X);
  CHECK(a.test.X == b.test.X);
  CHECK(a.train.X != c.train.X);
  std::set<double> all;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (Eigen::Index i = 0; i < part->size(); ++i) all.insert(part->X(i, 0));
  CHECK(all.size() == 10);
  // 7 rows: floor, floor, remainder.
  Dataset seven = d.subset({0, 1, 2, 3, 4, 5, 6});
  const auto s7 = split(seven, 1);
  CHECK(s7.train.size() == 4);
  CHECK(s7.val.size() == 1);
  CHECK(s7.test.size() == 2);
}

TEST_CASE("manifold generator: exact parabola, balanced-ish labels, unit orthogonal tangents") {
  const Dataset d = gen_synthetic(SyntheticSpec{ParabolaManifoldSpec{}, 2000, 4, 0.0});
  REQUIRE(d.has_tangents());
  long pos = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double x1 = d.X(i, 0), x2 = d.X(i, 1);
    REQUIRE(x2 == -x1 * x1);
    REQUIRE(x1 >= -5.0);
    REQUIRE(x1 <= 5.0);
    REQUIRE(d.y(i) == (x1 > 0 ? 1.0 : -1.0));
    const Eigen::VectorXd t = d.tangents[i].col(0);
    REQUIRE(std::abs(t.norm() - 1.0) <= 1e-10);
    const Eigen::VectorXd normal = vec({2 * x1, 1}) / std::sqrt(1 + 4 * x1 * x1);
    REQUIRE(std::abs(t.dot(normal)) <= 1e-10);
    pos += d.y(i) > 0;
  }
  CHECK(std::abs(pos - 1000) <= 100);
  // Near the vertex the tangent is (1, 0).
  const Dataset z = gen_synthetic(SyntheticSpec{ParabolaManifoldSpec{-1e-9, 1e-9}, 2, 0, 0.0});
  CHECK((z.tangents[0].col(0) - vec({1, 0})).norm() <= 1e-8);
}

TEST_CASE("gaussian generator: exact class counts, seeded, label noise flips about the right share") {
  GaussianMixtureSpec g{vec({-1, 0}), vec({1, 0}), vec({0.1, 0.1}), vec({0.1, 0.1})};
  const Dataset a = gen_synthetic(SyntheticSpec{g, 1001, 2, 0.0});
  const Dataset b = gen_synthetic(SyntheticSpec{g, 1001, 2, 0.0});
  CHECK(a.X == b.X);
  CHECK(a.size() == 1001);
  const Dataset noisy = gen_synthetic(SyntheticSpec{g, 4000, 2, 0.2});
  long flipped = 0;
  for (Eigen::Index i = 0; i < noisy.size(); ++i) flipped += (noisy.X(i, 0) > 0) != (noisy.y(i) > 0);
  CHECK(std::abs(flipped / 4000.0 - 0.2) <= 0.03);
  CHECK_THROWS_AS(gen_synthetic(SyntheticSpec{g, 0, 2, 0.0}), InvalidConfig);
  CHECK_THROWS_AS(gen_synthetic(SyntheticSpec{g, 10, 2, 1.5}), InvalidConfig);
}

TEST_CASE("balance_classes downsamples the majority") {
  Dataset d;
  d.X = Eigen::MatrixXd::Zero(10, 1);
  d.y = vec({1, 1, 1, 1, 1, 1, 1, -1, -1, -1});
  const Dataset b = balance_classes(d, 0);
  CHECK(b.size() == 6);
  CHECK(b.y.sum() == 0.0);
}

TEST_CASE("dataset validation") {
  Dataset d;
  d.X = Eigen::MatrixXd::Zero(2, 2);
  d.y = vec({1, 0});
  CHECK_THROWS_AS(d.validate(), InvalidInput);
  d.y = vec({1, -1});
  CHECK_NOTHROW(d.validate());
  d.X(0, 0) = NAN;
  CHECK_THROWS_AS(d.validate(), InvalidInput);
}
