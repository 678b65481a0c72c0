#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <doctest.h>

#include "hpd/errors.hpp"
#include "hpd/evalsts.hpp"
#include "hpd/rng.hpp"

using namespace hpd::evalsts;
using hpd::Rng;
using hpd::data::ScoredPair;

namespace {

// explicit rank sort + naive Pearson, independent of the library path
double spearman_oracle(const std::vector<double>& x,
                       const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = shared;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("spearman of a perfect monotone pair is one") {
  std::vector<double> x{1, 2, 3}, y{10, 20, 30};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
}

TEST_CASE("spearman of a reversed pair is minus one") {
  std::vector<double> x{1, 2, 3}, y{3, 2, 1};
  CHECK(spearman(x, y) == doctest::Approx(-1.0));
}

TEST_CASE("tied values share the average rank") {
  std::vector<double> x{1, 2, 2, 4}, y{1, 2, 3, 4};
  const double expect = 4.5 / std::sqrt(22.5);
  CHECK(spearman(x, y) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(spearman(x, y) == doctest::Approx(0.94868).epsilon(1e-4));
}

TEST_CASE("fractional ranks are one-based and average over ties") {
  std::vector<double> v{3.0, 1.0, 3.0, 2.0};
  auto r = fractional_ranks(v);
  CHECK(r[0] == doctest::Approx(3.5));
  CHECK(r[1] == doctest::Approx(1.0));
  CHECK(r[2] == doctest::Approx(3.5));
  CHECK(r[3] == doctest::Approx(2.0));
}

TEST_CASE("spearman rejects degenerate input") {
  std::vector<double> constant{2, 2, 2}, ok{1, 2, 3};
  CHECK_THROWS_AS(spearman(constant, ok), hpd::DomainError);
  CHECK_THROWS_AS(spearman(ok, constant), hpd::DomainError);
  std::vector<double> one{1}, short_y{1};
  CHECK_THROWS_AS(spearman(one, short_y), hpd::InputError);
  std::vector<double> mismatched{1, 2};
  CHECK_THROWS_AS(spearman(ok, mismatched), hpd::ShapeError);
}

TEST_CASE("spearman matches a brute-force oracle on random instances") {
  Rng rng(50);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 5 + rng.below(40);
    std::vector<double> x(n), y(n);
    for (auto& v : x)
      v = rng.bernoulli(0.3) ? std::floor(rng.uniform(0, 4)) : rng.normal();
    for (auto& v : y)
      v = rng.bernoulli(0.3) ? std::floor(rng.uniform(0, 4)) : rng.normal();
    // reroll constant draws: correlation undefined there
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }))
      x[0] += 1.0;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }))
      y[0] += 1.0;
    CHECK(std::fabs(spearman(x, y) - spearman_oracle(x, y)) <= 1e-10);
  }
}

TEST_CASE("spearman ignores strictly increasing transforms") {
  Rng rng(51);
  std::vector<double> x(30), y(30);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  const double base = spearman(x, y);

  std::vector<double> ex = x, ay = y;
  for (auto& v : ex) v = std::exp(v);
  for (auto& v : ay) v = 3.0 * v + 11.0;
  CHECK(std::fabs(spearman(ex, y) - base) <= 1e-12);
  CHECK(std::fabs(spearman(x, ay) - base) <= 1e-12);
  CHECK(std::fabs(spearman(ex, ay) - base) <= 1e-12);
}

TEST_CASE("spearman of a vector with itself is one, and it is symmetric") {
  Rng rng(52);
  std::vector<double> x(25), y(25);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  CHECK(spearman(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spearman(x, y) == doctest::Approx(spearman(y, x)).epsilon(1e-12));
}

TEST_CASE("eval_sts is exact for a rank-preserving embedding") {
  // two-dimensional unit vectors at angle acos(score/5): cosine = gold/5
  std::vector<ScoredPair> pairs{
      {"base", "s1", 1.0}, {"base", "s2", 2.5}, {"base", "s3", 4.0},
      {"base", "s4", 0.5},
  };
  auto embed = [&](const std::string& s) -> std::vector<double> {
    if (s == "base") return {1.0, 0.0};
    for (const auto& p : pairs) {
      if (p.sent2 == s) {
        const double angle = std::acos(p.score / 5.0);
        return {std::cos(angle), std::sin(angle)};
      }
    }
    return {1.0, 0.0};
  };
  CHECK(eval_sts(embed, pairs) == doctest::Approx(1.0));
}

TEST_CASE("eval_sts is deterministic across identical models") {
  Rng rng(53);
  std::vector<ScoredPair> pairs;
  for (int i = 0; i < 20; ++i) {
    pairs.push_back({"sentence " + std::to_string(i),
                     "sentence " + std::to_string(i + 1),
                     static_cast<double>(i % 6)});
  }
  auto model = [](const std::string& s) {
    std::vector<double> v(4, 0.1);
    for (char c : s) v[static_cast<size_t>(c) % 4] += 0.01 * c;
    return v;
  };
  CHECK(eval_sts(model, pairs) == eval_sts(model, pairs));
}

TEST_CASE("random embeddings stay near zero correlation") {
  Rng rng(54);
  std::vector<ScoredPair> pairs;
  for (int i = 0; i < 1000; ++i) {
    pairs.push_back({"a" + std::to_string(i), "b" + std::to_string(i),
                     5.0 * rng.uniform()});
  }
  // hash-seeded pseudo-random unit vectors, independent of the gold scores
  auto embed = [](const std::string& s) {
    Rng r(std::hash<std::string>{}(s));
    std::vector<double> v(16);
    for (auto& x : v) x = r.normal();
    return v;
  };
  CHECK(std::fabs(eval_sts(embed, pairs)) < 0.15);
}

TEST_CASE("eval_sts carries the pair index on failure") {
  std::vector<ScoredPair> pairs{{"ok", "ok", 1.0}, {"bad", "ok", 2.0},
                                {"ok", "ok", 3.0}};
  auto embed = [](const std::string& s) -> std::vector<double> {
    if (s == "bad") return {0.0, 0.0};  // zero norm: cosine undefined
    return {1.0, 0.5};
  };
  try {
    eval_sts(embed, pairs);
    FAIL("expected a domain error");
  } catch (const hpd::DomainError& e) {
    CHECK(std::string(e.what()).find("pair 1") != std::string::npos);
  }
  CHECK_THROWS_AS(eval_sts([](const std::string&) {
    return std::vector<double>{1.0};
  }, std::vector<ScoredPair>{{"a", "b", 1.0}}), hpd::InputError);
}

TEST_CASE("eval_suite averages per-dataset correlations") {
  auto embed = [](const std::string& s) -> std::vector<double> {
    const double v = static_cast<double>(s.size());
    return {v, 1.0};
  };
  // length-keyed embedding: longer sentence pairs score higher cosine
  std::vector<ScoredPair> up{{"a", "bb", 1.0}, {"ccc", "dddd", 2.0},
                             {"eeeee", "ffffff", 3.0}};
  std::map<std::string, std::vector<ScoredPair>> one{{"only", up}};
  auto r1 = eval_suite(embed, one);
  REQUIRE(r1.per_dataset.size() == 1);
  CHECK(r1.average == doctest::Approx(r1.per_dataset[0].second));

  std::vector<ScoredPair> down = up;
  std::reverse(down.begin(), down.end());
  for (size_t i = 0; i < down.size(); ++i) down[i].score = double(i);
  std::map<std::string, std::vector<ScoredPair>> two{{"up", up},
                                                     {"down", down}};
  auto r2 = eval_suite(embed, two);
  REQUIRE(r2.per_dataset.size() == 2);
  const double mean =
      0.5 * (r2.per_dataset[0].second + r2.per_dataset[1].second);
  CHECK(r2.average == doctest::Approx(mean));
  // name-sorted output
  CHECK(r2.per_dataset[0].first == "down");
  CHECK(r2.per_dataset[1].first == "up");
}

TEST_CASE("eval_suite names an empty dataset") {
  auto embed = [](const std::string&) { return std::vector<double>{1.0, 0.0}; };
  std::map<std::string, std::vector<ScoredPair>> datasets{
      {"fine", {{"a", "b", 1.0}, {"c", "d", 2.0}, {"e", "f", 0.0}}},
      {"hollow", {}},
  };
  try {
    eval_suite(embed, datasets);
    FAIL("expected an input error");
  } catch (const hpd::InputError& e) {
    CHECK(std::string(e.what()).find("hollow") != std::string::npos);
  }
}

TEST_CASE("report CSV carries x100 scores and an avg row") {
  StsReport report;
  report.per_dataset = {{"alpha", 0.4}, {"beta", 0.6}};
  report.average = 0.5;
  const std::string csv = report_csv(report);
  CHECK(csv == "dataset,spearman_x100\nalpha,40.00\nbeta,60.00\navg,50.00\n");
}
