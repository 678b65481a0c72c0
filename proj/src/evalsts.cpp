#include "hpd/evalsts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hpd/errors.hpp"
#include "hpd/objectives.hpp"

namespace hpd::evalsts {

std::vector<double> fractional_ranks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share the average 1-based rank
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("spearman: length mismatch " + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw InputError("spearman needs at least 2 points");
  auto constant = [](std::span<const double> v) {
    for (double e : v)
      if (e != v[0]) return false;
    return true;
  };
  if (constant(x) || constant(y)) {
    throw DomainError("spearman undefined for constant input");
  }

  auto rx = fractional_ranks(x);
  auto ry = fractional_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // ranks always average to this
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  double rho = sxy / std::sqrt(sxx * syy);
  return std::clamp(rho, -1.0, 1.0);
}

double eval_sts(const EmbedFn& embed,
                const std::vector<data::ScoredPair>& pairs) {
  if (pairs.size() < 2) throw InputError("eval_sts needs at least 2 pairs");
  std::vector<double> sims(pairs.size()), gold(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const std::string where = "pair " + std::to_string(i) + ": ";
    try {
      auto a = embed(pairs[i].sent1);
      auto b = embed(pairs[i].sent2);
      sims[i] = objectives::cosine_sim(a, b);
    } catch (const ShapeError& e) {
      throw ShapeError(where + e.what());
    } catch (const DomainError& e) {
      throw DomainError(where + e.what());
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(where + e.what());
    }
    gold[i] = pairs[i].score;
  }
  return spearman(sims, gold);
}

StsReport eval_suite(
    const EmbedFn& embed,
    const std::map<std::string, std::vector<data::ScoredPair>>& datasets) {
  if (datasets.empty()) throw InputError("eval_suite needs >= 1 dataset");
  for (const auto& [name, pairs] : datasets) {
    if (pairs.empty()) throw InputError("dataset \"" + name + "\" is empty");
  }
  StsReport report;
  double sum = 0.0;
  for (const auto& [name, pairs] : datasets) {
    double rho = eval_sts(embed, pairs);
    report.per_dataset.emplace_back(name, rho);
    sum += rho;
  }
  report.average = sum / static_cast<double>(datasets.size());
  return report;
}

namespace {

std::string x100(double rho) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", rho * 100.0);
  return buf;
}

}  // namespace

std::string report_csv(const StsReport& report) {
  std::string out = "dataset,spearman_x100\n";
  for (const auto& [name, rho] : report.per_dataset) {
    out += name + "," + x100(rho) + "\n";
  }
  out += "avg," + x100(report.average) + "\n";
  return out;
}

std::string report_table(const StsReport& report) {
  size_t width = 7;  // len("dataset")
  for (const auto& [name, rho] : report.per_dataset)
    width = std::max(width, name.size());
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-*s  spearman_x100\n",
                static_cast<int>(width), "dataset");
  out += line;
  for (const auto& [name, rho] : report.per_dataset) {
    std::snprintf(line, sizeof(line), "%-*s  %13s\n", static_cast<int>(width),
                  name.c_str(), x100(rho).c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-*s  %13s\n", static_cast<int>(width),
                "avg", x100(report.average).c_str());
  out += line;
  return out;
}

}  // namespace hpd::evalsts
