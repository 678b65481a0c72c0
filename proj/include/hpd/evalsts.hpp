#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hpd/data.hpp"

namespace hpd::evalsts {

using EmbedFn = std::function<std::vector<double>(const std::string&)>;

// Average-fractional ranks, 1-based; ties share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

// Pearson correlation of fractional ranks. Throws DomainError when either
// side is constant (correlation undefined).
double spearman(std::span<const double> x, std::span<const double> y);

// spearman(cosine similarities, gold scores); embedding or similarity
// failures are rethrown with the offending pair index prepended.
double eval_sts(const EmbedFn& embed,
                const std::vector<data::ScoredPair>& pairs);

struct StsReport {
  std::vector<std::pair<std::string, double>> per_dataset;  // name-sorted
  double average = 0.0;
};

StsReport eval_suite(
    const EmbedFn& embed,
    const std::map<std::string, std::vector<data::ScoredPair>>& datasets);

// CSV rows "dataset,spearman_x100" plus a final "avg" row
std::string report_csv(const StsReport& report);
std::string report_table(const StsReport& report);

}  // namespace hpd::evalsts
