#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "slimnam/model.hpp"
#include "slimnam/training.hpp"

namespace slimnam::cli
{

constexpr double kDefaultHoldout = 0.1;
constexpr int kTimingRuns = 5;

std::vector<int> parse_int_list(const std::string& text, const std::string& flag);

/// "a..b" inclusive or a comma list; duplicates rejected; result sorted ascending.
std::vector<int> parse_widths(const std::string& text);

/// "random" or "fixed:N".
WidthMode parse_width_mode(const std::string& text);

LossKind parse_loss(const std::string& text);

/// Median rtf of kTimingRuns bench_rtf runs.
double median_rtf(const Model& model, ActiveWidth width, double seconds, std::size_t buffer);

/// "width,esr,flops_per_sample,rtf" rows for every width 1..c.
std::string pareto_csv(const Model& model, const DryWetDataset& validation, double bench_seconds, std::size_t buffer);

} // namespace slimnam::cli
