#include "cli_common.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "slimnam/inference.hpp"

namespace slimnam::cli
{

namespace
{
int parse_int(const std::string& s, const std::string& what)
{
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid integer '" + s + "' in " + what);
  return v;
}
} // namespace

std::vector<int> parse_int_list(const std::string& text, const std::string& flag)
{
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_int(item, flag));
  if (out.empty())
    throw ConfigError(flag + " is empty");
  return out;
}

std::vector<int> parse_widths(const std::string& text)
{
  std::vector<int> widths;
  if (const auto dots = text.find(".."); dots != std::string::npos)
  {
    const int lo = parse_int(text.substr(0, dots), "--widths");
    const int hi = parse_int(text.substr(dots + 2), "--widths");
    if (lo > hi)
      throw ConfigError("--widths range " + text + " is empty");
    for (int w = lo; w <= hi; ++w)
      widths.push_back(w);
  }
  else
  {
    widths = parse_int_list(text, "--widths");
  }
  std::sort(widths.begin(), widths.end());
  if (std::adjacent_find(widths.begin(), widths.end()) != widths.end())
    throw ConfigError("--widths contains duplicates");
  return widths;
}

WidthMode parse_width_mode(const std::string& text)
{
  if (text == "random")
    return WidthMode::Random();
  if (text.rfind("fixed:", 0) == 0)
    return WidthMode::Fixed(parse_int(text.substr(6), "--width-mode"));
  throw ConfigError("--width-mode must be 'random' or 'fixed:N', got '" + text + "'");
}

LossKind parse_loss(const std::string& text)
{
  if (text == "mse")
    return LossKind::mse;
  if (text == "esr")
    return LossKind::esr;
  throw ConfigError("--loss must be 'mse' or 'esr', got '" + text + "'");
}

double median_rtf(const Model& model, ActiveWidth width, double seconds, std::size_t buffer)
{
  std::vector<double> runs;
  for (int r = 0; r < kTimingRuns; ++r)
    runs.push_back(bench_rtf(model, width, seconds, buffer).rtf);
  std::sort(runs.begin(), runs.end());
  return runs[runs.size() / 2];
}

std::string pareto_csv(const Model& model, const DryWetDataset& validation, double bench_seconds, std::size_t buffer)
{
  std::ostringstream out;
  out.precision(17);
  out << "width,esr,flops_per_sample,rtf\n";
  for (int w = 1; w <= model.config.channels; ++w)
  {
    const ActiveWidth width(w);
    out << w << ',' << evaluate_esr(model, validation, width) << ',' << flops_per_sample(model.config, width) << ','
        << median_rtf(model, width, bench_seconds, buffer) << '\n';
  }
  return out.str();
}

} // namespace slimnam::cli
