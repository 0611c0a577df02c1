#include "cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace chomsky::cli {

namespace {

struct Group {
  std::vector<double> scores;  // finished, non-diverged runs
  int runs = 0;
  int diverged = 0;
  bool incomplete = false;
};

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

int task_order(const std::string& name) {
  auto t = parse_task(name);
  return t ? static_cast<int>(*t) : static_cast<int>(kTaskCount);
}

int arch_order(const std::string& name) {
  auto a = parse_architecture(name);
  return a ? static_cast<int>(*a) : 100;
}

}  // namespace

std::string render_report(std::string_view jsonl, const std::function<bool(const std::string&)>& curve_exists) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, Group> groups;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("results line " + std::to_string(number) + ": " + e.what());
    }
    Group& g = groups[{j.value("task", std::string("?")), j.value("arch", std::string("?"))}];
    ++g.runs;
    if (j.value("diverged", false)) {
      ++g.diverged;
      continue;
    }
    const std::string curve = j.value("curve_file", std::string());
    if (curve.empty() || !curve_exists(curve)) g.incomplete = true;
    g.scores.push_back(j.value("score", 0.0));
  }

  std::vector<std::pair<Key, Group>> rows(groups.begin(), groups.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::pair(task_order(a.first.first), arch_order(a.first.second)) <
           std::pair(task_order(b.first.first), arch_order(b.first.second));
  });

  std::ostringstream out;
  out << "| task | arch | runs | best | mean ± std | status |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& [key, g] : rows) {
    out << "| " << key.first << " | " << key.second << " | " << g.runs << " | ";
    if (g.scores.empty()) {
      out << "- | - | ";
    } else {
      const double best = *std::max_element(g.scores.begin(), g.scores.end());
      double mean = 0, stddev = 0;
      summarize(g.scores, mean, stddev);
      // A score of at least 90 counts as generalising.
      out << (best >= 90 ? "**" + fixed1(best) + "**" : fixed1(best)) << " | " << fixed1(mean) << " ± "
          << fixed1(stddev) << " | ";
    }
    std::vector<std::string> flags;
    if (g.incomplete) flags.push_back("incomplete");
    if (g.diverged) flags.push_back(std::to_string(g.diverged) + " diverged");
    if (flags.empty()) flags.push_back("ok");
    for (std::size_t i = 0; i < flags.size(); ++i) out << (i ? ", " : "") << flags[i];
    out << " |\n";
  }
  return out.str();
}

}  // namespace chomsky::cli
