// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference grammar check and string mutator for genotype property tests.
// Written independently of the library parser: regex tokenization plus
// set-based invariant checks.

#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "gdasjae/random.hpp"

namespace genotype_oracle {

/// Expected validity of `text` under the cell grammar (3 or 4 groups, group
/// k holding exactly the sources 0..k-1 once each, widths 25/50/100).
/// Returns the canonical form when valid.
inline std::optional<std::string> reference_canonical(const std::string& text) {
  static const std::regex group_re(R"(^\s*((?:\|\s*\d+\s*~\s*\d+\s*)+)\|\s*$)");
  static const std::regex item_re(R"(\|\s*(\d+)\s*~\s*(\d+)\s*)");
  std::vector<std::string> groups;
  std::size_t start = 0;
  while (true) {
    const std::size_t plus = text.find('+', start);
    groups.push_back(text.substr(start, plus == std::string::npos ? std::string::npos : plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  if (groups.size() != 3 && groups.size() != 4) return std::nullopt;
  std::string canon;
  for (std::size_t k = 1; k <= groups.size(); ++k) {
    std::smatch m;
    if (!std::regex_match(groups[k - 1], m, group_re)) return std::nullopt;
    const std::string body = m[1].str();
    std::vector<std::pair<int, int>> items;  // (source, width)
    for (auto it = std::sregex_iterator(body.begin(), body.end(), item_re); it != std::sregex_iterator(); ++it) {
      const std::string w = (*it)[1].str(), s = (*it)[2].str();
      if (w.size() > 4 || s.size() > 4) return std::nullopt;
      items.emplace_back(std::stoi(s), std::stoi(w));
    }
    std::set<int> sources;
    for (auto [s, w] : items) {
      if (w != 25 && w != 50 && w != 100) return std::nullopt;
      if (s >= static_cast<int>(k)) return std::nullopt;
      sources.insert(s);
    }
    if (sources.size() != items.size() || items.size() != k) return std::nullopt;
    std::sort(items.begin(), items.end());
    if (k > 1) canon += " + ";
    canon += "|";
    for (auto [s, w] : items) canon += std::to_string(w) + "~" + std::to_string(s) + "|";
  }
  return canon;
}

/// One random edit of a canonical string; may or may not stay valid.
inline std::string mutate(const std::string& s, gdasjae::Rng& rng) {
  std::string t = s;
  const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(gdasjae::uniform_index(rng, n)); };
  std::vector<std::size_t> tildes, bars, pluses;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '~') tildes.push_back(i);
    if (t[i] == '|') bars.push_back(i);
    if (t[i] == '+') pluses.push_back(i);
  }
  static const char* widths[] = {"25", "50", "100", "75", "0", "250", "10"};
  switch (pick(10)) {
    case 0: {  // replace a width
      const std::size_t tl = tildes[pick(tildes.size())];
      std::size_t b = tl;
      while (t[b - 1] != '|') --b;
      t.replace(b, tl - b, widths[pick(7)]);
      break;
    }
    case 1: {  // replace a source
      const std::size_t tl = tildes[pick(tildes.size())];
      std::size_t e = tl + 1;
      while (t[e] != '|') ++e;
      t.replace(tl + 1, e - tl - 1, std::to_string(pick(5)));
      break;
    }
    case 2: {  // drop one edge item
      const std::size_t tl = tildes[pick(tildes.size())];
      std::size_t b = tl, e = tl;
      while (t[b] != '|') --b;
      while (t[e] != '|') ++e;
      t.erase(b, e - b);
      break;
    }
    case 3: {  // duplicate an edge item in place
      const std::size_t tl = tildes[pick(tildes.size())];
      std::size_t b = tl, e = tl;
      while (t[b] != '|') --b;
      while (t[e] != '|') ++e;
      t.insert(e, t.substr(b, e - b));
      break;
    }
    case 4: {  // pad with spaces (valid)
      const std::size_t tl = tildes[pick(tildes.size())];
      t.insert(tl + 1, " ");
      std::size_t b = tl;
      while (t[b - 1] != '|') --b;
      t.insert(b, "  ");
      break;
    }
    case 5: {  // swap two adjacent items inside a group (valid: order-insensitive)
      const std::size_t tl = tildes[pick(tildes.size())];
      std::size_t b = tl, e = tl;
      while (t[b] != '|') --b;
      while (t[e] != '|') ++e;
      if (e + 1 < t.size() && t[e + 1] != ' ') {
        std::size_t e2 = e + 1;
        while (e2 < t.size() && t[e2] != '|') ++e2;
        if (e2 < t.size()) {
          const std::string first = t.substr(b + 1, e - b - 1), second = t.substr(e + 1, e2 - e - 1);
          t.replace(b + 1, e2 - b - 1, second + "|" + first);
        }
      }
      break;
    }
    case 6:  // drop a whole group
      if (!pluses.empty()) {
        const std::size_t p = pluses[pick(pluses.size())];
        std::size_t e = t.find('+', p + 1);
        t.erase(p - 1, (e == std::string::npos ? t.size() : e - 1) - (p - 1));
      }
      break;
    case 7:  // stray character
      t.insert(pick(t.size() + 1), std::string(1, "x#~|+9"[pick(6)]));
      break;
    case 8:  // remove a bar
      t.erase(bars[pick(bars.size())], 1);
      break;
    default:  // untouched (valid)
      break;
  }
  return t;
}

}  // namespace genotype_oracle
