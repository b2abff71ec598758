#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicattn/error.hpp"

namespace topicattn {

struct OverlapResult {
  std::vector<std::vector<std::size_t>> matrix; // |A| x |B|
  std::vector<std::size_t> per_row_max;
  std::size_t mode_of_max = 0;
};

namespace detail {

inline std::set<std::string> as_word_set(const std::vector<std::string>& list)
{
  std::set<std::string> s(list.begin(), list.end());
  if (s.size() != list.size())
    throw InputError("overlap: duplicate word in a top-k list");
  return s;
}

} // namespace detail

/// Most frequent value; ties go to the larger value.
inline std::size_t mode_toward_larger(const std::vector<std::size_t>& values)
{
  if (values.empty())
    throw InputError("overlap: mode of an empty list");
  std::map<std::size_t, std::size_t> freq;
  for (auto v : values)
    ++freq[v];
  std::size_t best = 0, best_count = 0;
  for (const auto& [v, c] : freq)
    if (c >= best_count) {
      best = v;
      best_count = c;
    }
  return best;
}

/// matrix[i][j] = |A_i ∩ B_j|; each row's maximum, then the mode of those maxima.
inline OverlapResult overlap_matrix(const std::vector<std::vector<std::string>>& a,
                                    const std::vector<std::vector<std::string>>& b)
{
  if (a.empty() || b.empty())
    throw InputError("overlap: both list collections must be nonempty");
  std::vector<std::set<std::string>> sb;
  for (const auto& list : b)
    sb.push_back(detail::as_word_set(list));
  OverlapResult r;
  for (const auto& list : a) {
    const auto sa = detail::as_word_set(list);
    std::vector<std::size_t> row;
    for (const auto& other : sb) {
      std::size_t common = 0;
      for (const auto& w : sa)
        common += other.count(w);
      row.push_back(common);
    }
    r.per_row_max.push_back(*std::max_element(row.begin(), row.end()));
    r.matrix.push_back(std::move(row));
  }
  r.mode_of_max = mode_toward_larger(r.per_row_max);
  return r;
}

inline nlohmann::json to_json(const OverlapResult& r)
{
  return {{"matrix", r.matrix}, {"per_row_max", r.per_row_max}, {"mode_of_max", r.mode_of_max}};
}

/// Rows are clusters, columns are topics.
inline std::string to_csv(const OverlapResult& r)
{
  std::ostringstream out;
  out << "cluster";
  const std::size_t cols = r.matrix.empty() ? 0 : r.matrix.front().size();
  for (std::size_t j = 0; j < cols; ++j)
    out << ",topic_" << j;
  out << '\n';
  for (std::size_t i = 0; i < r.matrix.size(); ++i) {
    out << i;
    for (auto v : r.matrix[i])
      out << ',' << v;
    out << '\n';
  }
  return out.str();
}

} // namespace topicattn
