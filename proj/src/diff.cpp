#include "xray/diff.hpp"

#include <algorithm>

namespace xray::explorer {

namespace {

bool same_label(const TreeNode& a, const TreeNode& b) { return a.kind == b.kind && a.name == b.name; }

// Index pairs of one longest common subsequence, in order.
std::vector<std::pair<std::size_t, std::size_t>> lcs(const CorrelationTree& ta, const std::vector<NodeId>& a,
                                                     const CorrelationTree& tb, const std::vector<NodeId>& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n == m && std::equal(a.begin(), a.end(), b.begin(),
                           [&](NodeId x, NodeId y) { return same_label(ta.nodes[x], tb.nodes[y]); })) {
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(i, i);
    return pairs;
  }
  std::vector<std::uint32_t> dp((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      at(i, j) = same_label(ta.nodes[a[i]], tb.nodes[b[j]]) ? at(i + 1, j + 1) + 1
                                                             : std::max(at(i + 1, j), at(i, j + 1));
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    if (same_label(ta.nodes[a[i]], tb.nodes[b[j]])) {
      pairs.emplace_back(i++, j++);
    } else if (at(i + 1, j) >= at(i, j + 1)) {
      ++i;
    } else {
      ++j;
    }
  }
  return pairs;
}

ChildSummary summarize(const CorrelationTree& t, NodeId id) {
  ChildSummary s;
  const TreeNode& n = t.nodes[id];
  s.kind = n.kind;
  s.name = n.name;
  s.node = id;
  for_each_in_subtree(t, id, [&](const TreeNode& x) {
    ++s.subtree_size;
    if (x.kind == NodeKind::Cmd) s.commands.push_back(x.name);
  });
  return s;
}

struct Walker {
  const CorrelationTree& abnormal;
  const CorrelationTree& reference;
  std::vector<std::pair<std::size_t, Divergence>> found;  // (depth, divergence)

  void compare(std::optional<NodeId> a, std::optional<NodeId> r, const std::vector<NodeId>& a_kids,
               const std::vector<NodeId>& r_kids, std::size_t depth) {
    auto pairs = lcs(abnormal, a_kids, reference, r_kids);
    if (pairs.size() != a_kids.size() || pairs.size() != r_kids.size()) {
      Divergence d;
      d.abnormal_node = a;
      d.reference_node = r;
      if (a) d.abnormal_path = node_path(abnormal, *a);
      if (r) d.reference_path = node_path(reference, *r);
      std::vector<char> a_used(a_kids.size(), 0);
      std::vector<char> r_used(r_kids.size(), 0);
      for (auto [i, j] : pairs) {
        a_used[i] = 1;
        r_used[j] = 1;
      }
      for (std::size_t j = 0; j < r_kids.size(); ++j)
        if (!r_used[j]) d.missing_in_abnormal.push_back(summarize(reference, r_kids[j]));
      for (std::size_t i = 0; i < a_kids.size(); ++i)
        if (!a_used[i]) d.missing_in_reference.push_back(summarize(abnormal, a_kids[i]));
      found.emplace_back(depth, std::move(d));
    }
    for (auto [i, j] : pairs) {
      NodeId x = a_kids[i];
      NodeId y = r_kids[j];
      compare(x, y, abnormal.nodes[x].children, reference.nodes[y].children, depth + 1);
    }
  }
};

nlohmann::json summary_json(const ChildSummary& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"name", s.name},
          {"node", s.node},
          {"subtree_size", s.subtree_size},
          {"commands", s.commands}};
}

}  // namespace

DiffReport diff(const CorrelationTree& abnormal, const CorrelationTree& reference) {
  Walker w{abnormal, reference, {}};
  w.compare(std::nullopt, std::nullopt, abnormal.roots, reference.roots, 0);
  std::stable_sort(w.found.begin(), w.found.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first < y.first;
    auto start = [&](const Divergence& d) { return d.abnormal_node ? abnormal.nodes[*d.abnormal_node].start : Timestamp{}; };
    return start(x.second) < start(y.second);
  });
  DiffReport report;
  for (auto& [_, d] : w.found) report.divergence_roots.push_back(std::move(d));
  return report;
}

nlohmann::json diff_report_to_json(const DiffReport& report) {
  nlohmann::json roots = nlohmann::json::array();
  for (const auto& d : report.divergence_roots) {
    nlohmann::json j;
    j["abnormal_node"] = d.abnormal_node ? nlohmann::json(*d.abnormal_node) : nlohmann::json(nullptr);
    j["reference_node"] = d.reference_node ? nlohmann::json(*d.reference_node) : nlohmann::json(nullptr);
    j["abnormal_path"] = d.abnormal_path;
    j["reference_path"] = d.reference_path;
    j["missing_in_abnormal"] = nlohmann::json::array();
    for (const auto& s : d.missing_in_abnormal) j["missing_in_abnormal"].push_back(summary_json(s));
    j["missing_in_reference"] = nlohmann::json::array();
    for (const auto& s : d.missing_in_reference) j["missing_in_reference"].push_back(summary_json(s));
    roots.push_back(std::move(j));
  }
  return {{"divergence_roots", roots}};
}

}  // namespace xray::explorer
