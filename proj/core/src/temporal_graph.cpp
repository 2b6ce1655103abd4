#include "tempora/temporal_graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "tempora/errors.hpp"

namespace tempora {

TemporalGraph::TemporalGraph(std::size_t num_nodes, std::vector<EdgeEvent> edges, FeatureTable edge_features,
                             FeatureTable node_features)
    : num_nodes_(num_nodes), node_features_(std::move(node_features)) {
  if (edge_features.dim && edge_features.rows() != edges.size()) {
    throw ContractError("edge feature table does not cover every edge");
  }
  if (node_features_.dim && node_features_.rows() != num_nodes) {
    throw ContractError("node feature table does not cover every node");
  }
  for (const auto& e : edges) {
    if (e.src >= num_nodes || e.dst >= num_nodes) throw ContractError("edge endpoint outside the node set");
    if (!(e.time >= 0.0) || !std::isfinite(e.time)) throw ContractError("edge timestamps must be finite and >= 0");
  }
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return edges[a].time < edges[b].time; });
  edges_.reserve(edges.size());
  edge_features_.dim = edge_features.dim;
  edge_features_.values.reserve(edge_features.values.size());
  for (auto i : order) {
    edges_.push_back(edges[i]);
    if (edge_features.dim) {
      auto first = edge_features.values.begin() + static_cast<std::ptrdiff_t>(i * edge_features.dim);
      edge_features_.values.insert(edge_features_.values.end(), first,
                                   first + static_cast<std::ptrdiff_t>(edge_features.dim));
    }
  }
  adjacency_.resize(num_nodes);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& ev = edges_[e];
    adjacency_[ev.src].push_back({ev.dst, ev.time, e});
    if (ev.dst != ev.src) adjacency_[ev.dst].push_back({ev.src, ev.time, e});
  }
}

std::span<const double> TemporalGraph::edge_feature(std::size_t e) const {
  if (!edge_features_.dim) return {};
  return std::span<const double>(edge_features_.values).subspan(e * edge_features_.dim, edge_features_.dim);
}

std::span<const double> TemporalGraph::node_feature(NodeId v) const {
  if (!node_features_.dim) return {};
  return std::span<const double>(node_features_.values).subspan(v * node_features_.dim, node_features_.dim);
}

std::vector<TemporalNeighbor> TemporalGraph::recent_neighbors(NodeId node, double t, std::size_t k) const {
  const auto& adj = adjacency_.at(node);
  auto end = std::lower_bound(adj.begin(), adj.end(), t,
                              [](const TemporalNeighbor& n, double time) { return n.time < time; });
  const auto available = static_cast<std::size_t>(end - adj.begin());
  const auto take = std::min(k, available);
  return {end - static_cast<std::ptrdiff_t>(take), end};
}

std::size_t TemporalGraph::lower_bound_time(double t) const {
  auto it = std::lower_bound(edges_.begin(), edges_.end(), t,
                             [](const EdgeEvent& e, double time) { return e.time < time; });
  return static_cast<std::size_t>(it - edges_.begin());
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && !s.empty();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  // from_chars for double is unavailable on some toolchains; strtod on a copy.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && std::isfinite(out);
}

}  // namespace

TemporalGraph load_edge_list(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open edge list " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  bool have_header = false;
  struct RawEdge {
    std::int64_t u, v;
    double t;
  };
  std::vector<RawEdge> raw;
  std::vector<double> features;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_fields(line);
    if (!have_header) {
      std::int64_t tmp;
      double dtmp;
      if (fields.size() >= 3 && parse_int(fields[0], tmp) && parse_int(fields[1], tmp) &&
          parse_double(fields[2], dtmp)) {
        throw ParseError("header row required (expected u,v,ts[,feat_0..])", line_no);
      }
      if (fields.size() < 3) throw ParseError("header needs at least u,v,ts columns", line_no);
      columns = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    RawEdge e{};
    if (!parse_int(fields[0], e.u) || !parse_int(fields[1], e.v)) throw ParseError("node ids must be integers", line_no);
    if (!parse_double(fields[2], e.t) || e.t < 0.0) throw ParseError("timestamp must be a finite value >= 0", line_no);
    for (std::size_t c = 3; c < columns; ++c) {
      double f;
      if (!parse_double(fields[c], f)) throw ParseError("non-numeric edge feature", line_no);
      features.push_back(f);
    }
    raw.push_back(e);
  }
  if (raw.empty()) throw ContractError("edge list " + path.string() + " contains no events");

  std::map<std::int64_t, NodeId> dense;
  for (const auto& e : raw) {
    dense.emplace(e.u, 0);
    dense.emplace(e.v, 0);
  }
  std::vector<std::int64_t> original;
  original.reserve(dense.size());
  for (auto& [id, idx] : dense) {
    idx = static_cast<NodeId>(original.size());
    original.push_back(id);
  }
  std::vector<EdgeEvent> edges;
  edges.reserve(raw.size());
  for (const auto& e : raw) edges.push_back({dense[e.u], dense[e.v], e.t});

  FeatureTable edge_table{columns - 3, std::move(features)};
  FeatureTable node_table;
  if (!options.node_features.empty()) {
    std::ifstream nf(options.node_features);
    if (!nf) throw ContractError("cannot open node features " + options.node_features.string());
    std::size_t nline = 0;
    bool header = false;
    while (std::getline(nf, line)) {
      ++nline;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto fields = split_fields(line);
      if (!header) {
        if (fields.size() < 2) throw ParseError("node feature header needs node,feat_0..", nline);
        node_table.dim = fields.size() - 1;
        node_table.values.assign(dense.size() * node_table.dim, 0.0);
        header = true;
        continue;
      }
      if (fields.size() != node_table.dim + 1) throw ParseError("wrong number of node feature fields", nline);
      std::int64_t id;
      if (!parse_int(fields[0], id)) throw ParseError("node id must be an integer", nline);
      auto it = dense.find(id);
      if (it == dense.end()) continue;
      for (std::size_t c = 0; c < node_table.dim; ++c) {
        double f;
        if (!parse_double(fields[c + 1], f)) throw ParseError("non-numeric node feature", nline);
        node_table.values[it->second * node_table.dim + c] = f;
      }
    }
  }

  TemporalGraph g(original.size(), std::move(edges), std::move(edge_table), std::move(node_table));
  g.set_original_ids(std::move(original));
  return g;
}

void write_edge_list(const TemporalGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << "u,v,ts";
  for (std::size_t c = 0; c < graph.edge_feature_dim(); ++c) out << ",feat_" << c;
  out << '\n' << std::setprecision(17);
  const auto& ids = graph.original_ids();
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto& ev = graph.edge(e);
    auto id = [&](NodeId v) { return ids.empty() ? static_cast<std::int64_t>(v) : ids[v]; };
    out << id(ev.src) << ',' << id(ev.dst) << ',' << ev.time;
    for (double f : graph.edge_feature(e)) out << ',' << f;
    out << '\n';
  }
}

namespace {

// Linear-interpolation quantile of sorted data (numpy's default convention).
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

SplitBoundaries chronological_split(const TemporalGraph& graph, double val_start, double test_start,
                                    SplitMode mode) {
  if (graph.num_edges() == 0) throw ContractError("cannot split an empty graph");
  if (!(0.0 < val_start && val_start < test_start && test_start < 1.0)) {
    throw ContractError("split fractions must satisfy 0 < val < test < 1");
  }
  SplitBoundaries b;
  const auto& edges = graph.edges();
  if (mode == SplitMode::percentile) {
    std::vector<double> times;
    times.reserve(edges.size());
    for (const auto& e : edges) times.push_back(e.time);
    b.t_val = quantile_sorted(times, val_start);
    b.t_test = quantile_sorted(times, test_start);
  } else {
    const double t0 = edges.front().time;
    const double span = edges.back().time - t0;
    b.t_val = t0 + val_start * span;
    b.t_test = t0 + test_start * span;
  }
  if (!(b.t_val < b.t_test)) {
    throw ContractError("degenerate split: validation and test boundaries coincide at t=" +
                        std::to_string(b.t_val) + " (too few distinct timestamps)");
  }
  if (graph.lower_bound_time(b.t_val) == 0) {
    throw ContractError("degenerate split: no training edges before t_val=" + std::to_string(b.t_val));
  }
  return b;
}

Split split_of(double t, const SplitBoundaries& b) {
  if (t < b.t_val) return Split::train;
  if (t < b.t_test) return Split::val;
  return Split::test;
}

SplitRanges split_ranges(const TemporalGraph& graph, const SplitBoundaries& b) {
  return {graph.lower_bound_time(b.t_val), graph.lower_bound_time(b.t_test)};
}

namespace {

WaitingSummary summarize(std::vector<double> waits) {
  WaitingSummary s;
  s.count = waits.size();
  if (waits.empty()) return s;
  s.mean = std::accumulate(waits.begin(), waits.end(), 0.0) / static_cast<double>(waits.size());
  std::sort(waits.begin(), waits.end());
  const std::size_t n = waits.size();
  s.median = n % 2 ? waits[n / 2] : 0.5 * (waits[n / 2 - 1] + waits[n / 2]);
  return s;
}

}  // namespace

WaitingTimeStats waiting_time_stats(const TemporalGraph& graph, const SplitBoundaries& b) {
  std::vector<double> last(graph.num_nodes(), std::numeric_limits<double>::quiet_NaN());
  std::array<std::vector<double>, 3> src_waits, dst_waits;
  for (const auto& e : graph.edges()) {
    const auto split = static_cast<std::size_t>(split_of(e.time, b));
    if (!std::isnan(last[e.src])) src_waits[split].push_back(e.time - last[e.src]);
    if (!std::isnan(last[e.dst])) dst_waits[split].push_back(e.time - last[e.dst]);
    last[e.src] = e.time;
    last[e.dst] = e.time;
  }
  WaitingTimeStats stats;
  for (std::size_t s = 0; s < 3; ++s) {
    stats.source[s] = summarize(std::move(src_waits[s]));
    stats.destination[s] = summarize(std::move(dst_waits[s]));
  }
  return stats;
}

}  // namespace tempora
