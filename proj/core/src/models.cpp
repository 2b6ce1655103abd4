#include "tempora/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "tempora/errors.hpp"

namespace tempora {

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::tgat: return "tgat";
    case Architecture::dygformer: return "dygformer";
    case Architecture::dygformer_separate: return "dygformer_separate";
    case Architecture::dygdecoder: return "dygdecoder";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "tgat") return Architecture::tgat;
  if (name == "dygformer") return Architecture::dygformer;
  if (name == "dygformer_separate" || name == "dygformer-separate") return Architecture::dygformer_separate;
  if (name == "dygdecoder") return Architecture::dygdecoder;
  throw ContractError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (layers < 1) throw ContractError("model.layers must be >= 1");
  if (patch_size < 1) throw ContractError("model.patch_size must be >= 1");
  if (time_encoder.dim < 1) throw ContractError("time_encoder.d_T must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("model.dropout must lie in [0, 1)");
  if (architecture == Architecture::tgat) {
    if (embed_dim < 1 || mlp_dim < 1) throw ContractError("TGAT widths must be positive");
  } else {
    if (channel_dim < 1 || cooccurrence_dim < 1 || out_dim < 1) throw ContractError("DyGFormer widths must be positive");
    if (max_sequence_length < 1) throw ContractError("model.max_sequence_length must be >= 1");
  }
}

namespace {

Tensor feature_rows(std::size_t dim, std::size_t rows, const auto& fill) {
  std::vector<double> values(rows * dim, 0.0);
  if (dim) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::span<const double> f = fill(r);
      std::copy(f.begin(), f.end(), values.begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
  }
  return Tensor::from({rows, dim}, std::move(values));
}

std::vector<std::size_t> iota_indices(std::size_t begin, std::size_t end, std::size_t step = 1) {
  std::vector<std::size_t> out;
  for (std::size_t i = begin; i < end; i += step) out.push_back(i);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// TGAT

TgatModel::TgatModel(const ModelConfig& config, Rng& rng)
    : config_(config), encoder_(config.time_encoder.family, config.time_encoder.dim, rng) {
  config_.validate();
  const std::size_t time_w = encoder_.output_dim();
  const std::size_t dv = config_.node_feature_dim;
  const std::size_t de = config_.edge_feature_dim;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.input_dim = l == 0 ? dv : config_.embed_dim;
    layer.attn_dim = config_.attn_dim ? config_.attn_dim : layer.input_dim + time_w;
    layer.query = Linear(layer.input_dim + time_w, layer.attn_dim, false, rng);
    layer.key = Linear(layer.input_dim + time_w + de, layer.attn_dim, false, rng);
    layer.value = Linear(layer.input_dim + time_w + de, layer.attn_dim, false, rng);
    layer.merge_hidden = Linear(layer.attn_dim + dv, config_.mlp_dim, true, rng);
    layer.merge_out = Linear(config_.mlp_dim, config_.embed_dim, true, rng);
    layers_.push_back(std::move(layer));
  }
}

Tensor TgatModel::embed_nodes(std::span<const NodeTime> queries, std::size_t layer, const TemporalGraph& graph,
                              const ForwardContext& ctx) const {
  const std::size_t n = queries.size();
  const std::size_t dv = graph.node_feature_dim();
  if (dv != config_.node_feature_dim || graph.edge_feature_dim() != config_.edge_feature_dim) {
    throw DimensionError("graph feature widths differ from the model configuration");
  }
  auto raw_features = [&](std::span<const NodeTime> qs) {
    return feature_rows(dv, qs.size(), [&](std::size_t r) { return graph.node_feature(qs[r].node); });
  };
  if (layer == 0) return raw_features(queries);
  const Layer& L = layers_.at(layer - 1);

  std::vector<NodeTime> next(queries.begin(), queries.end());
  Offsets key_offsets{0};
  std::vector<double> key_inputs, query_inputs;
  std::vector<std::size_t> edge_ids;
  const bool positional = encoder_.family() == EncoderFamily::positional_sinusoidal;
  for (const auto& q : queries) {
    auto nb = graph.recent_neighbors(q.node, q.time, config_.neighbors);
    for (std::size_t r = 0; r < nb.size(); ++r) {
      next.push_back({nb[r].node, nb[r].time});
      key_inputs.push_back(positional ? static_cast<double>(r) : q.time - nb[r].time);
      edge_ids.push_back(nb[r].edge);
    }
    query_inputs.push_back(positional ? static_cast<double>(nb.size()) : 0.0);
    key_offsets.push_back(key_offsets.back() + nb.size());
  }
  const std::size_t total = key_offsets.back();

  Tensor prev = embed_nodes(next, layer - 1, graph, ctx);
  auto self_idx = iota_indices(0, n);
  auto nbr_idx = iota_indices(n, n + total);
  Tensor self_prev = gather_rows(prev, self_idx);
  Tensor nbr_prev = gather_rows(prev, nbr_idx);
  Tensor edge_feats = feature_rows(graph.edge_feature_dim(), total,
                                   [&](std::size_t r) { return graph.edge_feature(edge_ids[r]); });

  const Tensor query_parts[] = {self_prev, encoder_.encode(query_inputs)};
  const Tensor key_parts[] = {nbr_prev, encoder_.encode(key_inputs), edge_feats};
  Tensor query_in = concat_cols(query_parts);
  Tensor key_in = concat_cols(key_parts);

  AttentionLayout layout{iota_indices(0, n + 1), key_offsets, false};
  Tensor h = segmented_attention(L.query(query_in), L.key(key_in), L.value(key_in), layout,
                                 1.0 / std::sqrt(static_cast<double>(L.attn_dim)));
  h = ctx.drop(h);
  const Tensor merge_parts[] = {h, raw_features(queries)};
  Tensor hidden = ctx.drop(relu(L.merge_hidden(concat_cols(merge_parts))));
  return L.merge_out(hidden);
}

EmbeddingPair TgatModel::embed(std::span<const EdgeEvent> edges, const TemporalGraph& graph,
                               const ForwardContext& ctx, AttentionCapture* capture) const {
  if (capture) throw ContractError("attention capture is only available for the separate and decoder variants");
  const std::size_t b = edges.size();
  std::vector<NodeTime> queries;
  queries.reserve(2 * b);
  for (const auto& e : edges) queries.push_back({e.src, e.time});
  for (const auto& e : edges) queries.push_back({e.dst, e.time});
  Tensor all = embed_nodes(queries, config_.layers, graph, ctx);
  return {gather_rows(all, iota_indices(0, b)), gather_rows(all, iota_indices(b, 2 * b))};
}

void TgatModel::register_into(ParameterList& params) const {
  encoder_.register_into(params, "time_encoder");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "tgat.layer" + std::to_string(l + 1);
    layers_[l].query.register_into(params, p + ".query", ParamGroup::attention);
    layers_[l].key.register_into(params, p + ".key", ParamGroup::attention);
    layers_[l].value.register_into(params, p + ".value", ParamGroup::attention);
    layers_[l].merge_hidden.register_into(params, p + ".merge_hidden", ParamGroup::mlp);
    layers_[l].merge_out.register_into(params, p + ".merge_out", ParamGroup::mlp);
  }
}

// ---------------------------------------------------------------------------
// DyGFormer family

NodeSequence build_node_sequence(const TemporalGraph& graph, NodeId node, NodeId other, double t,
                                 std::size_t budget) {
  if (budget < 1) throw ContractError("sequence budget must be >= 1");
  NodeSequence seq;
  for (const auto& nb : graph.recent_neighbors(node, t, budget - 1)) {
    seq.neighbors.push_back(nb.node);
    seq.times.push_back(nb.time);
    seq.edge_ids.emplace_back(nb.edge);
  }
  seq.neighbors.push_back(other);
  seq.times.push_back(t);
  seq.edge_ids.emplace_back(std::nullopt);
  return seq;
}

std::pair<CooccurrenceMatrix, CooccurrenceMatrix> cooccurrence_counts(const NodeSequence& seq_i,
                                                                      const NodeSequence& seq_j) {
  std::unordered_map<NodeId, std::array<double, 2>> freq;
  for (auto v : seq_i.neighbors) freq[v][0] += 1.0;
  for (auto v : seq_j.neighbors) freq[v][1] += 1.0;
  std::pair<CooccurrenceMatrix, CooccurrenceMatrix> out;
  for (auto v : seq_i.neighbors) out.first.rows.push_back(freq[v]);
  for (auto v : seq_j.neighbors) out.second.rows.push_back(freq[v]);
  return out;
}

DygFormerModel::DygFormerModel(const ModelConfig& config, Rng& rng)
    : config_(config), encoder_(config.time_encoder.family, config.time_encoder.dim, rng) {
  config_.validate();
  if (config_.architecture == Architecture::tgat) throw ContractError("DygFormerModel built with a TGAT config");
  const std::size_t p = config_.patch_size;
  const std::size_t dc = config_.cooccurrence_dim;
  const std::size_t dh = config_.transformer_dim();
  cooc_hidden_ = Linear(1, dc, true, rng);
  cooc_out_ = Linear(dc, dc, true, rng);
  proj_node_ = Linear(p * config_.node_feature_dim, config_.channel_dim, true, rng);
  proj_edge_ = Linear(p * config_.edge_feature_dim, config_.channel_dim, true, rng);
  proj_time_ = Linear(p * encoder_.output_dim(), config_.time_channel(), true, rng);
  proj_cooc_ = Linear(p * dc, config_.channel_dim, true, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) layers_.emplace_back(dh, rng);
  if (config_.architecture == Architecture::dygdecoder) bos_ = Tensor::zeros({1, dh}, true);
  output_ = Linear(dh, config_.out_dim, true, rng);
}

Tensor DygFormerModel::cooccurrence_features(std::span<const std::array<double, 2>> counts) const {
  const std::size_t r = counts.size();
  std::vector<double> c0(r), c1(r);
  for (std::size_t i = 0; i < r; ++i) {
    c0[i] = counts[i][0];
    c1[i] = counts[i][1];
  }
  auto f = [&](std::vector<double> col) {
    return cooc_out_(relu(cooc_hidden_(Tensor::from({r, 1}, std::move(col)))));
  };
  return add(f(std::move(c0)), f(std::move(c1)));
}

DygFormerModel::Batch DygFormerModel::build_batch(std::span<const EdgeEvent> edges,
                                                  const TemporalGraph& graph) const {
  if (graph.node_feature_dim() != config_.node_feature_dim || graph.edge_feature_dim() != config_.edge_feature_dim) {
    throw DimensionError("graph feature widths differ from the model configuration");
  }
  Batch batch;
  Offsets raw_offsets{0};
  std::vector<NodeId> nbr;
  std::vector<std::optional<std::size_t>> eid;
  std::vector<double> time_inputs, times;
  std::vector<std::array<double, 2>> counts;
  const bool positional = encoder_.family() == EncoderFamily::positional_sinusoidal;
  for (const auto& e : edges) {
    NodeSequence seqs[2] = {build_node_sequence(graph, e.src, e.dst, e.time, config_.max_sequence_length),
                            build_node_sequence(graph, e.dst, e.src, e.time, config_.max_sequence_length)};
    auto [ci, cj] = cooccurrence_counts(seqs[0], seqs[1]);
    const CooccurrenceMatrix* cm[2] = {&ci, &cj};
    for (int side = 0; side < 2; ++side) {
      const auto& s = seqs[side];
      for (std::size_t r = 0; r < s.size(); ++r) {
        nbr.push_back(s.neighbors[r]);
        eid.push_back(s.edge_ids[r]);
        times.push_back(s.times[r]);
        time_inputs.push_back(positional ? static_cast<double>(r) : e.time - s.times[r]);
        counts.push_back(cm[side]->rows[r]);
      }
      raw_offsets.push_back(raw_offsets.back() + s.size());
      batch.targets.push_back(e.time);
    }
  }
  const std::size_t rows = nbr.size();
  Tensor node_ch = feature_rows(graph.node_feature_dim(), rows, [&](std::size_t r) { return graph.node_feature(nbr[r]); });
  Tensor edge_ch = feature_rows(graph.edge_feature_dim(), rows, [&](std::size_t r) {
    return eid[r] ? graph.edge_feature(*eid[r]) : std::span<const double>();
  });
  Tensor time_ch = encoder_.encode(time_inputs);
  Tensor cooc_ch = cooccurrence_features(counts);

  const std::size_t p = config_.patch_size;
  auto node_p = patch_segments(node_ch, raw_offsets, p);
  auto edge_p = patch_segments(edge_ch, raw_offsets, p);
  auto time_p = patch_segments(time_ch, raw_offsets, p);
  auto cooc_p = patch_segments(cooc_ch, raw_offsets, p);
  const Tensor parts[] = {proj_node_(node_p.rows), proj_edge_(edge_p.rows), proj_time_(time_p.rows),
                          proj_cooc_(cooc_p.rows)};
  batch.inputs = concat_cols(parts);
  batch.offsets = node_p.offsets;

  for (std::size_t s = 0; s + 1 < raw_offsets.size(); ++s) {
    std::vector<double> pt;
    for (std::size_t r = raw_offsets[s]; r < raw_offsets[s + 1]; r += p) {
      const std::size_t last = std::min(r + p, raw_offsets[s + 1]) - 1;
      pt.push_back(times[last]);
    }
    batch.patch_times.push_back(std::move(pt));
  }
  return batch;
}

EmbeddingPair DygFormerModel::embed(std::span<const EdgeEvent> edges, const TemporalGraph& graph,
                                    const ForwardContext& ctx, AttentionCapture* capture) const {
  const auto arch = config_.architecture;
  if (capture && arch == Architecture::dygformer) {
    throw ContractError("attention capture is only available for the separate and decoder variants");
  }
  Batch batch = build_batch(edges, graph);
  const std::size_t seqs = batch.offsets.size() - 1;
  Tensor z = batch.inputs;
  Offsets attn_offsets;
  bool causal = false;
  if (arch == Architecture::dygformer) {
    for (std::size_t s = 0; s < seqs; s += 2) attn_offsets.push_back(batch.offsets[s]);
    attn_offsets.push_back(batch.offsets.back());
  } else if (arch == Architecture::dygformer_separate) {
    attn_offsets = batch.offsets;
  } else {
    // Prepend the BOS row to every sequence.
    std::vector<std::size_t> idx;
    attn_offsets.push_back(0);
    for (std::size_t s = 0; s < seqs; ++s) {
      idx.push_back(0);
      for (std::size_t r = batch.offsets[s]; r < batch.offsets[s + 1]; ++r) idx.push_back(r + 1);
      attn_offsets.push_back(idx.size());
    }
    const Tensor parts[] = {bos_, z};
    z = gather_rows(concat_rows(parts), idx);
    causal = true;
  }

  std::vector<AttentionMap> probe;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const bool last = l + 1 == layers_.size();
    z = layers_[l].forward(z, attn_offsets, causal, ctx, last && capture ? &probe : nullptr);
  }

  Tensor pooled;
  if (arch == Architecture::dygdecoder) {
    std::vector<std::size_t> last_rows;
    for (std::size_t s = 0; s < seqs; ++s) last_rows.push_back(attn_offsets[s + 1] - 1);
    pooled = gather_rows(z, last_rows);
  } else {
    Offsets pool_offsets = batch.offsets;
    pooled = segment_mean(z, pool_offsets);
  }
  Tensor out = output_(pooled);

  if (capture) {
    for (std::size_t s = 0; s < seqs; ++s) {
      SequenceAttention rec;
      rec.source = s % 2 == 0;
      rec.target_time = batch.targets[s];
      rec.has_bos = arch == Architecture::dygdecoder;
      if (rec.has_bos) rec.position_times.push_back(std::numeric_limits<double>::quiet_NaN());
      rec.position_times.insert(rec.position_times.end(), batch.patch_times[s].begin(), batch.patch_times[s].end());
      rec.map = std::move(probe[s]);
      capture->sequences.push_back(std::move(rec));
    }
  }
  return {gather_rows(out, iota_indices(0, 2 * edges.size(), 2)),
          gather_rows(out, iota_indices(1, 2 * edges.size(), 2))};
}

Tensor DygFormerModel::input_sequence(const EdgeEvent& edge, bool source_side, const TemporalGraph& graph) const {
  const EdgeEvent one[] = {edge};
  Batch batch = build_batch(one, graph);
  const std::size_t s = source_side ? 0 : 1;
  return gather_rows(batch.inputs, iota_indices(batch.offsets[s], batch.offsets[s + 1]));
}

void DygFormerModel::register_into(ParameterList& params) const {
  encoder_.register_into(params, "time_encoder");
  cooc_hidden_.register_into(params, "cooccurrence.hidden", ParamGroup::mlp);
  cooc_out_.register_into(params, "cooccurrence.out", ParamGroup::mlp);
  proj_node_.register_into(params, "projection.node", ParamGroup::embedding);
  proj_edge_.register_into(params, "projection.edge", ParamGroup::embedding);
  proj_time_.register_into(params, "projection.time", ParamGroup::embedding);
  proj_cooc_.register_into(params, "projection.cooccurrence", ParamGroup::embedding);
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].register_into(params, "transformer" + std::to_string(l + 1));
  if (bos_.defined()) params.add("bos", ParamGroup::embedding, bos_);
  output_.register_into(params, "output", ParamGroup::embedding);
}

// ---------------------------------------------------------------------------
// Link scoring

LinkHead::LinkHead(std::size_t dim, Rng& rng) : hidden_(2 * dim, dim, true, rng), out_(dim, 1, true, rng) {}

Tensor LinkHead::operator()(const Tensor& src, const Tensor& dst) const {
  const Tensor parts[] = {src, dst};
  return out_(relu(hidden_(concat_cols(parts))));
}

void LinkHead::register_into(ParameterList& params) const {
  hidden_.register_into(params, "head.hidden", ParamGroup::head);
  out_.register_into(params, "head.out", ParamGroup::head);
}

LinkPredictor::LinkPredictor(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  if (config_.architecture == Architecture::tgat) {
    embedder_ = std::make_unique<TgatModel>(config_, rng);
  } else {
    embedder_ = std::make_unique<DygFormerModel>(config_, rng);
  }
  head_ = LinkHead(embedder_->output_dim(), rng);
}

Tensor LinkPredictor::logits(std::span<const EdgeEvent> edges, const TemporalGraph& graph, const ForwardContext& ctx,
                             AttentionCapture* capture) const {
  if (edges.empty()) throw ContractError("cannot score an empty batch");
  auto z = embedder_->embed(edges, graph, ctx, capture);
  return head_(z.src, z.dst);
}

ParameterList LinkPredictor::parameters() const {
  ParameterList params;
  embedder_->register_into(params);
  head_.register_into(params);
  return params;
}

ParameterCount count_parameters(const LinkPredictor& model) {
  auto params = model.parameters();
  return {params.count(), params.count_by_group()};
}

}  // namespace tempora
