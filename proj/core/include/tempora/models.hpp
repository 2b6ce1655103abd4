#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempora/nn.hpp"
#include "tempora/temporal_graph.hpp"
#include "tempora/time_encoders.hpp"
#include "tempora/transformer.hpp"

namespace tempora {

enum class Architecture { tgat, dygformer, dygformer_separate, dygdecoder };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

struct TimeEncoderConfig {
  EncoderFamily family = EncoderFamily::linear;
  std::size_t dim = 100;
};

struct ModelConfig {
  Architecture architecture = Architecture::tgat;
  std::size_t layers = 2;
  double dropout = 0.1;
  TimeEncoderConfig time_encoder;

  // Dataset feature widths; filled from the graph when a model is built for it.
  std::size_t node_feature_dim = 0;
  std::size_t edge_feature_dim = 0;

  // TGAT
  std::size_t neighbors = 20;   // recent neighbors per layer
  std::size_t attn_dim = 0;     // 0: query input width (node dim + time width) per layer
  std::size_t embed_dim = 100;  // layer output width
  std::size_t mlp_dim = 100;    // hidden width of the merge MLP

  // DyGFormer family
  std::size_t channel_dim = 50;          // d_ch
  std::size_t time_channel_dim = 0;      // d_tc; 0 means channel_dim
  std::size_t cooccurrence_dim = 50;     // d_C
  std::size_t patch_size = 1;
  std::size_t max_sequence_length = 32;  // events per node sequence incl. the target edge
  std::size_t out_dim = 100;

  std::size_t time_channel() const { return time_channel_dim ? time_channel_dim : channel_dim; }
  // d_h of the DyGFormer transformer.
  std::size_t transformer_dim() const { return 3 * channel_dim + time_channel(); }
  void validate() const;
};

struct NodeTime {
  NodeId node = 0;
  double time = 0.0;
};

struct EmbeddingPair {
  Tensor src;  // B x d
  Tensor dst;  // B x d
};

// Last-layer attention of one node sequence. positions[] are the event times of
// the attended positions (patch: its latest event); the BOS row, when present,
// is position 0 and carries no time.
struct SequenceAttention {
  bool source = true;
  double target_time = 0.0;
  bool has_bos = false;
  std::vector<double> position_times;
  AttentionMap map;
};

struct AttentionCapture {
  std::vector<SequenceAttention> sequences;
};

/// Maps a batch of (src, dst, t) queries to temporal node representations.
class TemporalEmbedder {
 public:
  virtual ~TemporalEmbedder() = default;

  virtual EmbeddingPair embed(std::span<const EdgeEvent> edges, const TemporalGraph& graph,
                              const ForwardContext& ctx, AttentionCapture* capture = nullptr) const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual void register_into(ParameterList& params) const = 0;

  virtual TimeEncoder& time_encoder() = 0;
  virtual const TimeEncoder& time_encoder() const = 0;
};

/// TGAT embedder: recursive single-head temporal graph attention.
class TgatModel final : public TemporalEmbedder {
 public:
  TgatModel(const ModelConfig& config, Rng& rng);

  EmbeddingPair embed(std::span<const EdgeEvent> edges, const TemporalGraph& graph, const ForwardContext& ctx,
                      AttentionCapture* capture = nullptr) const override;
  std::size_t output_dim() const override { return config_.embed_dim; }
  void register_into(ParameterList& params) const override;
  TimeEncoder& time_encoder() override { return encoder_; }
  const TimeEncoder& time_encoder() const override { return encoder_; }

  // Layer-`layer` representations of nodes at their query times; layer 0 is
  // the raw node attributes.
  Tensor embed_nodes(std::span<const NodeTime> queries, std::size_t layer, const TemporalGraph& graph,
                     const ForwardContext& ctx) const;

  struct Layer {
    std::size_t input_dim = 0;  // width of the previous layer's representation
    std::size_t attn_dim = 0;
    Linear query, key, value;   // no bias
    Linear merge_hidden, merge_out;
  };
  std::vector<Layer>& layers() { return layers_; }

 private:
  ModelConfig config_;
  TimeEncoder encoder_;
  std::vector<Layer> layers_;
};

// One event per row; the target edge is the last row with no edge id.
struct NodeSequence {
  std::vector<NodeId> neighbors;
  std::vector<double> times;
  std::vector<std::optional<std::size_t>> edge_ids;

  std::size_t size() const { return neighbors.size(); }
};

// Up to budget-1 most recent strictly-past events of `node` before t, then the
// target row (other, t).
NodeSequence build_node_sequence(const TemporalGraph& graph, NodeId node, NodeId other, double t,
                                 std::size_t budget);

struct CooccurrenceMatrix {
  // rows[m] = {occurrences of neighbor m in seq_i, occurrences in seq_j}
  std::vector<std::array<double, 2>> rows;
};

std::pair<CooccurrenceMatrix, CooccurrenceMatrix> cooccurrence_counts(const NodeSequence& seq_i,
                                                                      const NodeSequence& seq_j);

/// DyGFormer and its separate / decoder variants.
class DygFormerModel final : public TemporalEmbedder {
 public:
  DygFormerModel(const ModelConfig& config, Rng& rng);

  EmbeddingPair embed(std::span<const EdgeEvent> edges, const TemporalGraph& graph, const ForwardContext& ctx,
                      AttentionCapture* capture = nullptr) const override;
  std::size_t output_dim() const override { return config_.out_dim; }
  void register_into(ParameterList& params) const override;
  TimeEncoder& time_encoder() override { return encoder_; }
  const TimeEncoder& time_encoder() const override { return encoder_; }

  // f_C(C[:,0]) + f_C(C[:,1]) for stacked co-occurrence rows.
  Tensor cooccurrence_features(std::span<const std::array<double, 2>> counts) const;

  // Projected, patched input matrix X for one endpoint of `edge`:
  // ceil(len/P) x (3 d_ch + d_tc).
  Tensor input_sequence(const EdgeEvent& edge, bool source_side, const TemporalGraph& graph) const;

  std::vector<TransformerLayer>& transformer() { return layers_; }
  Tensor& bos() { return bos_; }
  Linear& output() { return output_; }
  Linear& node_projection() { return proj_node_; }
  Linear& edge_projection() { return proj_edge_; }
  Linear& time_projection() { return proj_time_; }
  Linear& cooccurrence_projection() { return proj_cooc_; }
  Linear& cooccurrence_hidden() { return cooc_hidden_; }
  Linear& cooccurrence_out() { return cooc_out_; }

 private:
  struct Batch {
    Tensor inputs;           // stacked patched sequences
    Offsets offsets;         // one segment per sequence, [src0, dst0, src1, dst1, ...]
    std::vector<std::vector<double>> patch_times;
    std::vector<double> targets;
  };
  Batch build_batch(std::span<const EdgeEvent> edges, const TemporalGraph& graph) const;

  ModelConfig config_;
  TimeEncoder encoder_;
  Linear cooc_hidden_, cooc_out_;
  Linear proj_node_, proj_edge_, proj_time_, proj_cooc_;
  std::vector<TransformerLayer> layers_;
  Tensor bos_;
  Linear output_;
};

/// MLP([z_src; z_dst]) -> logit.
class LinkHead {
 public:
  LinkHead() = default;
  LinkHead(std::size_t dim, Rng& rng);

  Tensor operator()(const Tensor& src, const Tensor& dst) const;
  void register_into(ParameterList& params) const;
  Linear& hidden() { return hidden_; }
  Linear& out() { return out_; }

 private:
  Linear hidden_, out_;
};

class LinkPredictor {
 public:
  LinkPredictor(const ModelConfig& config, Rng& rng);

  // B x 1 logits for the given (src, dst, t) queries.
  Tensor logits(std::span<const EdgeEvent> edges, const TemporalGraph& graph, const ForwardContext& ctx,
                AttentionCapture* capture = nullptr) const;

  const ModelConfig& config() const { return config_; }
  TemporalEmbedder& embedder() { return *embedder_; }
  const TemporalEmbedder& embedder() const { return *embedder_; }
  LinkHead& head() { return head_; }
  ParameterList parameters() const;

 private:
  ModelConfig config_;
  std::unique_ptr<TemporalEmbedder> embedder_;
  LinkHead head_;
};

struct ParameterCount {
  std::size_t total = 0;
  std::map<ParamGroup, std::size_t> by_group;
};

ParameterCount count_parameters(const LinkPredictor& model);

}  // namespace tempora
