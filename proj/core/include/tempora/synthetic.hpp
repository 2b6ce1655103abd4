#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tempora/nn.hpp"
#include "tempora/ops.hpp"
#include "tempora/time_encoders.hpp"
#include "tempora/transformer.hpp"

namespace tempora {

struct SyntheticConfig {
  double intensity = 0.01;  // lambda of every exponential gap
  double decay = 0.003;     // alpha of the labeling function
  std::size_t events = 7;   // M
  std::size_t sequences = 2000;
  double noise_variance = 0.01;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledSequence {
  std::vector<double> x;      // +-1
  std::vector<double> times;  // strictly increasing, all < target
  double target = 0.0;
  double noise = 0.0;
  int label = 0;
};

struct SyntheticDataset {
  std::vector<LabeledSequence> train, val, test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

SyntheticDataset generate_sequences(const SyntheticConfig& cfg);

// 1[sum_m exp(-alpha (t - t_m)) x_m + noise > 0]
int true_label(const LabeledSequence& seq, double decay, double noise);

// exp(-alpha (t - t_m)) normalized over the M events.
std::vector<double> true_attention(const LabeledSequence& seq, double decay);

// (M+1) x (encoder width + 1). Rows [Φ(t - t_m), x_m], then [Φ(0), 0]. The
// positional family encodes the row index instead of the time difference.
Tensor build_sequence_input(const LabeledSequence& seq, const TimeEncoder& encoder);

// Time differences t - t_m of every training event.
std::vector<double> sequence_time_diffs(std::span<const LabeledSequence> sequences);

enum class AttentionMode { full, autoregressive };

struct ClassifierConfig {
  EncoderFamily family = EncoderFamily::linear;
  std::size_t time_dim = 2;
  std::size_t hidden_dim = 32;
  std::size_t layers = 1;
  AttentionMode mode = AttentionMode::full;
  double dropout = 0.0;
};

/// Input projection, stacked transformer layers, pooling, linear head.
class SequenceClassifier {
 public:
  SequenceClassifier(const ClassifierConfig& config, Rng& rng);

  // B x 1 logits. With `probe`, receives the last layer's attention maps,
  // one per sequence.
  Tensor logits(std::span<const LabeledSequence> batch, const ForwardContext& ctx,
                std::vector<AttentionMap>* probe = nullptr) const;

  const ClassifierConfig& config() const { return config_; }
  TimeEncoder& encoder() { return encoder_; }
  const TimeEncoder& encoder() const { return encoder_; }
  Linear& input() { return input_; }
  std::vector<TransformerLayer>& layers() { return layers_; }
  Linear& head() { return head_; }
  ParameterList parameters() const;

 private:
  ClassifierConfig config_;
  TimeEncoder encoder_;
  Linear input_;
  std::vector<TransformerLayer> layers_;
  Linear head_;
};

double accuracy(const SequenceClassifier& model, std::span<const LabeledSequence> sequences);

struct SyntheticTrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::size_t patience = 20;  // epochs without validation improvement
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct SyntheticRunResult {
  std::vector<double> epoch_loss;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

// Fits the encoder standardizer on the training split, trains with Adam and
// BCE, and restores the best-validation parameters before testing.
SyntheticRunResult train_sequence_classifier(SequenceClassifier& model, const SyntheticDataset& data,
                                             const SyntheticTrainOptions& options);

struct AttentionProfile {
  std::vector<double> learned;  // per event index, mean attention of the target query
  std::vector<double> truth;    // per event index, mean true_attention
};

// Requires a one-layer autoregressive model.
AttentionProfile extract_avg_attention(const SequenceClassifier& model, std::span<const LabeledSequence> sequences,
                                       double decay);

// Pearson correlation of average ranks.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

// Columns seq_id,event_idx,x,t_event,t_target,y; one row per event.
void write_sequences_csv(const SyntheticDataset& data, const std::filesystem::path& path);
// Columns event_idx,learned_mean,true_mean.
void write_attention_profile_csv(const AttentionProfile& profile, const std::filesystem::path& path);

}  // namespace tempora
