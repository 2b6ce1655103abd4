#include "tempora/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "tempora/errors.hpp"
#include "tempora/optim.hpp"

namespace tempora {

void SyntheticConfig::validate() const {
  if (!(intensity > 0.0)) throw ContractError("intensity rate must be positive");
  if (!(decay > 0.0)) throw ContractError("decay rate must be positive");
  if (events < 1) throw ContractError("sequences need at least one event");
  if (noise_variance < 0.0) throw ContractError("noise variance must be non-negative");
  const double total = train_fraction + val_fraction + test_fraction;
  if (std::abs(total - 1.0) > 1e-9 || train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0) {
    throw ContractError("split fractions must be non-negative and sum to 1");
  }
}

int true_label(const LabeledSequence& seq, double decay, double noise) {
  double s = noise;
  for (std::size_t m = 0; m < seq.x.size(); ++m) s += std::exp(-decay * (seq.target - seq.times[m])) * seq.x[m];
  return s > 0.0 ? 1 : 0;
}

std::vector<double> true_attention(const LabeledSequence& seq, double decay) {
  std::vector<double> w(seq.times.size());
  double total = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    w[m] = std::exp(-decay * (seq.target - seq.times[m]));
    total += w[m];
  }
  for (auto& v : w) v /= total;
  return w;
}

SyntheticDataset generate_sequences(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  std::exponential_distribution<double> gap(cfg.intensity);
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance));

  std::vector<LabeledSequence> all(cfg.sequences);
  for (auto& seq : all) {
    double t = 0.0;
    for (std::size_t m = 0; m < cfg.events; ++m) {
      seq.x.push_back(coin(rng) ? 1.0 : -1.0);
      double dt = 0.0;
      while (dt <= 0.0) dt = gap(rng);  // keeps timestamps strictly increasing
      t += dt;
      seq.times.push_back(t);
    }
    double dt = 0.0;
    while (dt <= 0.0) dt = gap(rng);
    seq.target = t + dt;
    seq.noise = cfg.noise_variance > 0.0 ? noise(rng) : 0.0;
    seq.label = true_label(seq, cfg.decay, seq.noise);
  }

  const auto n = static_cast<double>(cfg.sequences);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * n));
  const auto n_val = std::min(cfg.sequences - n_train, static_cast<std::size_t>(std::llround(cfg.val_fraction * n)));
  SyntheticDataset data;
  data.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.val.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                  all.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  data.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), all.end());
  return data;
}

namespace {

void append_encoder_inputs(const LabeledSequence& seq, const TimeEncoder& encoder, std::vector<double>& inputs,
                           std::vector<double>& features) {
  const bool positional = encoder.family() == EncoderFamily::positional_sinusoidal;
  const std::size_t m_count = seq.times.size();
  for (std::size_t m = 0; m < m_count; ++m) {
    inputs.push_back(positional ? static_cast<double>(m) : seq.target - seq.times[m]);
    features.push_back(seq.x[m]);
  }
  inputs.push_back(positional ? static_cast<double>(m_count) : 0.0);
  features.push_back(0.0);
}

Tensor stacked_input(std::span<const LabeledSequence> batch, const TimeEncoder& encoder, Offsets& offsets) {
  std::vector<double> inputs, features;
  offsets.assign(1, 0);
  for (const auto& seq : batch) {
    append_encoder_inputs(seq, encoder, inputs, features);
    offsets.push_back(inputs.size());
  }
  const std::size_t rows = features.size();
  const Tensor parts[] = {encoder.encode(inputs), Tensor::from({rows, 1}, std::move(features))};
  return concat_cols(parts);
}

}  // namespace

Tensor build_sequence_input(const LabeledSequence& seq, const TimeEncoder& encoder) {
  Offsets offsets;
  return stacked_input(std::span<const LabeledSequence>(&seq, 1), encoder, offsets);
}

std::vector<double> sequence_time_diffs(std::span<const LabeledSequence> sequences) {
  std::vector<double> diffs;
  for (const auto& seq : sequences) {
    for (double tm : seq.times) diffs.push_back(seq.target - tm);
  }
  return diffs;
}

SequenceClassifier::SequenceClassifier(const ClassifierConfig& config, Rng& rng)
    : config_(config), encoder_(config.family, config.time_dim, rng) {
  if (config_.layers < 1 || config_.hidden_dim < 1) throw ContractError("classifier needs a layer and a hidden width");
  input_ = Linear(encoder_.output_dim() + 1, config_.hidden_dim, true, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) layers_.emplace_back(config_.hidden_dim, rng);
  head_ = Linear(config_.hidden_dim, 1, true, rng);
}

Tensor SequenceClassifier::logits(std::span<const LabeledSequence> batch, const ForwardContext& ctx,
                                  std::vector<AttentionMap>* probe) const {
  if (batch.empty()) throw ContractError("cannot classify an empty batch");
  Offsets offsets;
  Tensor z = input_(stacked_input(batch, encoder_, offsets));
  const bool causal = config_.mode == AttentionMode::autoregressive;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    z = layers_[l].forward(z, offsets, causal, ctx, l + 1 == layers_.size() ? probe : nullptr);
  }
  Tensor pooled;
  if (causal) {
    std::vector<std::size_t> last;
    for (std::size_t s = 1; s < offsets.size(); ++s) last.push_back(offsets[s] - 1);
    pooled = gather_rows(z, last);
  } else {
    pooled = segment_mean(z, offsets);
  }
  return head_(pooled);
}

ParameterList SequenceClassifier::parameters() const {
  ParameterList params;
  encoder_.register_into(params, "time_encoder");
  input_.register_into(params, "input", ParamGroup::embedding);
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].register_into(params, "transformer" + std::to_string(l + 1));
  head_.register_into(params, "head", ParamGroup::head);
  return params;
}

double accuracy(const SequenceClassifier& model, std::span<const LabeledSequence> sequences) {
  if (sequences.empty()) throw ContractError("accuracy of an empty set");
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  ForwardContext ctx;
  for (std::size_t begin = 0; begin < sequences.size(); begin += kChunk) {
    auto chunk = sequences.subspan(begin, std::min(kChunk, sequences.size() - begin));
    Tensor z = model.logits(chunk, ctx);
    for (std::size_t i = 0; i < chunk.size(); ++i) correct += (z.data()[i] > 0.0 ? 1 : 0) == chunk[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(sequences.size());
}

SyntheticRunResult train_sequence_classifier(SequenceClassifier& model, const SyntheticDataset& data,
                                             const SyntheticTrainOptions& options) {
  if (data.train.empty() || data.val.empty() || data.test.empty()) throw ContractError("every split must be non-empty");
  if (options.batch_size < 1) throw ContractError("batch size must be >= 1");
  if (model.encoder().uses_standardizer()) {
    model.encoder().set_standardizer(fit_time_standardizer(sequence_time_diffs(data.train)));
  }
  Rng rng(options.seed);
  ParameterList params = model.parameters();
  Adam adam(params.tensors(), AdamOptions{.lr = options.lr});
  ForwardContext train_ctx{true, model.config().dropout, &rng};

  auto snapshot = [&] {
    std::vector<std::vector<double>> values;
    for (const auto& p : params.entries()) values.push_back(p.tensor.to_vector());
    return values;
  };
  SyntheticRunResult result;
  auto best = snapshot();
  result.best_val_accuracy = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledSequence> batch;
  std::vector<double> labels;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(data.train[order[i]]);
        labels.push_back(static_cast<double>(batch.back().label));
      }
      adam.zero_grad();
      Tensor loss = bce_with_logits(model.logits(batch, train_ctx), labels);
      if (!std::isfinite(loss.item())) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
      loss.backward();
      adam.step();
      loss_sum += loss.item();
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));

    const double val = accuracy(model, data.val);
    if (val > result.best_val_accuracy) {
      result.best_val_accuracy = val;
      result.best_epoch = epoch;
      best = snapshot();
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    Tensor target = params.entries()[i].tensor;
    auto dst = target.mutable_data();
    std::copy(best[i].begin(), best[i].end(), dst.begin());
  }
  result.test_accuracy = accuracy(model, data.test);
  return result;
}

AttentionProfile extract_avg_attention(const SequenceClassifier& model, std::span<const LabeledSequence> sequences,
                                       double decay) {
  if (model.config().layers != 1 || model.config().mode != AttentionMode::autoregressive) {
    throw ContractError("attention profiles need a one-layer autoregressive model");
  }
  if (sequences.empty()) throw ContractError("attention profile of an empty set");
  const std::size_t m_count = sequences.front().times.size();
  AttentionProfile profile;
  profile.learned.assign(m_count, 0.0);
  profile.truth.assign(m_count, 0.0);
  ForwardContext ctx;
  std::vector<AttentionMap> maps;
  model.logits(sequences, ctx, &maps);
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (sequences[s].times.size() != m_count) throw ContractError("attention profiles need equal-length sequences");
    const auto& map = maps[s];
    const auto truth = true_attention(sequences[s], decay);
    for (std::size_t m = 0; m < m_count; ++m) {
      profile.learned[m] += map.at(map.queries - 1, m);
      profile.truth[m] += truth[m];
    }
  }
  for (std::size_t m = 0; m < m_count; ++m) {
    profile.learned[m] /= static_cast<double>(sequences.size());
    profile.truth[m] /= static_cast<double>(sequences.size());
  }
  return profile;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("rank correlation needs two equal-length samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) throw ContractError("rank correlation of a constant sample");
  return cov / std::sqrt(va * vb);
}

void write_sequences_csv(const SyntheticDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << std::setprecision(17);
  out << "seq_id,event_idx,x,t_event,t_target,y\n";
  std::size_t id = 0;
  for (const auto* split : {&data.train, &data.val, &data.test}) {
    for (const auto& seq : *split) {
      for (std::size_t m = 0; m < seq.times.size(); ++m) {
        out << id << ',' << m + 1 << ',' << seq.x[m] << ',' << seq.times[m] << ',' << seq.target << ',' << seq.label
            << '\n';
      }
      ++id;
    }
  }
}

void write_attention_profile_csv(const AttentionProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << std::setprecision(17);
  out << "event_idx,learned_mean,true_mean\n";
  for (std::size_t m = 0; m < profile.learned.size(); ++m) {
    out << m + 1 << ',' << profile.learned[m] << ',' << profile.truth[m] << '\n';
  }
}

}  // namespace tempora
