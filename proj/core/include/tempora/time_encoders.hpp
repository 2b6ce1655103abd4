#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempora/nn.hpp"
#include "tempora/ops.hpp"

namespace tempora {

enum class EncoderFamily {
  linear,                // w * standardized(dt) + b
  sinusoidal_cos,        // cos(omega * dt + phi) on raw dt
  sinusoidal_pair,       // sqrt(1/d) [cos(omega dt), sin(omega dt)] interleaved
  sinusoidal_scale,      // sinusoidal_cos on standardized dt
  positional_sinusoidal  // sinusoidal_cos on the event's rank in its sequence
};

std::string_view to_string(EncoderFamily family);
EncoderFamily parse_encoder_family(std::string_view name);

struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;

  double apply(double dt) const { return (dt - mean) / stddev; }
};

// Population mean / standard deviation; a zero deviation is replaced by 1.
Standardizer fit_time_standardizer(std::span<const double> diffs);

/// Learnable time encoder. All parameters are registered as trainable.
class TimeEncoder {
 public:
  TimeEncoder() = default;
  // Default initialization: frequencies 10^-a with a evenly spaced on [0, 9]
  // and zero phases; linear weights ~ N(0, 1/d_T) with zero biases.
  TimeEncoder(EncoderFamily family, std::size_t dim, Rng& rng);

  // Explicit parameters. `primary` holds frequencies (sinusoidal families) or
  // weights (linear); `secondary` holds phases or biases and is ignored for
  // sinusoidal_pair. An empty `secondary` means zeros.
  static TimeEncoder from_values(EncoderFamily family, std::vector<double> primary,
                                 std::vector<double> secondary = {});

  EncoderFamily family() const { return family_; }
  std::size_t dim() const { return dim_; }
  std::size_t output_dim() const { return family_ == EncoderFamily::sinusoidal_pair ? 2 * dim_ : dim_; }
  bool uses_standardizer() const;

  void set_standardizer(Standardizer s);
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }

  // One row per input (time difference, or rank for the positional family).
  Tensor encode(std::span<const double> inputs) const;
  std::vector<double> encode_value(double input) const;

  void register_into(ParameterList& params, const std::string& prefix) const;
  std::size_t parameter_count() const;

  const Tensor& primary() const { return primary_; }
  const Tensor& secondary() const { return secondary_; }

 private:
  EncoderFamily family_ = EncoderFamily::linear;
  std::size_t dim_ = 0;
  Tensor primary_;    // 1 x d: omega or w
  Tensor secondary_;  // 1 x d: phi or b (undefined for sinusoidal_pair)
  std::optional<Standardizer> standardizer_;
};

std::vector<double> linear_encode(const TimeEncoder& enc, double dt);
std::vector<double> sinusoidal_encode(const TimeEncoder& enc, double dt);
std::vector<double> sinusoidal_pair_encode(const TimeEncoder& enc, double dt);
std::vector<double> positional_encode(const TimeEncoder& enc, std::size_t rank);

// cos(omega * dt + phi) evaluated entirely in single precision, for showing
// how small-frequency encodings of different time gaps collapse in float32.
float cosine_encoding_float32(float omega, float phi, float dt);

}  // namespace tempora
