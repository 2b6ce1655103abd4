#include "tempora/time_encoders.hpp"

#include <cmath>

#include "tempora/errors.hpp"

namespace tempora {

std::string_view to_string(EncoderFamily family) {
  switch (family) {
    case EncoderFamily::linear: return "linear";
    case EncoderFamily::sinusoidal_cos: return "sinusoidal_cos";
    case EncoderFamily::sinusoidal_pair: return "sinusoidal_pair";
    case EncoderFamily::sinusoidal_scale: return "sinusoidal_scale";
    case EncoderFamily::positional_sinusoidal: return "positional_sinusoidal";
  }
  return "unknown";
}

EncoderFamily parse_encoder_family(std::string_view name) {
  if (name == "linear") return EncoderFamily::linear;
  if (name == "sinusoidal_cos" || name == "sinusoidal") return EncoderFamily::sinusoidal_cos;
  if (name == "sinusoidal_pair") return EncoderFamily::sinusoidal_pair;
  if (name == "sinusoidal_scale") return EncoderFamily::sinusoidal_scale;
  if (name == "positional_sinusoidal" || name == "positional") return EncoderFamily::positional_sinusoidal;
  throw ContractError("unknown time encoder family '" + std::string(name) + "'");
}

Standardizer fit_time_standardizer(std::span<const double> diffs) {
  if (diffs.empty()) throw ContractError("cannot fit a time standardizer on no samples");
  const double n = static_cast<double>(diffs.size());
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= n;
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= n;
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

TimeEncoder::TimeEncoder(EncoderFamily family, std::size_t dim, Rng& rng) : family_(family), dim_(dim) {
  if (dim == 0) throw ContractError("time encoder dimension must be positive");
  std::vector<double> primary(dim), secondary(dim, 0.0);
  if (family == EncoderFamily::linear) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (auto& w : primary) w = dist(rng);
  } else {
    for (std::size_t i = 0; i < dim; ++i) {
      const double a = dim > 1 ? 9.0 * static_cast<double>(i) / static_cast<double>(dim - 1) : 0.0;
      primary[i] = std::pow(10.0, -a);
    }
  }
  primary_ = Tensor::from({1, dim}, std::move(primary), true);
  if (family != EncoderFamily::sinusoidal_pair) secondary_ = Tensor::from({1, dim}, std::move(secondary), true);
}

TimeEncoder TimeEncoder::from_values(EncoderFamily family, std::vector<double> primary,
                                     std::vector<double> secondary) {
  const std::size_t dim = primary.size();
  if (dim == 0) throw ContractError("time encoder dimension must be positive");
  if (secondary.empty()) secondary.assign(dim, 0.0);
  if (secondary.size() != dim) throw DimensionError("time encoder parameter sizes differ");
  TimeEncoder enc;
  enc.family_ = family;
  enc.dim_ = dim;
  enc.primary_ = Tensor::from({1, dim}, std::move(primary), true);
  if (family != EncoderFamily::sinusoidal_pair) enc.secondary_ = Tensor::from({1, dim}, std::move(secondary), true);
  return enc;
}

bool TimeEncoder::uses_standardizer() const {
  return family_ == EncoderFamily::linear || family_ == EncoderFamily::sinusoidal_scale;
}

void TimeEncoder::set_standardizer(Standardizer s) {
  if (!(s.stddev > 0.0)) throw ContractError("standardizer deviation must be positive");
  standardizer_ = s;
}

Tensor TimeEncoder::encode(std::span<const double> inputs) const {
  if (!primary_.defined()) throw ContractError("time encoder is not initialized");
  std::vector<double> column(inputs.begin(), inputs.end());
  if (uses_standardizer()) {
    if (!standardizer_) {
      throw ContractError(std::string(to_string(family_)) + " encoder used before fitting its standardizer");
    }
    for (auto& x : column) x = standardizer_->apply(x);
  }
  const std::size_t n = column.size();
  Tensor c = Tensor::from({n, 1}, std::move(column));
  Tensor proj = matmul(c, primary_);
  switch (family_) {
    case EncoderFamily::linear:
      return add_row(proj, secondary_);
    case EncoderFamily::sinusoidal_pair: {
      const double s = std::sqrt(1.0 / static_cast<double>(dim_));
      return interleave_cols(scale(cos_elem(proj), s), scale(sin_elem(proj), s));
    }
    case EncoderFamily::sinusoidal_cos:
    case EncoderFamily::sinusoidal_scale:
    case EncoderFamily::positional_sinusoidal:
      return cos_elem(add_row(proj, secondary_));
  }
  throw ContractError("unreachable encoder family");
}

std::vector<double> TimeEncoder::encode_value(double input) const {
  const double in[1] = {input};
  return encode(in).to_vector();
}

void TimeEncoder::register_into(ParameterList& params, const std::string& prefix) const {
  const bool lin = family_ == EncoderFamily::linear;
  params.add(prefix + (lin ? ".weight" : ".frequency"), ParamGroup::time_encoder, primary_);
  if (secondary_.defined()) params.add(prefix + (lin ? ".bias" : ".phase"), ParamGroup::time_encoder, secondary_);
}

std::size_t TimeEncoder::parameter_count() const {
  return primary_.numel() + (secondary_.defined() ? secondary_.numel() : 0);
}

namespace {

void require_family(const TimeEncoder& enc, std::initializer_list<EncoderFamily> allowed, const char* op) {
  for (auto f : allowed)
    if (enc.family() == f) return;
  throw ContractError(std::string(op) + " called on a " + std::string(to_string(enc.family())) + " encoder");
}

}  // namespace

std::vector<double> linear_encode(const TimeEncoder& enc, double dt) {
  require_family(enc, {EncoderFamily::linear}, "linear_encode");
  return enc.encode_value(dt);
}

std::vector<double> sinusoidal_encode(const TimeEncoder& enc, double dt) {
  require_family(enc, {EncoderFamily::sinusoidal_cos, EncoderFamily::sinusoidal_scale}, "sinusoidal_encode");
  return enc.encode_value(dt);
}

std::vector<double> sinusoidal_pair_encode(const TimeEncoder& enc, double dt) {
  require_family(enc, {EncoderFamily::sinusoidal_pair}, "sinusoidal_pair_encode");
  return enc.encode_value(dt);
}

std::vector<double> positional_encode(const TimeEncoder& enc, std::size_t rank) {
  require_family(enc, {EncoderFamily::positional_sinusoidal}, "positional_encode");
  return enc.encode_value(static_cast<double>(rank));
}

float cosine_encoding_float32(float omega, float phi, float dt) {
  const float arg = omega * dt + phi;
  return std::cos(arg);
}

}  // namespace tempora
