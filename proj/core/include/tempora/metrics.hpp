#pragma once

#include <span>

namespace tempora {

// Percent in [0, 100]. Ties in score keep input order (stable descending sort).
// Throws ContractError when no label is positive or sizes differ.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Percent in [0, 100]; tied scores count one half. Throws ContractError unless
// both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace tempora
