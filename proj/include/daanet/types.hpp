#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace daanet {

using Scalar = double;
using Index = Eigen::Index;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Additive-mask stand-in for -inf. Large enough that exp() underflows to
/// exact zero after row-max subtraction for any realistic logit.
inline constexpr Scalar kMaskedLogit = -1e9;

inline bool is_masked_logit(Scalar m) { return m <= kMaskedLogit * 0.5; }

// Error taxonomy; the CLI maps these to exit codes (usage 1, data 2, numeric 3).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace daanet
