#pragma once

#include "soh/types.hpp"

namespace soh {

/// Fits per-column (mean, std) on `table` and returns the standardized copy
/// with the parameters attached. The label column, when present, is
/// standardized the same way and its parameters tracked alongside.
/// Standard deviation uses the sample (n-1) convention.
/// Throws ValidationError on a zero-variance column, naming the feature.
FeatureTable standardize_fit(const FeatureTable& table);

/// Applies previously fitted parameters to a table with the same columns.
FeatureTable standardize_apply(const FeatureTable& table, const Standardization& params);

/// Inverts a standardized table back to physical units.
FeatureTable standardize_invert(const FeatureTable& table, const Standardization& params);

}  // namespace soh
