#pragma once

// Reference interpolators evaluated on the same splits as the model.

#include <span>
#include <string>
#include <vector>

#include "anchorgk/datamodel.hpp"
#include "anchorgk/diff.hpp"

namespace anchorgk {

enum class Baseline { Ok, Idw, Mean };

std::string baseline_name(Baseline b);
Baseline parse_baseline(const std::string& name);

/// One T x F matrix per target, in the units of `observed`.
std::vector<diff::Matrix> predict_baseline(Baseline b, const Dataset& observed, std::span<const GeoPoint> targets);

/// Splits `ds` into the rows whose ids are in `held_out` and the rest.
struct Holdout {
  Dataset observed;
  Dataset held_out;
};
Holdout split_holdout(const Dataset& ds, const std::set<LocationId>& held_out);

}  // namespace anchorgk
