#pragma once

#include "json.hpp"

#include "cped/evaluation.hpp"

namespace cped::detail {

nlohmann::json summary_json(const EvaluationSummary& e);

}  // namespace cped::detail
