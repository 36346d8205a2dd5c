#pragma once

#include <json.hpp>

#include "mbsde/closedform.hpp"
#include "mbsde/generators.hpp"
#include "mbsde/iterate.hpp"
#include "mbsde/verify.hpp"

namespace mbsde {

using json = nlohmann::json;

/// Non-finite numbers become null.
json number(double x);

json to_json(const MeasureReport& r);
json to_json(const ScenarioInfo& s);
json to_json(const ConstantsReport& c);
json to_json(const ResidualSummary& r);
json to_json(const KazamakiReport& k);
json to_json(const IntegrabilityProbe& p);
json to_json(const TraceRow& row);
/// Final state, stop reason, convergence ratio, boundedness and the measure report.
json to_json(const IterateResult& r);

}  // namespace mbsde
