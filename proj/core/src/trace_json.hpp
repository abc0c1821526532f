#pragma once

#include "json.hpp"

#include "ckc/simulator.hpp"

namespace ckc::detail {

// null for unreachable
nlohmann::json distance_json(double d);
nlohmann::json trace_step_json(const Resources& res, const TraceStep& s);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ckc::detail
