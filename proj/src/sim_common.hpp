#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "flowguard/trace_model.hpp"

namespace flowguard::sim {

/// Seeded log-normal latency of one operation, at least 1 ms.
Millis draw_duration(std::string_view operation, std::mt19937_64& rng);

/// Resource calls are leaves; handler, init, overhead and internal
/// functions are not.
bool is_api_call(const FunctionEvent& e);

/// Index of the last event nested inside events[index] (by interval).
std::size_t subtree_last(const FunctionFlow& flow, std::size_t index);

/// Inserts `proto` as the next sibling of events[after], lasting `duration`
/// ms. Later events move right and enclosing events stretch.
void insert_after(FunctionFlow& flow, std::size_t after, FunctionEvent proto, Millis duration,
                  Millis gap);

/// Event ids become "<flow id>-eNNN" in list order.
void renumber(FunctionFlow& flow);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace flowguard::sim
