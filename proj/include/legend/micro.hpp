#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace legend {

// Toy-scale qualitative studies of LoRA position, depth, and rank
// distribution on the synthetic task. Each returns a CSV string; every row
// carries a "qualitative" tag.
std::string micro_position_study(std::uint64_t seed);
std::string micro_depth_study(std::uint64_t seed);
std::string micro_rankdist_study(std::uint64_t seed);

struct MicroResult {
    std::string variant;
    double final_loss = 0.0;
    double latency = 0.0;  // simulated per-batch seconds
};

std::vector<MicroResult> run_position_study(std::uint64_t seed);
std::vector<MicroResult> run_depth_study(std::uint64_t seed);
std::vector<MicroResult> run_rankdist_study(std::uint64_t seed);

// The four fixed-budget rank layouts compared by the rankdist study.
std::vector<std::vector<int>> rankdist_layouts(std::uint64_t seed);

}  // namespace legend
