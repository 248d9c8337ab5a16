#pragma once

#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

namespace utrr {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;
    nlohmann::json metrics = nlohmann::json::object();
};

struct AcceptanceOptions {
    std::string observations_binary;  // gtest binary with the per-observation tests
    std::string scratch_dir = "utrr-acceptance-scratch";
    bool quick = false;  // fewer seeds and victims; tolerances unchanged
    std::vector<int> only;  // criterion ids to run; empty runs all
};

// Criteria 1-8 with fixed tolerances. Progress lines go to `progress`.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& progress);

}  // namespace utrr
