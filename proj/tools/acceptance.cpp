// Prints PASS/FAIL per criterion; exit status 0 only when all pass.
#include "utrr/acceptance.hpp"

#include <fmt/format.h>

#include <cstring>
#include <filesystem>
#include <iostream>

#ifndef UTRR_OBSERVATIONS_BINARY
#define UTRR_OBSERVATIONS_BINARY ""
#endif

int main(int argc, char** argv) {
    utrr::AcceptanceOptions options;
    options.observations_binary = UTRR_OBSERVATIONS_BINARY;
    options.scratch_dir = (std::filesystem::temp_directory_path() / "utrr-acceptance").string();
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--quick") == 0) options.quick = true;
        else options.only.push_back(std::atoi(argv[i]));
    }
    const auto results = utrr::run_acceptance(options, std::cout);
    std::filesystem::remove_all(options.scratch_dir);
    bool all = true;
    std::cout << "\n";
    for (const auto& r : results) {
        std::cout << fmt::format("{} criterion {}: {}\n     {}\n", r.pass ? "PASS" : "FAIL", r.id, r.title, r.detail);
        all = all && r.pass;
    }
    std::cout << (all ? "ALL PASS\n" : "SOME CRITERIA FAILED\n");
    return all ? 0 : 1;
}
