#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "multiqa/config.hpp"

namespace multiqa::testing {

/// Expected behavior of the scripted end-to-end fixture: a 12-passage
/// corpus, one intersection question with 3 gold answers, and a stub
/// backend scripted so reading yields 6 candidates (3 true, 3 false) and
/// each verification configuration retains a distinct answer set.
struct FixtureExpectations {
    std::string question_id;
    std::vector<std::string> candidates;               // all 6, any order
    std::vector<std::string> retained_full;            // k_extra=1, both checks
    std::vector<std::string> retained_no_extra;        // k_extra=0
    std::vector<std::string> retained_skip_factual;    // categorical only
    std::vector<std::string> retained_skip_categorical;  // factual only
    std::vector<std::string> retained_self_reflection;
};

const FixtureExpectations& fixture_expectations();

/// Writes docs.jsonl, gold.jsonl, stub.json, and config.json under `dir`
/// and returns the loaded run config (output_dir defaults to dir/"out").
RunConfig build_fixture(const std::filesystem::path& dir);

}  // namespace multiqa::testing
