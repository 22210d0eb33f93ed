#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace pamkit::cli {

// Key order is preserved everywhere so identical runs serialize to
// identical bytes.
using json = nlohmann::ordered_json;

// Validates a raw run configuration against the schema (unknown keys are
// rejected at every level) and fills in defaults, so the echoed config is
// self-describing. Throws std::invalid_argument with a "config: ..."
// message on any violation.
json normalize_config(const json& raw);

// Executes the experiment of a normalized config and returns the result
// envelope: tool, version, build_id, experiment, config echo, results,
// timing. Module errors propagate (invalid_argument, NumericalError,
// HeavyTailError).
json run_experiment(const json& cfg);

// CSV plot files for the array-valued results of an envelope, as
// (name, text) pairs; the caller decides file paths. Arrays that are
// empty produce header-only text.
std::vector<std::pair<std::string, std::string>> emit_plotdata(const json& envelope);

} // namespace pamkit::cli
