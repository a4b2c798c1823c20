#pragma once

namespace seqmask {

// Single-binary subcommand dispatcher: gen-data, train-explanandum,
// train-explainer, explain, evaluate, report. Returns 0 on success, 2 on
// usage errors, 1 on runtime failures.
int run_cli(int argc, const char* const* argv);

}  // namespace seqmask
