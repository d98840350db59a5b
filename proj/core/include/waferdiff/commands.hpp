#pragma once

// Subcommand implementations shared by the CLI binary and the tests. Each
// cmd_* throws on failure; run_command maps exceptions to process exit codes
// (0 ok, 1 usage/config, 2 numeric, 3 I/O) and prints the message to stderr.

#include "waferdiff/config.hpp"

#include <string>

namespace wd {

void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_score(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_explain(const RunConfig& cfg);

int run_command(const std::string& command, const RunConfig& cfg);

}  // namespace wd
