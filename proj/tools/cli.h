// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// The osp command line. Every subcommand builds a report, checks the
// invariants it embeds, and maps the outcome onto the exit status.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "report_json.h"

namespace osp::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name. Reports go to `out` (or --out),
/// diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_main(int argc, char** argv);

/// The document printed by `report-all`.
Json report_all(std::uint64_t seed);

}  // namespace osp::cli
