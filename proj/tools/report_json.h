// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic JSON text for reports: keys in insertion order, two-space
// indent, reals with 17 significant digits, non-finite reals as null.

#pragma once

#include <string>

#include "json.hpp"

namespace osp::cli {

using Json = nlohmann::ordered_json;

/// Reals always carry a '.' or exponent so they read back as reals.
std::string format_real(double v);

std::string dump_json(const Json& j);

}  // namespace osp::cli
