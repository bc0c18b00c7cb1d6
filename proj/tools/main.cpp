// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

int main(int argc, char** argv) { return osp::cli::run_main(argc, argv); }
