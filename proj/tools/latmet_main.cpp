// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/experiment.hpp"

int main(int argc, char** argv) { return latmet::cli::run_cli(argc, argv); }
