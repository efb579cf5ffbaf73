// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

#include "ensner/cli.hpp"

int main(int argc, char** argv) { return ensner::cli::run(argc, argv); }
