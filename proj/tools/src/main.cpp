// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) { return sibtree::cli::run(argc, argv); }
