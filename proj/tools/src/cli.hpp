// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace sibtree::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitPartial = 3,
  kExitIo = 4,
};

/// Entry point of the `sibtree` executable.
int run(int argc, char** argv);

}  // namespace sibtree::cli
