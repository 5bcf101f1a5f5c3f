// Copyright (c) 2026 The pcsc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iostream>

#include "pcsc/real.hpp"

PCSC_BEGIN_NAMESPACE

/// Entry point of the `pcsc` tool. Returns 0 on success, 1 on a usage error
/// and 2 on a data or configuration error.
int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

PCSC_END_NAMESPACE
