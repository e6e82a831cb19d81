// Copyright 2026 The ivotesim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <gtest/gtest.h>

#include "ivotesim/error.hpp"

// Asserts that `stmt` throws ivotesim::Error carrying `errc`.
#define EXPECT_ERRC(stmt, errc)                                                        \
  do {                                                                                 \
    bool caught_ = false;                                                              \
    try {                                                                              \
      stmt;                                                                            \
    } catch (const ::ivotesim::Error& e_) {                                            \
      caught_ = true;                                                                  \
      EXPECT_EQ(::ivotesim::errc_name(e_.code()), ::ivotesim::errc_name(errc)) << e_.what(); \
    }                                                                                  \
    EXPECT_TRUE(caught_) << "expected " << ::ivotesim::errc_name(errc);                \
  } while (0)
