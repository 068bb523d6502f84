#pragma once

#include <gtest/gtest.h>

#include "files.hpp"
#include "ragsvc/error.hpp"

#define EXPECT_RAGSVC_ERROR(stmt, expected_code)                                 \
  do {                                                                           \
    try {                                                                        \
      stmt;                                                                      \
      ADD_FAILURE() << "expected " << ragsvc::to_string(expected_code);          \
    } catch (const ragsvc::Error& e) {                                           \
      EXPECT_EQ(e.code(), expected_code) << ragsvc::to_string(e.code()) << ": " \
                                         << e.what();                           \
    }                                                                            \
  } while (0)
