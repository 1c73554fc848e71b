#pragma once

#include <doctest.h>

#include <string>

#include "supmae/error.hpp"

// Runs `expr` and checks it throws supmae::Error of category `cat`; returns the message.
#define EXPECT_ERROR(expr, cat)                                          \
  [&]() -> std::string {                                                 \
    try {                                                                \
      (void)(expr);                                                      \
    } catch (const supmae::Error& e_) {                                  \
      CHECK_MESSAGE(e_.category() == (cat), "got category " << supmae::category_name(e_.category())); \
      return e_.what();                                                  \
    }                                                                    \
    FAIL_CHECK("expected an error from " #expr);                         \
    return {};                                                           \
  }()
