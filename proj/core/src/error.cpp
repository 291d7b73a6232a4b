// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/error.hpp"

namespace rqsep {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kFormat: return "FormatError";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kNumeric: return "NumericError";
  }
  return "Error";
}

}  // namespace rqsep
