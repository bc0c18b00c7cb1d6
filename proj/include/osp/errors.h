// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace osp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CoordinateError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class PatternError : public Error { using Error::Error; };
class ScheduleError : public Error { using Error::Error; };
class ShardingError : public Error { using Error::Error; };
class CollectiveError : public Error { using Error::Error; };
class ProtocolError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class EncodeError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };

}  // namespace osp
