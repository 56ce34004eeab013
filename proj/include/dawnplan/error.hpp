// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dawnplan {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input (bad JSON, wrong types, unknown fields).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that breaks a graph invariant. `node()` names the
// offending node id when one exists.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& msg, std::string node)
      : Error(msg), node_(std::move(node)) {}
  const std::string& node() const { return node_; }

 private:
  std::string node_;
};

// Rejected precondition (too few nodes for the requested parts, l < 2, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// No partition/memopt combination fits the device capacity.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& msg, int stage)
      : Error(msg), stage_(stage) {}
  // 1-based stage index of the most oversubscribed stage, 0 if unknown.
  int stage() const { return stage_; }

 private:
  int stage_;
};

// Exhaustive search guard tripped.
class InstanceTooLargeError : public Error {
 public:
  using Error::Error;
};

}  // namespace dawnplan
