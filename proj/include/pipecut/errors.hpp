// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_ERRORS_HPP
#define PIPECUT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pipecut {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (syntax level).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

// Structurally well-formed input that violates a model/mapping invariant.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

class WeightMismatch : public ValidationError {
public:
    explicit WeightMismatch(const std::string& msg) : ValidationError("weight mismatch: " + msg) {}
};

class ShapeError : public ValidationError {
public:
    explicit ShapeError(const std::string& msg) : ValidationError("shape error: " + msg) {}
};

class CycleError : public ValidationError {
public:
    explicit CycleError(const std::string& msg) : ValidationError("cycle: " + msg) {}
};

class UnsupportedOp : public Error {
public:
    explicit UnsupportedOp(const std::string& msg) : Error("unsupported op: " + msg) {}
};

class DuplicateDevice : public ValidationError {
public:
    explicit DuplicateDevice(const std::string& name) : ValidationError("duplicate device: " + name) {}
};

class UnknownLayer : public ValidationError {
public:
    explicit UnknownLayer(const std::string& name) : ValidationError("unknown layer: " + name) {}
};

class UnknownResource : public ValidationError {
public:
    explicit UnknownResource(const std::string& msg) : ValidationError("unknown resource: " + msg) {}
};

class UnassignedLayer : public ValidationError {
public:
    explicit UnassignedLayer(const std::string& name) : ValidationError("unassigned layer: " + name) {}
};

class DuplicateAssignment : public ValidationError {
public:
    explicit DuplicateAssignment(const std::string& name)
        : ValidationError("layer assigned to more than one key: " + name) {}
};

class InconsistentMapping : public ValidationError {
public:
    explicit InconsistentMapping(const std::string& msg) : ValidationError("inconsistent mapping: " + msg) {}
};

class PlanError : public Error {
public:
    explicit PlanError(const std::string& msg) : Error("plan error: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

class MissingProfileEntry : public Error {
public:
    explicit MissingProfileEntry(const std::string& msg) : Error("missing profile entry: " + msg) {}
};

// Runtime mesh failures.
class PeerUnreachable : public Error {
public:
    explicit PeerUnreachable(const std::string& msg) : Error("peer unreachable: " + msg) {}
};

class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& msg) : Error("protocol error: " + msg) {}
};

class TimeoutError : public Error {
public:
    explicit TimeoutError(const std::string& msg) : Error("timeout: " + msg) {}
};

class SpawnError : public Error {
public:
    explicit SpawnError(const std::string& msg) : Error("spawn error: " + msg) {}
};

}  // namespace pipecut

#endif
