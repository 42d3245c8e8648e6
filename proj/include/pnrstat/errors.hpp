// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace pnrstat {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Caller broke a structural precondition (dimension mismatch, bad shape).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// File could not be read, written, or parsed.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_domain(bool ok, std::string const& what) {
    if (!ok) throw DomainError(what);
}

inline void require_contract(bool ok, std::string const& what) {
    if (!ok) throw ContractError(what);
}

}  // namespace detail
}  // namespace pnrstat
