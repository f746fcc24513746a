#pragma once

#include <stdexcept>
#include <string>

namespace bounce {

// Point left the closed domain where an interior quantity was requested.
struct DomainViolation : std::runtime_error {
  explicit DomainViolation(const std::string& what) : std::runtime_error(what) {}
};

// Collar machinery asked outside its validity region (e.g. ambiguous projection).
struct GeometryError : std::runtime_error {
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Penalty evaluated at (numerically) zero distance from the boundary.
struct BoundaryContact : std::runtime_error {
  explicit BoundaryContact(const std::string& what) : std::runtime_error(what) {}
};

struct IntegrationError : std::runtime_error {
  explicit IntegrationError(const std::string& what) : std::runtime_error(what) {}
};

// Tangential impact below the transversality tolerance.
struct GrazingEvent : std::runtime_error {
  explicit GrazingEvent(const std::string& what) : std::runtime_error(what) {}
};

struct SolveError : std::runtime_error {
  explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bounce
