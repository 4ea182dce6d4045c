#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace saeb {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A (region, quarter) cell is missing or duplicated in the panel.
class GridIncomplete : public Error {
 public:
  using Error::Error;
};

/// Count identities (active = unemployed + employed, ...) fail on a row.
class InconsistentCounts : public Error {
 public:
  InconsistentCounts(std::size_t row, const std::string& what)
      : Error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// A value lies outside its admissible domain (negative count, bad id, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Region `from` lists `to` as a neighbour but not the other way round.
class AsymmetryError : public Error {
 public:
  AsymmetryError(int from, int to)
      : Error("asymmetric adjacency: " + std::to_string(from) + " lists " +
              std::to_string(to) + " but not vice versa"),
        from_(from),
        to_(to) {}
  int from() const { return from_; }
  int to() const { return to_; }

 private:
  int from_;
  int to_;
};

class DisconnectedGraph : public Error {
 public:
  explicit DisconnectedGraph(std::vector<std::size_t> sizes);
  const std::vector<std::size_t>& component_sizes() const { return sizes_; }

 private:
  std::vector<std::size_t> sizes_;
};

/// Model specification is inconsistent with itself or with the data.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Inverse link evaluated outside its domain (negative binomial with eta >= 0).
class LinkDomainError : public Error {
 public:
  using Error::Error;
};

class NonFiniteStart : public Error {
 public:
  using Error::Error;
};

class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value; `key()` names the offending setting.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace saeb
