#pragma once

#include <stdexcept>
#include <string>

namespace haystack {

/// Malformed or inconsistent configuration (unknown names, bad flags, schema violations).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or inconsistent corpus data: pool articles, translations, templates.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The needle articles alone do not fit in the requested word budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A backend request failed after all retries.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The backend rejected our credentials; the run cannot continue.
class AuthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A persisted artifact is unreadable or inconsistent.
class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace haystack
