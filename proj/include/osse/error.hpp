#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace osse {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind { invalid_argument, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) {
  throw Error(ErrorKind::invalid_argument, what);
}

[[noreturn]] inline void fail_data(const std::string& what) {
  throw Error(ErrorKind::data, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
  throw Error(ErrorKind::numerical, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(what);
}

/// Non-fatal warnings and named tallies collected while an operation runs.
struct Diagnostics {
  std::vector<std::string> warnings;
  std::map<std::string, long> counters;

  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
  void count(const std::string& key, long n = 1) { counters[key] += n; }
  long counter(const std::string& key) const {
    auto it = counters.find(key);
    return it == counters.end() ? 0 : it->second;
  }
};

}  // namespace osse
