#pragma once

#include <stdexcept>
#include <string>

namespace curekit {

/// Precondition violated by an argument (negative thickness, empty grid, ...).
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A document could not be read; `key_path()` names the offending entry.
class parse_error : public std::runtime_error {
public:
    parse_error(std::string key_path, const std::string& what)
        : std::runtime_error(key_path.empty() ? what : key_path + ": " + what),
          key_path_(std::move(key_path)) {}

    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

/// A parsed value violates a type invariant.
class validation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The linear solve or time integration failed.
class solver_error : public std::runtime_error {
public:
    solver_error(double time_s, const std::string& what)
        : std::runtime_error(what), time_s_(time_s) {}

    /// Simulation time at which the failure happened.
    double time_s() const noexcept { return time_s_; }

private:
    double time_s_;
};

/// Binary container payload is truncated or fails its checksum.
class corruption_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary container was written by a newer format version.
class version_error : public std::runtime_error {
public:
    version_error(unsigned found, unsigned supported)
        : std::runtime_error("file format version " + std::to_string(found) +
                             " is newer than supported version " + std::to_string(supported)),
          found_(found), supported_(supported) {}

    unsigned found() const noexcept { return found_; }
    unsigned supported() const noexcept { return supported_; }

private:
    unsigned found_;
    unsigned supported_;
};

}  // namespace curekit
