#pragma once

#include <stdexcept>
#include <string>

namespace tenderisk {

// Error taxonomy used across the pipeline. The CLI maps these to exit codes.

struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataIntegrityError : std::runtime_error {
    explicit DataIntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace tenderisk
