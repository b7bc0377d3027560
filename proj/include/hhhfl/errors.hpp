#pragma once

#include <stdexcept>
#include <string>

namespace hhhfl {

// Base class for every error this library throws on purpose.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or layout mismatch between tensors/layers.
class shape_error : public error {
public:
    explicit shape_error(const std::string& msg) : error(msg) {}
};

// Out-of-range index (e.g. a class label beyond the logit count).
class index_error : public error {
public:
    explicit index_error(const std::string& msg) : error(msg) {}
};

// Malformed input data at the record level; carries the source line number
// when known (0 = unknown).
class parse_error : public error {
public:
    parse_error(const std::string& msg, std::size_t line_no = 0)
        : error(line_no ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
    std::size_t line;
};

// Invalid configuration or violated precondition on a setting.
class config_error : public error {
public:
    explicit config_error(const std::string& msg) : error(msg) {}
};

// Dataset-level problem (unusable event, empty channel, no data for a device).
class data_error : public error {
public:
    explicit data_error(const std::string& msg) : error(msg) {}
};

// Violation of the federation message contract.
class protocol_error : public error {
public:
    explicit protocol_error(const std::string& msg) : error(msg) {}
};

// Corrupted or inconsistent serialized state (checkpoints, caches, manifests).
class serialization_error : public error {
public:
    explicit serialization_error(const std::string& msg) : error(msg) {}
};

} // namespace hhhfl
