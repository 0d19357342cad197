#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gunet {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

/// Operand shapes do not conform for a primitive or a learned transform.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(std::string op, Shape lhs, Shape rhs, const std::string& detail = {})
        : std::invalid_argument(op + ": shape mismatch " + shape_str(lhs) + " vs " + shape_str(rhs) +
                                (detail.empty() ? std::string{} : " (" + detail + ")")),
          op_(std::move(op)), lhs_(std::move(lhs)), rhs_(std::move(rhs)) {}

    const std::string& op() const noexcept { return op_; }
    const Shape& lhs() const noexcept { return lhs_; }
    const Shape& rhs() const noexcept { return rhs_; }

private:
    std::string op_;
    Shape lhs_;
    Shape rhs_;
};

/// Malformed input files, graphs or datasets.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint magic/version/name/shape problems.
class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

/// Non-finite values during training or failed numeric checks.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration values or usage.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace gunet
