#include "bsde/errors.hpp"

#include <utility>

namespace bsde {

ConfigError::ConfigError(std::string field, const std::string& message)
    : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

NumericalError::NumericalError(std::string module, std::ptrdiff_t step, const std::string& message)
    : Error(module + (step >= 0 ? " (step " + std::to_string(step) + ")" : std::string{}) + ": " +
            message),
      module_(std::move(module)),
      step_(step) {}

DegeneracyError::DegeneracyError(const std::string& message)
    : NumericalError("scenario-engine", -1, message) {}

}  // namespace bsde
