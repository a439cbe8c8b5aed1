#include "nrf/error.hpp"

namespace nrf {

ConfigError::ConfigError(std::string key, const std::string& what)
    : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

}  // namespace nrf
