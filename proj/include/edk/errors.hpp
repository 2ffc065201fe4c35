#ifndef EDK_ERRORS_HPP
#define EDK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace edk {

// Error taxonomy maps onto CLI exit codes:
//   ConfigError -> 2, DataError -> 3, TrainError -> 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failures during training or evaluation (NaN loss, divergence).
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;
constexpr int kExitTrainError = 4;

}  // namespace edk

#endif  // EDK_ERRORS_HPP
