#ifndef OBJDISC_ERRORS_HPP
#define OBJDISC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace objdisc {

// Bad configuration or invalid parameter combinations. CLI exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unusable input data: parse failures, missing labels, empty scenes. CLI exit code 3.
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint/architecture incompatibility. CLI exit code 4.
struct model_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace objdisc

#endif
