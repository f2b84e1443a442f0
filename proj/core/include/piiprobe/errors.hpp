#pragma once

#include <stdexcept>
#include <string>

namespace piiprobe {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// pii
struct NotAPhone : Error { using Error::Error; };
struct MalformedEmail : Error { using Error::Error; };

// corpus / mining
struct CorpusIoError : Error { using Error::Error; };

// templates
struct MissingField : Error { using Error::Error; };
struct KOutOfRange : Error { using Error::Error; };

// models
struct EmptyCorpus : Error { using Error::Error; };
struct EmptyContinuation : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct ContextOverflow : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

// probing / metrics
struct TooFewRecords : Error { using Error::Error; };
struct TooFewPairs : Error { using Error::Error; };
struct AllZeroDifferences : Error { using Error::Error; };
struct EmptyList : Error { using Error::Error; };
struct EmptyOutcomes : Error { using Error::Error; };
struct SchemaMismatch : Error { using Error::Error; };

// wire protocol
struct TransportError : Error { using Error::Error; };

class ProtocolError : public Error {
public:
    ProtocolError(int status, const std::string& message)
        : Error("protocol error (status " + std::to_string(status) + "): " + message),
          status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

// orchestration
class StepFailed : public Error {
public:
    StepFailed(const std::string& step, const std::string& cause)
        : Error("step '" + step + "' failed: " + cause), step_(step) {}
    const std::string& step() const { return step_; }

private:
    std::string step_;
};

} // namespace piiprobe
