#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cyberally {

enum class ErrorCode {
    MalformedRecord,
    MissingField,
    PriorityOutOfRange,
    DimensionMismatch,
    MalformedLexicon,
    OutOfOrderTimestamp,
    EmptyTrainingSet,
    TooFewExamples,
    SingleClassData,
    MalformedGraphFile,
    DanglingEdge,
    DuplicateNodeId,
    SealedLayer,
    UnknownNode,
    UnknownAlertEvent,
    BundleMismatch,
    ProviderUnavailable,
    ProviderRefusal,
    BackendUnavailable,
    BackendRejected,
    UnknownTicket,
    UnknownAlert,
    AlreadyDecided,
    RatingOutOfRange,
    UnsatisfiableSpec,
    InvalidConfig,
    IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports carries one of the codes above; callers
// that need to branch do so on code(), not on the message text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace cyberally
