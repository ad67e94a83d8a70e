#include "cyberally/error.hpp"

namespace cyberally {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::PriorityOutOfRange: return "PriorityOutOfRange";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::MalformedLexicon: return "MalformedLexicon";
        case ErrorCode::OutOfOrderTimestamp: return "OutOfOrderTimestamp";
        case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorCode::TooFewExamples: return "TooFewExamples";
        case ErrorCode::SingleClassData: return "SingleClassData";
        case ErrorCode::MalformedGraphFile: return "MalformedGraphFile";
        case ErrorCode::DanglingEdge: return "DanglingEdge";
        case ErrorCode::DuplicateNodeId: return "DuplicateNodeId";
        case ErrorCode::SealedLayer: return "SealedLayer";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::UnknownAlertEvent: return "UnknownAlertEvent";
        case ErrorCode::BundleMismatch: return "BundleMismatch";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::ProviderRefusal: return "ProviderRefusal";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::BackendRejected: return "BackendRejected";
        case ErrorCode::UnknownTicket: return "UnknownTicket";
        case ErrorCode::UnknownAlert: return "UnknownAlert";
        case ErrorCode::AlreadyDecided: return "AlreadyDecided";
        case ErrorCode::RatingOutOfRange: return "RatingOutOfRange";
        case ErrorCode::UnsatisfiableSpec: return "UnsatisfiableSpec";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace cyberally
