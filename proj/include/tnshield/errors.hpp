#pragma once

#include <stdexcept>
#include <string>

namespace tnshield {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- knowledge parsing / binding ---
struct SyntaxError : Error {
    int line = 0;
    int column = 0;
    SyntaxError(const std::string& msg, int line_, int column_)
        : Error("syntax error at " + std::to_string(line_) + ":" + std::to_string(column_) +
                ": " + msg),
          line(line_),
          column(column_) {}
};
struct UnknownTokenError : SyntaxError {
    UnknownTokenError(const std::string& msg, int line_, int column_)
        : SyntaxError("unknown token: " + msg, line_, column_) {}
};
struct DuplicateDirectiveError : Error {
    using Error::Error;
};
struct EmptyKnowledgeError : Error {
    using Error::Error;
};
struct DuplicateClassError : Error {
    using Error::Error;
};
struct ArityError : Error {
    using Error::Error;
};
struct UnboundPredicateError : Error {
    using Error::Error;
};
struct MissingAssignmentError : Error {
    using Error::Error;
};

// --- numeric evaluation ---
struct DimensionMismatchError : Error {
    using Error::Error;
};
struct EmptyBatchError : Error {
    using Error::Error;
};
struct EmptySetError : Error {
    using Error::Error;
};

// --- model / training ---
struct BadArchitectureError : Error {
    using Error::Error;
};
struct TraceMismatchError : Error {
    using Error::Error;
};
struct BadPercentError : Error {
    using Error::Error;
};

// --- defense / attack / harness ---
struct NoMainClassesError : Error {
    using Error::Error;
};
struct InvalidPartitionError : Error {
    using Error::Error;
};
struct MisalignedError : Error {
    using Error::Error;
};
struct BadConfigError : Error {
    using Error::Error;
};
struct NotSingleLabelError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace tnshield
