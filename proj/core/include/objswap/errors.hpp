#pragma once

#include <stdexcept>
#include <string>

namespace objswap {

// Base for all library errors. `kind()` is a stable machine-readable tag
// the CLI maps into its JSON error envelope.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// Bad input value; names the offending field.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& msg)
        : Error("validation", field + ": " + msg), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class EmptyMaskError : public Error {
public:
    explicit EmptyMaskError(int frame_index = -1)
        : Error("empty_mask",
                frame_index < 0 ? std::string("mask has no set pixels")
                                : "mask has no set pixels at frame " + std::to_string(frame_index)),
          frame_index_(frame_index) {}
    int frame_index() const { return frame_index_; }

private:
    int frame_index_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& msg) : Error("checkpoint", msg) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error("training", msg) {}
};

}  // namespace objswap
