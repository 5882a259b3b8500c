#pragma once

#include <stdexcept>
#include <string>

namespace closure {

// Base for every exception thrown by the library. The stage tag is what the
// CLI prints in front of the message ("gen", "extract", ...).
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& message)
        : std::runtime_error(message), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& m) : Error("geometry", m) {}
};

class RenderError : public Error {
public:
    explicit RenderError(const std::string& m) : Error("render", m) {}
};

class ManifestError : public Error {
public:
    explicit ManifestError(const std::string& m) : Error("manifest", m) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& m) : Error("extract", m) {}
};

class MeasureError : public Error {
public:
    explicit MeasureError(const std::string& m) : Error("measure", m) {}
};

class StatsError : public Error {
public:
    explicit StatsError(const std::string& m) : Error("analyze", m) {}
};

class ReportError : public Error {
public:
    explicit ReportError(const std::string& m) : Error("report", m) {}
};

}  // namespace closure
