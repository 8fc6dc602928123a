#ifndef TCMGAN_ERRORS_HPP
#define TCMGAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tcmgan {

// Error hierarchy. ConfigError and its relatives map to CLI exit code 2,
// everything else to exit code 1.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct EmptyDataset : Error {
    explicit EmptyDataset(const std::string& msg) : Error(msg) {}
};

struct MissingModality : Error {
    explicit MissingModality(const std::string& modality)
        : Error("missing modality: " + modality), modality_name(modality) {}
    std::string modality_name;
};

struct CoregistrationError : Error {
    explicit CoregistrationError(const std::string& msg) : Error(msg) {}
};

struct DataLeakError : Error {
    explicit DataLeakError(const std::string& msg) : Error(msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

struct VersionError : Error {
    explicit VersionError(const std::string& msg) : Error(msg) {}
};

}  // namespace tcmgan

#endif
