#pragma once

#include <stdexcept>
#include <string>

namespace har {

/// Base class for every error raised by the library. `kind()` is stable and
/// used by the CLI to choose an exit status.
class Error : public std::runtime_error {
public:
    enum class Kind {
        Dimension,
        Index,
        Parameter,
        Contract,
        Data,
        Format,
        Config,
        Protocol,
        Io,
    };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

#define HAR_DEFINE_ERROR(Name, K) \
    class Name : public Error {   \
    public:                       \
        explicit Name(const std::string& what) : Error(Kind::K, what) {} \
    };

HAR_DEFINE_ERROR(DimensionError, Dimension)
HAR_DEFINE_ERROR(IndexError, Index)
HAR_DEFINE_ERROR(ParameterError, Parameter)
HAR_DEFINE_ERROR(ContractError, Contract)
HAR_DEFINE_ERROR(DataError, Data)
HAR_DEFINE_ERROR(FormatError, Format)
HAR_DEFINE_ERROR(ConfigError, Config)
HAR_DEFINE_ERROR(ProtocolError, Protocol)
HAR_DEFINE_ERROR(IoError, Io)

#undef HAR_DEFINE_ERROR

}  // namespace har
