#pragma once

#include <stdexcept>
#include <string>

namespace glab {

// Error categories map onto CLI exit codes: usage/contract problems exit 2,
// everything else (numeric, IO, training, protocol) exits 1.
enum class ErrorKind {
  Shape,
  Contract,
  Numeric,
  Training,
  Ingest,
  Load,
  Capability,
  Protocol,
  Scoring,
  Construction,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  bool is_usage() const noexcept {
    return kind_ == ErrorKind::Contract || kind_ == ErrorKind::Shape;
  }

 private:
  ErrorKind kind_;
};

#define GLAB_DEFINE_ERROR(Name, Kind)                           \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

GLAB_DEFINE_ERROR(ShapeError, ErrorKind::Shape)
GLAB_DEFINE_ERROR(ContractError, ErrorKind::Contract)
GLAB_DEFINE_ERROR(NumericError, ErrorKind::Numeric)
GLAB_DEFINE_ERROR(TrainingError, ErrorKind::Training)
GLAB_DEFINE_ERROR(IngestError, ErrorKind::Ingest)
GLAB_DEFINE_ERROR(LoadError, ErrorKind::Load)
GLAB_DEFINE_ERROR(CapabilityError, ErrorKind::Capability)
GLAB_DEFINE_ERROR(ProtocolError, ErrorKind::Protocol)
GLAB_DEFINE_ERROR(ScoringError, ErrorKind::Scoring)
GLAB_DEFINE_ERROR(ConstructionError, ErrorKind::Construction)

#undef GLAB_DEFINE_ERROR

}  // namespace glab
