#pragma once

#include <stdexcept>
#include <string>

namespace mjls {

enum class ErrorCode {
    DuplicateModeVector,
    LocalModeOutOfRange,
    GeneratorRowSumNonzero,
    NegativeOffDiagonal,
    IndexOutOfRange,
    NonBinaryEntry,
    MissingSelfMode,
    AtlasMismatch,
    DimensionMismatch,
    NotPositiveDefinite,
    BadDistribution,
    ReducibleChain,
    ZeroDimensionDegenerate,
    MissingInitialState,
    NonpositiveScalar,
    SingularY,
    NotSymmetric,
    RankOutOfRange,
    RankDeficientMap,
    BracketInfeasible,
    SynthesisInfeasible,
    PostCheckFailed,
    NotARefinement,
    LiftedInfeasible,
    Divergence,
    BadTimeStep,
    MissingSignals,
    ModelResultMismatch,
    ParseError,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::DuplicateModeVector: return "DuplicateModeVector";
        case ErrorCode::LocalModeOutOfRange: return "LocalModeOutOfRange";
        case ErrorCode::GeneratorRowSumNonzero: return "GeneratorRowSumNonzero";
        case ErrorCode::NegativeOffDiagonal: return "NegativeOffDiagonal";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::NonBinaryEntry: return "NonBinaryEntry";
        case ErrorCode::MissingSelfMode: return "MissingSelfMode";
        case ErrorCode::AtlasMismatch: return "AtlasMismatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::BadDistribution: return "BadDistribution";
        case ErrorCode::ReducibleChain: return "ReducibleChain";
        case ErrorCode::ZeroDimensionDegenerate: return "ZeroDimensionDegenerate";
        case ErrorCode::MissingInitialState: return "MissingInitialState";
        case ErrorCode::NonpositiveScalar: return "NonpositiveScalar";
        case ErrorCode::SingularY: return "SingularY";
        case ErrorCode::NotSymmetric: return "NotSymmetric";
        case ErrorCode::RankOutOfRange: return "RankOutOfRange";
        case ErrorCode::RankDeficientMap: return "RankDeficientMap";
        case ErrorCode::BracketInfeasible: return "BracketInfeasible";
        case ErrorCode::SynthesisInfeasible: return "SynthesisInfeasible";
        case ErrorCode::PostCheckFailed: return "PostCheckFailed";
        case ErrorCode::NotARefinement: return "NotARefinement";
        case ErrorCode::LiftedInfeasible: return "LiftedInfeasible";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::BadTimeStep: return "BadTimeStep";
        case ErrorCode::MissingSignals: return "MissingSignals";
        case ErrorCode::ModelResultMismatch: return "ModelResultMismatch";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

} // namespace mjls
