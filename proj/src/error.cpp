#include "otcrf/error.hpp"

namespace otcrf {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::DegenerateSignature: return "DegenerateSignature";
    case ErrorCode::RootFindingFailed: return "RootFindingFailed";
    case ErrorCode::NormNotIntegral: return "NormNotIntegral";
    case ErrorCode::NotAUnit: return "NotAUnit";
    case ErrorCode::NotTotallyPositive: return "NotTotallyPositive";
    case ErrorCode::InadmissibleGroup: return "InadmissibleGroup";
    case ErrorCode::NonPositiveMetric: return "NonPositiveMetric";
    case ErrorCode::NotStronglyFlat: return "NotStronglyFlat";
    case ErrorCode::InitialMetricNotPositive: return "InitialMetricNotPositive";
    case ErrorCode::FlowDegenerate: return "FlowDegenerate";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::NonPositiveSeries: return "NonPositiveSeries";
    case ErrorCode::NoCertificate: return "NoCertificate";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnknownSeries: return "UnknownSeries";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace otcrf
