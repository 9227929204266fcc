#pragma once

#include <optional>
#include <string>
#include <vector>

#include "facepriv/config.hpp"
#include "facepriv/denoise_and_fer.hpp"
#include "facepriv/privacy_validation.hpp"

namespace facepriv {

/// Stage names in dependency order.
const std::vector<std::string>& allStages();

/// Runs one stage; throws DependencyError when an upstream artifact is
/// missing and ParseError for an unknown stage name.
void runStage(const PipelineConfig& cfg, const std::string& stage);

/// Runs an ordered subset of stages.
void runPipeline(const PipelineConfig& cfg,
                 const std::vector<std::string>& stages);

/// Combined privacy + FER report; ferJson may be absent (explicit null).
void emitReport(const std::string& privacyJson,
                const std::optional<std::string>& ferJson,
                const std::string& path);

// Paths of key artifacts relative to cfg.out_dir.
std::string privacyReportPath(const PipelineConfig& cfg);
std::string ferReportPath(const PipelineConfig& cfg);
std::string combinedReportPath(const PipelineConfig& cfg);

}  // namespace facepriv
