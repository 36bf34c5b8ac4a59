#pragma once

// One place for the run-directory file names so every stage and the
// transfer tooling agree on them.

namespace armove::layout {

inline constexpr const char* kConfig = "config.txt";
inline constexpr const char* kCorpus = "corpus.json";
inline constexpr const char* kRegistry = "registry.json";
inline constexpr const char* kWeights = "weights.json";
inline constexpr const char* kGroups = "groups.json";
inline constexpr const char* kOptimization = "optimization.json";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kReport = "report.txt";
inline constexpr const char* kTranscripts = "transcripts.jsonl";
inline constexpr const char* kWarnings = "warnings.txt";

}  // namespace armove::layout
