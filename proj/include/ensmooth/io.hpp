#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ensmooth/types.hpp"

namespace ensmooth::io {

inline constexpr int kSchemaVersion = 1;

/// Manifest + payload pair for a base path: "<base>.manifest", "<base>.payload".
struct ArtifactPaths {
  std::filesystem::path manifest;
  std::filesystem::path payload;
};
ArtifactPaths artifact_paths(const std::filesystem::path& base);

/// Writes a manifest (JSON) and a raw little-endian float64 payload. `extra`
/// keys are merged into the manifest; `dims` is stored verbatim.
void write_artifact(const std::filesystem::path& base, const std::string& kind,
                    const nlohmann::json& dims, int iteration,
                    const std::vector<double>& payload,
                    const nlohmann::json& extra = {});

struct Artifact {
  nlohmann::json manifest;
  std::vector<double> payload;
};

/// Reads and verifies an artifact. `expected_count` is the number of doubles
/// implied by the manifest dims; a shorter payload is TruncatedPayload, a
/// longer one DimensionMismatch.
Artifact read_artifact(const std::filesystem::path& base,
                       const std::string& expected_kind);

void save_ensemble(const Ensemble& e, const std::filesystem::path& base);
Ensemble load_ensemble(const std::filesystem::path& base);

void save_field(const ScalarField& f, const std::filesystem::path& base);
ScalarField load_field(const std::filesystem::path& base);

void save_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& base,
                 const nlohmann::json& extra = {});
Eigen::MatrixXd load_matrix(const std::filesystem::path& base,
                            nlohmann::json* manifest = nullptr);

void save_observations(const ObservationSet& obs,
                       const std::filesystem::path& path);
ObservationSet load_observations(const std::filesystem::path& path);

/// Fixed-format number rendering used by every CSV writer (17 significant
/// digits, locale independent) so reruns produce identical bytes.
std::string format_number(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ensmooth::io
