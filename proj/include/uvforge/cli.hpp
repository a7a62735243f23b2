#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uvforge/fields.hpp"
#include "uvforge/mesh.hpp"

namespace uvforge::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kInput = 2, kSegmentation = 3, kTraining = 4, kEvaluation = 5 };

/// Every tunable a command reads. Defaults < --config file < explicit flags.
struct RunConfig {
  std::string pipeline = "base";  // base | visibility | semantic | semantic_visibility
  int k = 0;
  int iterations = 3000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double lambda_vis = 0.004;
  double tau_scale = 0.1;
  double pad = 0.05;
  int ao_samples = 256;
  int shdf_rays = 60;
  int threads = 0;
  int hidden = 512;
  int feature = 64;
  int log_every = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Partial objects allowed; unknown keys are rejected.
void from_json(const nlohmann::json& j, RunConfig& c);

/// FNV-1a over vertex coordinates and face indices.
[[nodiscard]] std::uint64_t mesh_hash(const Mesh& mesh);

/// AO of `mesh`, read from or stored to a sidecar next to `anchor` keyed by
/// the mesh and sampling config. Cache I/O failures only skip the cache.
[[nodiscard]] std::vector<double> cached_ao(const Mesh& mesh, const FieldConfig& config,
                                            const std::filesystem::path& anchor, std::ostream* log = nullptr);

/// Per-face ShDF with the same caching scheme.
[[nodiscard]] std::vector<double> cached_shdf(const Mesh& mesh, const FieldConfig& config,
                                              const std::filesystem::path& anchor, std::ostream* log = nullptr);

/// Per-face labels from a labels.json file ({"labels": [...]}) or a bare array.
[[nodiscard]] std::vector<int> read_labels(const std::filesystem::path& path);

/// Runs one command line (without the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uvforge::cli
