#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uvforge/losses.hpp"
#include "uvforge/mesh.hpp"
#include "uvforge/nn.hpp"

namespace uvforge::training {

using losses::LossBreakdown;

struct TrainConfig {
  int iterations = 3000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  nn::NetShape shape{};
  losses::LossWeights weights{};
  losses::SeamConfig seam{};
  int log_every = 1;
  /// Stem for the last-good checkpoint written when training diverges.
  /// Empty: a file in the system temp directory.
  std::filesystem::path checkpoint;
  double pad = 0.05;
  int threads = 0;  // semantic parts trained concurrently

  void validate() const;
};

struct UVResult {
  std::vector<Vec2> uv;            // raw network output per vertex
  std::vector<double> seam_soft;   // soft seam score per vertex (visibility runs)
  std::vector<LossBreakdown> loss_trace;  // one entry per step
  nn::ParamNetF params;
  std::vector<std::string> warnings;
};

/// Raised when a loss or parameter goes non-finite. The parameters of the
/// last finite step are saved to checkpoint_stem() before throwing.
class DivergenceError : public TrainingError {
 public:
  DivergenceError(const std::string& what, std::filesystem::path stem, int step)
      : TrainingError(what), stem_(std::move(stem)), step_(step) {}
  [[nodiscard]] const std::filesystem::path& checkpoint_stem() const noexcept { return stem_; }
  [[nodiscard]] int step() const noexcept { return step_; }

 private:
  std::filesystem::path stem_;
  int step_;
};

/// Called after every step with the 1-based step number.
using StepCallback = std::function<void(int step, const LossBreakdown&)>;

/// T Adam steps on the base objective over both cycles. `mesh` must be
/// normalized.
[[nodiscard]] UVResult train_base(const Mesh& mesh, const TrainConfig& config, const StepCallback& on_step = {});

/// As train_base, optimizing base + lambda_vis * AO seam loss. `ao` is the
/// per-vertex exposure field.
[[nodiscard]] UVResult train_visibility(const Mesh& mesh, std::span<const double> ao, const TrainConfig& config,
                                        const StepCallback& on_step = {});

struct AtlasLayout {
  int parts = 0;
  int grid = 0;  // G = ceil(sqrt(K))
  double pad = 0;
  double scale = 0;  // (1 - 2 pad) / G
  std::vector<int> row, col;

  [[nodiscard]] static AtlasLayout make(int parts, double pad);
  [[nodiscard]] Vec2 translation(int part) const;  // ((c + pad)/G, (r + pad)/G)
  [[nodiscard]] Vec2 apply(int part, const Vec2& u) const;
  /// Cell rectangle [c/G, (c+1)/G] x [r/G, (r+1)/G] as (lo, hi).
  [[nodiscard]] std::pair<Vec2, Vec2> cell(int part) const;
};

/// Uniform-scale min-max normalization into [0,1]^2 (aspect preserved,
/// lower-left corner at the origin).
[[nodiscard]] std::vector<Vec2> normalize_island(std::span<const Vec2> uv);

struct Atlas {
  AtlasLayout layout;
  std::vector<std::vector<Vec2>> islands;  // packed UVs per part (submesh vertex order)
};

/// Places island k in grid cell k (row-major). Islands must lie in [0,1]^2.
/// Throws InputError for pad outside [0, 0.5).
[[nodiscard]] Atlas pack_atlas(const std::vector<std::vector<Vec2>>& islands, double pad);

/// Relabels parts with fewer than `min_vertices` vertices into the adjacent
/// part sharing the most edges, until none remain (or none can merge).
[[nodiscard]] Labeling merge_tiny_parts(const Mesh& mesh, const Labeling& labeling, std::size_t min_vertices = 10);

struct SemanticResult {
  Labeling labeling;  // after merging tiny parts, compacted
  std::vector<SubmeshMap> parts;
  std::vector<UVResult> results;
  Atlas atlas;
  std::vector<Vec2> vertex_uv;  // per parent vertex, from the lowest part containing it
  std::vector<std::array<Vec2, 3>> corner_uv;  // per parent face corner
  std::vector<double> seam_soft;  // per parent vertex, max over parts (visibility only)
  std::vector<std::string> warnings;
};

/// Seed for part k: mix_seed(global, k).
[[nodiscard]] std::uint64_t part_seed(std::uint64_t seed, int part);

/// Trains one fresh network per part on its normalized submesh and packs
/// the islands. With `ao`, each part uses train_visibility on the global AO
/// field restricted to the part.
[[nodiscard]] SemanticResult train_semantic(const Mesh& mesh, const Labeling& labeling, const TrainConfig& config,
                                            std::optional<std::span<const double>> ao = std::nullopt,
                                            const std::vector<int>& order = {});

/// Writes one JSON object per logged step:
/// {step, wrap, repel, cycle_p, cycle_n, ddl, tdl, ao, total}.
void write_loss_trace(const std::filesystem::path& path, const std::vector<LossBreakdown>& trace, int log_every);

}  // namespace uvforge::training
