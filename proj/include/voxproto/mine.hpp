#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voxproto/rng.hpp"
#include "voxproto/types.hpp"
#include "voxproto/voxel.hpp"

namespace voxproto {

// A 2x2x2 sub-block of an object tensor, addressed by its min corner.
struct Patch {
  int object_index = -1;
  std::array<int, 3> corner = {0, 0, 0};
  std::vector<float> data;  // 2*2*2*c, layout (((z*2+y)*2+x)*c+ch)
};

enum class Polarity { Positive, Negative };

struct Correspondence {
  Patch query;
  Patch target;
  double rotation_deg = 0.0;
  double verify_score = 0.0;
  Polarity polarity = Polarity::Positive;
};

// Per-voxel linear feature map, the trainable stand-in for encoder
// finetuning. Applies weights * x + bias independently at every voxel.
struct FeatureTransform {
  int c_out = 0;
  int c_in = 0;
  std::vector<float> weights;  // c_out * c_in, row-major
  std::vector<float> bias;     // c_out

  static FeatureTransform identity(int channels);
  bool is_identity() const;

  ObjectTensor apply(const ObjectTensor& t) const;
  VoxelGrid apply(const VoxelGrid& g) const;
  std::vector<float> apply_patch(std::span<const float> patch) const;
};

struct PoolPair {
  std::vector<ObjectTensor> query_pool;
  std::vector<ObjectTensor> target_pool;
  // Index of each pooled tensor in the original detection list, for
  // ground-truth lookups by evaluation code.
  std::vector<int> query_source;
  std::vector<int> target_source;
};

// Random disjoint partition of the detected tensors into two pools of at
// most pool_size each.
PoolPair build_pools(std::span<const ObjectTensor> detections, int pool_size,
                     Rng& rng);

// The 2x2x2 sub-block at the given min corner, flattened voxel-major.
std::vector<float> extract_patch_data(const ObjectTensor& t,
                                      const std::array<int, 3>& corner);

struct RankEntry {
  int pool_index = -1;
  double rotation_deg = 0.0;
  double score = 0.0;
};

// Object-level pre-ranking: best rotation-aware cosine of each pool entry
// against the query, top_n kept (ties toward the lower pool index).
std::vector<RankEntry> coarse_rank(const ObjectTensor& query,
                                   std::span<const ObjectTensor> pool,
                                   const RotationSet& rots, int top_n = 30);

// Spatial-consistency check: the 8 surround patches sit at offsets
// (+-2, +-2, +-2) from each patch corner; the target tensor is rotated
// first; the score sums the raw inner products of matched surround pairs.
// Surrounds falling outside the tensor contribute 0.
double verify_match(const ObjectTensor& query, const std::array<int, 3>& query_corner,
                    const ObjectTensor& target, const std::array<int, 3>& target_corner,
                    double rotation_deg);

struct MiningConfig {
  int rounds = 8;
  int top_n = 30;
  int top_retrievals = 200;
  int negatives_per_positive = 1;
};

std::vector<Correspondence> mine_correspondences(const PoolPair& pools,
                                                 const RotationSet& rots,
                                                 const MiningConfig& config,
                                                 Rng& rng);

struct ContrastiveConfig {
  double margin_pos = 0.5;
  double margin_neg = 0.3;
  double learning_rate = 1e-3;
  int epochs = 30;
};

// Hinge loss over transformed patch cosines: positives are pulled above
// margin_pos, negatives pushed below margin_neg.
double contrastive_loss(const FeatureTransform& transform,
                        std::span<const Correspondence> correspondences,
                        const ContrastiveConfig& config);

// Analytic full-batch gradient of contrastive_loss.
void contrastive_gradients(const FeatureTransform& transform,
                           std::span<const Correspondence> correspondences,
                           const ContrastiveConfig& config,
                           std::vector<double>& grad_weights,
                           std::vector<double>& grad_bias);

// Full-batch gradient descent from the given transform. Throws NoPositives /
// NoNegatives when either side of the training signal is missing.
FeatureTransform contrastive_fit(const FeatureTransform& init,
                                 std::span<const Correspondence> correspondences,
                                 const ContrastiveConfig& config);

}  // namespace voxproto
