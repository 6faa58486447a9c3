#include "voxproto/mine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxproto/parallel.hpp"

namespace voxproto {

// ---------------------------------------------------------------------------
// FeatureTransform
// ---------------------------------------------------------------------------

FeatureTransform FeatureTransform::identity(int channels) {
  FeatureTransform t;
  t.c_out = channels;
  t.c_in = channels;
  t.weights.assign(static_cast<std::size_t>(channels) * channels, 0.0f);
  t.bias.assign(channels, 0.0f);
  for (int i = 0; i < channels; ++i)
    t.weights[static_cast<std::size_t>(i) * channels + i] = 1.0f;
  return t;
}

bool FeatureTransform::is_identity() const {
  if (c_out != c_in) return false;
  for (int i = 0; i < c_out; ++i) {
    if (bias[i] != 0.0f) return false;
    for (int j = 0; j < c_in; ++j)
      if (weights[static_cast<std::size_t>(i) * c_in + j] != (i == j ? 1.0f : 0.0f))
        return false;
  }
  return true;
}

ObjectTensor FeatureTransform::apply(const ObjectTensor& t) const {
  if (t.channels != c_in)
    throw std::invalid_argument("feature transform: channel mismatch");
  ObjectTensor out(c_out);
  for (int v = 0; v < ObjectTensor::kVoxels; ++v) {
    const float* src = t.data.data() + static_cast<std::size_t>(v) * c_in;
    float* dst = out.data.data() + static_cast<std::size_t>(v) * c_out;
    for (int i = 0; i < c_out; ++i) {
      double acc = bias[i];
      const float* row = weights.data() + static_cast<std::size_t>(i) * c_in;
      for (int j = 0; j < c_in; ++j) acc += static_cast<double>(row[j]) * src[j];
      dst[i] = static_cast<float>(acc);
    }
  }
  return out;
}

VoxelGrid FeatureTransform::apply(const VoxelGrid& g) const {
  if (g.channels != c_in)
    throw std::invalid_argument("feature transform: channel mismatch");
  VoxelGrid out(g.spec, c_out);
  const std::size_t n = g.spec.num_voxels();
  parallel_for(n, [&](std::size_t v) {
    const float* src = g.data.data() + v * c_in;
    float* dst = out.data.data() + v * c_out;
    for (int i = 0; i < c_out; ++i) {
      double acc = bias[i];
      const float* row = weights.data() + static_cast<std::size_t>(i) * c_in;
      for (int j = 0; j < c_in; ++j) acc += static_cast<double>(row[j]) * src[j];
      dst[i] = static_cast<float>(acc);
    }
  });
  return out;
}

std::vector<float> FeatureTransform::apply_patch(std::span<const float> patch) const {
  if (patch.size() % c_in != 0)
    throw std::invalid_argument("feature transform: patch size mismatch");
  const std::size_t voxels = patch.size() / c_in;
  std::vector<float> out(voxels * c_out);
  for (std::size_t v = 0; v < voxels; ++v) {
    for (int i = 0; i < c_out; ++i) {
      double acc = bias[i];
      const float* row = weights.data() + static_cast<std::size_t>(i) * c_in;
      for (int j = 0; j < c_in; ++j)
        acc += static_cast<double>(row[j]) * patch[v * c_in + j];
      out[v * c_out + i] = static_cast<float>(acc);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pools and patches
// ---------------------------------------------------------------------------

PoolPair build_pools(std::span<const ObjectTensor> detections, int pool_size,
                     Rng& rng) {
  std::vector<int> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with the run's stream
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  PoolPair pools;
  const std::size_t half = detections.size() / 2;
  const std::size_t nq = std::min<std::size_t>(half, pool_size);
  const std::size_t nt = std::min<std::size_t>(detections.size() - half, pool_size);
  for (std::size_t i = 0; i < nq; ++i) {
    pools.query_pool.push_back(detections[order[i]]);
    pools.query_source.push_back(order[i]);
  }
  for (std::size_t i = 0; i < nt; ++i) {
    pools.target_pool.push_back(detections[order[half + i]]);
    pools.target_source.push_back(order[half + i]);
  }
  return pools;
}

namespace {

constexpr int kPatch = 2;
constexpr int kLatticeStride = 4;
constexpr int kSurroundOffset = 2;

std::vector<float> extract_patch(const ObjectTensor& t, const std::array<int, 3>& corner) {
  std::vector<float> data(static_cast<std::size_t>(kPatch) * kPatch * kPatch * t.channels);
  std::size_t o = 0;
  for (int dz = 0; dz < kPatch; ++dz)
    for (int dy = 0; dy < kPatch; ++dy)
      for (int dx = 0; dx < kPatch; ++dx)
        for (int c = 0; c < t.channels; ++c)
          data[o++] = t.at(corner[0] + dx, corner[1] + dy, corner[2] + dz, c);
  return data;
}

bool patch_in_bounds(const std::array<int, 3>& corner) {
  for (int a = 0; a < 3; ++a)
    if (corner[a] < 0 || corner[a] + kPatch > ObjectTensor::kDim) return false;
  return true;
}

bool all_zero(std::span<const float> v) {
  for (float x : v)
    if (x != 0.0f) return false;
  return true;
}

// Raw inner product of the 8 surround patches at (+-2, +-2, +-2) from each
// corner; pairs with either side out of bounds contribute 0. The target is
// assumed already rotated.
double verify_rotated(const ObjectTensor& query, const std::array<int, 3>& q_corner,
                      const ObjectTensor& target, const std::array<int, 3>& t_corner) {
  double score = 0.0;
  for (int sz = -1; sz <= 1; sz += 2) {
    for (int sy = -1; sy <= 1; sy += 2) {
      for (int sx = -1; sx <= 1; sx += 2) {
        const std::array<int, 3> qo{q_corner[0] + sx * kSurroundOffset,
                                    q_corner[1] + sy * kSurroundOffset,
                                    q_corner[2] + sz * kSurroundOffset};
        const std::array<int, 3> to{t_corner[0] + sx * kSurroundOffset,
                                    t_corner[1] + sy * kSurroundOffset,
                                    t_corner[2] + sz * kSurroundOffset};
        if (!patch_in_bounds(qo) || !patch_in_bounds(to)) continue;
        const std::vector<float> qp = extract_patch(query, qo);
        const std::vector<float> tp = extract_patch(target, to);
        score += dot_product(qp, tp);
      }
    }
  }
  return score;
}

}  // namespace

std::vector<float> extract_patch_data(const ObjectTensor& t,
                                      const std::array<int, 3>& corner) {
  if (!patch_in_bounds(corner))
    throw std::invalid_argument("extract_patch_data: corner out of bounds");
  return extract_patch(t, corner);
}

std::vector<RankEntry> coarse_rank(const ObjectTensor& query,
                                   std::span<const ObjectTensor> pool,
                                   const RotationSet& rots, int top_n) {
  if (pool.empty()) return {};
  std::vector<RotationPlan> plans;
  for (double angle : rots.angles) plans.push_back(make_rotation_plan(angle));

  std::vector<RankEntry> entries(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    RankEntry e;
    e.pool_index = static_cast<int>(i);
    e.score = -2.0;
    for (std::size_t r = 0; r < plans.size(); ++r) {
      const double sim =
          cosine_similarity(query, apply_rotation(plans[r], pool[i]));
      if (sim > e.score) {
        e.score = sim;
        e.rotation_deg = rots.angles[r];
      }
    }
    entries[i] = e;
  });
  std::stable_sort(entries.begin(), entries.end(),
                   [](const RankEntry& a, const RankEntry& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.pool_index < b.pool_index;
                   });
  if (static_cast<int>(entries.size()) > top_n) entries.resize(top_n);
  return entries;
}

double verify_match(const ObjectTensor& query, const std::array<int, 3>& query_corner,
                    const ObjectTensor& target, const std::array<int, 3>& target_corner,
                    double rotation_deg) {
  const ObjectTensor rotated = rotate_tensor(target, rotation_deg);
  return verify_rotated(query, query_corner, rotated, target_corner);
}

// ---------------------------------------------------------------------------
// Mining
// ---------------------------------------------------------------------------

std::vector<Correspondence> mine_correspondences(const PoolPair& pools,
                                                 const RotationSet& rots,
                                                 const MiningConfig& config,
                                                 Rng& rng) {
  if (pools.query_pool.empty() || pools.target_pool.empty())
    throw std::invalid_argument("mine_correspondences: empty pools");

  // 4x4x4 lattice of patch corners: {0, 4, 8, 12}^3
  std::vector<std::array<int, 3>> lattice;
  for (int z = 0; z < ObjectTensor::kDim; z += kLatticeStride)
    for (int y = 0; y < ObjectTensor::kDim; y += kLatticeStride)
      for (int x = 0; x < ObjectTensor::kDim; x += kLatticeStride)
        lattice.push_back({x, y, z});

  std::vector<Correspondence> out;
  for (int round = 0; round < config.rounds; ++round) {
    const std::size_t qi = rng.uniform_index(pools.query_pool.size());
    const ObjectTensor& query = pools.query_pool[qi];

    // random query patch, re-drawn a few times to land on content
    std::array<int, 3> q_corner = lattice[rng.uniform_index(lattice.size())];
    for (int attempt = 0; attempt < 16; ++attempt) {
      if (!all_zero(extract_patch(query, q_corner))) break;
      q_corner = lattice[rng.uniform_index(lattice.size())];
    }

    const std::vector<RankEntry> ranked =
        coarse_rank(query, pools.target_pool, rots, config.top_n);

    struct Candidate {
      int rank_slot;
      int corner_slot;
      double score;
    };
    std::vector<Candidate> candidates(ranked.size() * lattice.size());
    std::vector<ObjectTensor> rotated_targets(ranked.size());
    parallel_for(ranked.size(), [&](std::size_t r) {
      rotated_targets[r] =
          rotate_tensor(pools.target_pool[ranked[r].pool_index], ranked[r].rotation_deg);
      for (std::size_t c = 0; c < lattice.size(); ++c) {
        Candidate cand;
        cand.rank_slot = static_cast<int>(r);
        cand.corner_slot = static_cast<int>(c);
        cand.score = verify_rotated(query, q_corner, rotated_targets[r], lattice[c]);
        candidates[r * lattice.size() + c] = cand;
      }
    });
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                       if (a.score != b.score) return a.score > b.score;
                       if (a.rank_slot != b.rank_slot) return a.rank_slot < b.rank_slot;
                       return a.corner_slot < b.corner_slot;
                     });
    const std::size_t n_verified =
        std::min<std::size_t>(config.top_retrievals, candidates.size());

    std::size_t positives_this_round = 0;
    for (std::size_t ci = 0; ci < n_verified; ++ci) {
      const Candidate& cand = candidates[ci];
      const RankEntry& entry = ranked[cand.rank_slot];
      const ObjectTensor& rotated = rotated_targets[cand.rank_slot];
      const std::array<int, 3>& t_corner = lattice[cand.corner_slot];
      // surround corners become the positives
      for (int sz = -1; sz <= 1; sz += 2) {
        for (int sy = -1; sy <= 1; sy += 2) {
          for (int sx = -1; sx <= 1; sx += 2) {
            const std::array<int, 3> qo{q_corner[0] + sx * kSurroundOffset,
                                        q_corner[1] + sy * kSurroundOffset,
                                        q_corner[2] + sz * kSurroundOffset};
            const std::array<int, 3> to{t_corner[0] + sx * kSurroundOffset,
                                        t_corner[1] + sy * kSurroundOffset,
                                        t_corner[2] + sz * kSurroundOffset};
            if (!patch_in_bounds(qo) || !patch_in_bounds(to)) continue;
            Correspondence corr;
            corr.query.object_index = pools.query_source.empty()
                                          ? static_cast<int>(qi)
                                          : pools.query_source[qi];
            corr.query.corner = qo;
            corr.query.data = extract_patch(query, qo);
            corr.target.object_index =
                pools.target_source.empty()
                    ? entry.pool_index
                    : pools.target_source[entry.pool_index];
            corr.target.corner = to;
            corr.target.data = extract_patch(rotated, to);
            corr.rotation_deg = entry.rotation_deg;
            corr.verify_score = cand.score;
            corr.polarity = Polarity::Positive;
            out.push_back(std::move(corr));
            ++positives_this_round;
          }
        }
      }
    }

    // uniform negatives across the pools
    const std::size_t n_negatives = positives_this_round * config.negatives_per_positive;
    for (std::size_t k = 0; k < n_negatives; ++k) {
      const std::size_t a = rng.uniform_index(pools.query_pool.size());
      const std::size_t b = rng.uniform_index(pools.target_pool.size());
      const std::array<int, 3> ca = lattice[rng.uniform_index(lattice.size())];
      const std::array<int, 3> cb = lattice[rng.uniform_index(lattice.size())];
      Correspondence corr;
      corr.query.object_index =
          pools.query_source.empty() ? static_cast<int>(a) : pools.query_source[a];
      corr.query.corner = ca;
      corr.query.data = extract_patch(pools.query_pool[a], ca);
      corr.target.object_index =
          pools.target_source.empty() ? static_cast<int>(b) : pools.target_source[b];
      corr.target.corner = cb;
      corr.target.data = extract_patch(pools.target_pool[b], cb);
      corr.rotation_deg = 0.0;
      corr.verify_score = 0.0;
      corr.polarity = Polarity::Negative;
      out.push_back(std::move(corr));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contrastive fitting
// ---------------------------------------------------------------------------

namespace {

struct TransformD {
  int c_out, c_in;
  std::vector<double> weights;
  std::vector<double> bias;
};

TransformD to_double(const FeatureTransform& t) {
  TransformD d;
  d.c_out = t.c_out;
  d.c_in = t.c_in;
  d.weights.assign(t.weights.begin(), t.weights.end());
  d.bias.assign(t.bias.begin(), t.bias.end());
  return d;
}

FeatureTransform to_float(const TransformD& d) {
  FeatureTransform t;
  t.c_out = d.c_out;
  t.c_in = d.c_in;
  t.weights.assign(d.weights.begin(), d.weights.end());
  t.bias.assign(d.bias.begin(), d.bias.end());
  return t;
}

// Loss and gradient of one pair under f(x) = W x + b applied per voxel.
// Positive pairs penalize cos below margin_pos, negatives penalize cos above
// margin_neg. Gradients accumulate into gw / gb when provided.
double pair_term(const TransformD& t, const Correspondence& corr,
                 const ContrastiveConfig& config, std::vector<double>* gw,
                 std::vector<double>* gb) {
  const int c_in = t.c_in, c_out = t.c_out;
  const std::size_t voxels = corr.query.data.size() / c_in;
  const std::size_t dim = voxels * c_out;

  std::vector<double> u(dim), v(dim);
  for (std::size_t vox = 0; vox < voxels; ++vox) {
    for (int i = 0; i < c_out; ++i) {
      double au = t.bias[i], av = t.bias[i];
      const double* row = t.weights.data() + static_cast<std::size_t>(i) * c_in;
      for (int j = 0; j < c_in; ++j) {
        au += row[j] * corr.query.data[vox * c_in + j];
        av += row[j] * corr.target.data[vox * c_in + j];
      }
      u[vox * c_out + i] = au;
      v[vox * c_out + i] = av;
    }
  }

  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  const double norm_u = std::sqrt(nu), norm_v = std::sqrt(nv);
  const double cos_uv =
      (norm_u < 1e-12 || norm_v < 1e-12) ? 0.0 : dot / (norm_u * norm_v);

  const bool positive = corr.polarity == Polarity::Positive;
  const double margin = positive ? config.margin_pos : config.margin_neg;
  const double violation = positive ? margin - cos_uv : cos_uv - margin;
  if (violation <= 0.0) return 0.0;
  if (!gw) return violation;

  // d loss / d cos = -1 for positives, +1 for negatives; zero-norm pairs
  // carry no gradient (cos is pinned at 0 there).
  if (norm_u < 1e-12 || norm_v < 1e-12) return violation;
  const double sign = positive ? -1.0 : 1.0;
  std::vector<double> du(dim), dv(dim);
  const double inv_uv = 1.0 / (norm_u * norm_v);
  for (std::size_t i = 0; i < dim; ++i) {
    du[i] = sign * (v[i] * inv_uv - dot * u[i] / (nu * norm_u * norm_v));
    dv[i] = sign * (u[i] * inv_uv - dot * v[i] / (nv * norm_u * norm_v));
  }
  for (std::size_t vox = 0; vox < voxels; ++vox) {
    for (int i = 0; i < c_out; ++i) {
      const double gu = du[vox * c_out + i];
      const double gv = dv[vox * c_out + i];
      (*gb)[i] += gu + gv;
      double* row = gw->data() + static_cast<std::size_t>(i) * c_in;
      for (int j = 0; j < c_in; ++j) {
        row[j] += gu * corr.query.data[vox * c_in + j] +
                  gv * corr.target.data[vox * c_in + j];
      }
    }
  }
  return violation;
}

double loss_and_grad(const TransformD& t,
                     std::span<const Correspondence> correspondences,
                     const ContrastiveConfig& config, std::vector<double>* gw,
                     std::vector<double>* gb) {
  if (gw) {
    gw->assign(t.weights.size(), 0.0);
    gb->assign(t.bias.size(), 0.0);
  }
  double loss = 0.0;
  for (const Correspondence& corr : correspondences)
    loss += pair_term(t, corr, config, gw, gb);
  return loss;
}

}  // namespace

double contrastive_loss(const FeatureTransform& transform,
                        std::span<const Correspondence> correspondences,
                        const ContrastiveConfig& config) {
  const TransformD t = to_double(transform);
  return loss_and_grad(t, correspondences, config, nullptr, nullptr);
}

void contrastive_gradients(const FeatureTransform& transform,
                           std::span<const Correspondence> correspondences,
                           const ContrastiveConfig& config,
                           std::vector<double>& grad_weights,
                           std::vector<double>& grad_bias) {
  const TransformD t = to_double(transform);
  loss_and_grad(t, correspondences, config, &grad_weights, &grad_bias);
}

FeatureTransform contrastive_fit(const FeatureTransform& init,
                                 std::span<const Correspondence> correspondences,
                                 const ContrastiveConfig& config) {
  bool has_pos = false, has_neg = false;
  for (const Correspondence& corr : correspondences) {
    if (corr.polarity == Polarity::Positive) has_pos = true;
    else has_neg = true;
  }
  if (!has_pos) throw NoPositives("contrastive_fit: no positive correspondences");
  if (!has_neg) throw NoNegatives("contrastive_fit: no negative correspondences");

  TransformD t = to_double(init);
  std::vector<double> gw, gb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    loss_and_grad(t, correspondences, config, &gw, &gb);
    for (std::size_t i = 0; i < t.weights.size(); ++i)
      t.weights[i] -= config.learning_rate * gw[i];
    for (std::size_t i = 0; i < t.bias.size(); ++i)
      t.bias[i] -= config.learning_rate * gb[i];
  }
  return to_float(t);
}

}  // namespace voxproto
