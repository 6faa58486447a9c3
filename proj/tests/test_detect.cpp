#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "voxproto/detect.hpp"
#include "voxproto/geometry.hpp"
#include "voxproto/quantize.hpp"
#include "voxproto/rng.hpp"
#include "voxproto/synth.hpp"

using namespace voxproto;

namespace {

GridSpec cube_spec(const Vec3& lo, const Vec3& hi, int res) {
  GridSpec spec;
  spec.aabb_min = lo;
  spec.aabb_max = hi;
  spec.resolution = {res, res, res};
  return spec;
}

}  // namespace

TEST_CASE("iou_3d basic values") {
  const Box3D unit{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  CHECK(iou_3d(unit, unit) == 1.0);
  const Box3D far_box{Vec3(5, 5, 5), Vec3(6, 6, 6)};
  CHECK(iou_3d(unit, far_box) == 0.0);
  const Box3D shifted{Vec3(0.5, 0, 0), Vec3(1.5, 1, 1)};
  CHECK(iou_3d(unit, shifted) == doctest::Approx(1.0 / 3.0));
  CHECK(iou_3d(shifted, unit) == doctest::Approx(iou_3d(unit, shifted)));
}

TEST_CASE("nms_3d keeps the strongest of overlapping boxes") {
  std::vector<Proposal> props;
  props.push_back({{Vec3(0, 0, 0), Vec3(1, 1, 1)}, 0.8});
  props.push_back({{Vec3(0, 0, 0), Vec3(1, 1, 1)}, 0.9});
  const auto kept = nms_3d(props, 0.3);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].confidence == 0.9);

  const auto single = nms_3d(std::span<const Proposal>(props.data(), 1), 0.3);
  CHECK(single.size() == 1);
}

TEST_CASE("nms_3d equals the brute-force greedy reference on random sets") {
  Rng rng(100);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Proposal> props;
    const int n = rng.uniform_int(1, 20);
    for (int i = 0; i < n; ++i) {
      Box3D box;
      box.min_corner = Vec3(rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3));
      box.max_corner = box.min_corner +
                       Vec3(rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5),
                            rng.uniform(0.3, 1.5));
      props.push_back({box, rng.uniform(0, 1)});
    }
    const double thresh = rng.uniform(0.1, 0.6);

    // reference: explicit sort by (conf desc, min corner, index) + greedy
    std::vector<std::size_t> order(props.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (props[a].confidence != props[b].confidence)
        return props[a].confidence > props[b].confidence;
      for (int axis = 0; axis < 3; ++axis) {
        if (props[a].box.min_corner[axis] != props[b].box.min_corner[axis])
          return props[a].box.min_corner[axis] < props[b].box.min_corner[axis];
      }
      return a < b;
    });
    std::vector<Proposal> want;
    for (std::size_t idx : order) {
      bool keep = true;
      for (const Proposal& k : want)
        if (iou_3d(props[idx].box, k.box) > thresh) keep = false;
      if (keep) want.push_back(props[idx]);
    }

    const auto got = nms_3d(props, thresh);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].confidence == want[i].confidence);
      CHECK(got[i].box.min_corner == want[i].box.min_corner);
    }
    for (std::size_t i = 0; i < got.size(); ++i)
      for (std::size_t j = i + 1; j < got.size(); ++j)
        CHECK(iou_3d(got[i].box, got[j].box) <= thresh);
  }
}

TEST_CASE("center_surround_sim on a constant grid is 1") {
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 16);
  VoxelGrid grid(spec, 2);
  for (float& v : grid.data) v = 0.4f;
  const Box3D box{Vec3(0.4, 0.4, 0.4), Vec3(0.6, 0.6, 0.6)};
  CHECK(center_surround_sim(grid, box) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("center_surround_sim of an isolated object is ~0") {
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 16);
  VoxelGrid grid(spec, 2);
  for (int z = 6; z < 10; ++z)
    for (int y = 6; y < 10; ++y)
      for (int x = 6; x < 10; ++x)
        for (int c = 0; c < 2; ++c) grid.at(x, y, z, c) = 0.9f;
  // box one voxel wider than the blob, so the neighbor crops stay in the
  // zero background and the zero-norm convention applies
  const Box3D box{Vec3(0.3125, 0.3125, 0.3125), Vec3(0.6875, 0.6875, 0.6875)};
  CHECK(center_surround_sim(grid, box) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("center_surround_sim matches the direct 6-crop oracle") {
  Rng rng(7);
  const GridSpec spec = cube_spec(Vec3(-0.2, 0.0, -0.1), Vec3(0.8, 1.0, 0.9), 12);
  VoxelGrid grid(spec, 3);
  for (float& v : grid.data) v = static_cast<float>(rng.uniform(-1, 1));
  for (int trial = 0; trial < 10; ++trial) {
    Box3D box;
    box.min_corner = Vec3(rng.uniform(0.0, 0.4), rng.uniform(0.2, 0.6),
                          rng.uniform(0.1, 0.5));
    box.max_corner = box.min_corner + Vec3(rng.uniform(0.1, 0.3),
                                           rng.uniform(0.1, 0.3),
                                           rng.uniform(0.1, 0.3));
    const ObjectTensor center = crop_resize(grid, box);
    double want = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      for (int sign = -1; sign <= 1; sign += 2) {
        Vec3 shift = Vec3::Zero();
        shift[axis] = sign * box.extent()[axis];
        Box3D nb{box.min_corner + shift, box.max_corner + shift};
        nb.min_corner = nb.min_corner.cwiseMax(spec.aabb_min);
        nb.max_corner = nb.max_corner.cwiseMin(spec.aabb_max);
        if (!((nb.max_corner.array() > nb.min_corner.array()).all())) continue;
        want += cosine_similarity(center, crop_resize(grid, nb));
      }
    }
    want /= 6.0;
    CHECK(center_surround_sim(grid, box) == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("triangulate_boxes: empty 2D box list gives empty output") {
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 8);
  CHECK(triangulate_boxes({}, {}, spec, 2).empty());
}

TEST_CASE("triangulate_boxes recovers synthetic objects") {
  SynthConfig config;
  config.image_size = 96;
  config.num_views = 8;
  config.grid.resolution = {48, 48, 48};
  config.num_objects_min = config.num_objects_max = 1;
  const SynthScene scene = generate_scene(51, config);

  Rng rng(1);
  std::vector<Box2D> boxes2d;
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    const auto vb = gt_boxes_2d(scene.gt, scene.views[v], static_cast<int>(v), 0.0, rng);
    boxes2d.insert(boxes2d.end(), vb.begin(), vb.end());
  }
  const auto boxes = triangulate_boxes(scene.views, boxes2d, config.grid, 6, 8);
  REQUIRE(boxes.size() == 1);
  CHECK(iou_3d(boxes[0], scene.gt.objects[0].box) >= 0.5);
  CHECK((boxes[0].min_corner.array() >= config.grid.aabb_min.array() - 1e-9).all());
  CHECK((boxes[0].max_corner.array() <= config.grid.aabb_max.array() + 1e-9).all());
}

TEST_CASE("triangulate_boxes separates two distant objects") {
  SynthConfig config;
  config.image_size = 96;
  config.num_views = 8;
  config.grid.resolution = {48, 48, 48};
  config.num_objects_min = config.num_objects_max = 2;
  SynthScene scene;
  std::uint64_t seed = 60;
  for (;; ++seed) {
    scene = generate_scene(seed, config);
    const Vec3 d = scene.gt.objects[0].box.center() - scene.gt.objects[1].box.center();
    const double diag = scene.gt.objects[0].box.extent().norm();
    if (d.norm() > 1.5 * diag) break;
  }
  Rng rng(1);
  std::vector<Box2D> boxes2d;
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    const auto vb = gt_boxes_2d(scene.gt, scene.views[v], static_cast<int>(v), 0.0, rng);
    boxes2d.insert(boxes2d.end(), vb.begin(), vb.end());
  }
  const auto boxes = triangulate_boxes(scene.views, boxes2d, config.grid, 6, 8);
  REQUIRE(boxes.size() == 2);
  for (const ObjectGT& gt : scene.gt.objects) {
    int matches = 0;
    for (const Box3D& box : boxes)
      if (iou_3d(box, gt.box) >= 0.3) ++matches;
    CHECK(matches == 1);
  }
}

namespace {

// A dictionary of two orthogonal synthetic prototypes for labeling tests.
PrototypeDictionary two_prototype_dict() {
  PrototypeDictionary dict;
  dict.k_max = 50;
  Prototype a;
  a.id = 0;
  a.tensor = ObjectTensor(4);
  for (int z = 4; z < 12; ++z)
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x) a.tensor.at(x, y, z, 0) = 1.0f;
  Prototype b;
  b.id = 1;
  b.tensor = ObjectTensor(4);
  for (int z = 4; z < 12; ++z)
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x) b.tensor.at(x, y, z, 1) = 1.0f;
  dict.prototypes.push_back(std::move(a));
  dict.prototypes.push_back(std::move(b));
  return dict;
}

}  // namespace

TEST_CASE("label_proposals: prototype-exact crop is VALID with sim 1") {
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 16);
  VoxelGrid grid(spec, 4);
  const Box3D box{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  PrototypeDictionary dict = two_prototype_dict();
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 4; ++c)
          grid.at(x, y, z, c) = dict.prototypes[0].tensor.at(x, y, z, c);

  const RotationSet rots = RotationSet::with_step(90.0);
  std::vector<Proposal> props{{box, 1.0}};
  const auto labeled = label_proposals(props, grid, dict, rots, 0.8, 0.65);
  REQUIRE(labeled.size() == 1);
  CHECK(labeled[0].label == ProposalLabel::Valid);
  CHECK(labeled[0].prototype_sim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(labeled[0].matched_prototype == 0);
}

TEST_CASE("label_proposals: uniform background is INVALID via surround") {
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 16);
  VoxelGrid grid(spec, 4);
  for (float& v : grid.data) v = 0.3f;
  const Box3D box{Vec3(0.4, 0.4, 0.4), Vec3(0.6, 0.6, 0.6)};
  const RotationSet rots = RotationSet::with_step(90.0);
  std::vector<Proposal> props{{box, 1.0}};
  const auto labeled = label_proposals(props, grid, two_prototype_dict(), rots, 0.8, 0.65);
  REQUIRE(labeled.size() == 1);
  CHECK(labeled[0].label == ProposalLabel::Invalid);
  CHECK(labeled[0].surround_sim > 0.65);
}

TEST_CASE("label_proposals partitions and is monotone in valid_thresh") {
  Rng rng(3);
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 16);
  VoxelGrid grid(spec, 4);
  for (float& v : grid.data) v = static_cast<float>(rng.uniform(0, 1));
  const RotationSet rots = RotationSet::with_step(90.0);
  std::vector<Proposal> props;
  for (int i = 0; i < 8; ++i) {
    Box3D box;
    box.min_corner = Vec3(rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.uniform(0, 0.5));
    box.max_corner = box.min_corner + Vec3(rng.uniform(0.2, 0.4),
                                           rng.uniform(0.2, 0.4),
                                           rng.uniform(0.2, 0.4));
    props.push_back({box, 0.5});
  }
  const PrototypeDictionary dict = two_prototype_dict();
  const auto strict = label_proposals(props, grid, dict, rots, 0.8, 0.65);
  const auto loose = label_proposals(props, grid, dict, rots, 0.3, 0.65);
  REQUIRE(strict.size() == props.size());
  for (std::size_t i = 0; i < strict.size(); ++i) {
    const auto label = strict[i].label;
    CHECK((label == ProposalLabel::Valid || label == ProposalLabel::Invalid ||
           label == ProposalLabel::Unlabeled));
    if (label == ProposalLabel::Valid)
      CHECK(loose[i].label == ProposalLabel::Valid);
  }

  PrototypeDictionary empty;
  CHECK_THROWS_AS(label_proposals(props, grid, empty, rots, 0.8, 0.65),
                  EmptyDictionary);
}

TEST_CASE("refit_detector deduplicates matched prototypes and medians box size") {
  PrototypeDictionary dict = two_prototype_dict();
  dict.prototypes.push_back({4, dict.prototypes[0].tensor, 0});

  std::vector<LabeledProposal> labeled(4);
  labeled[0].label = ProposalLabel::Valid;
  labeled[0].matched_prototype = 1;
  labeled[0].proposal.box = {Vec3(0, 0, 0), Vec3(0.2, 0.3, 0.4)};
  labeled[1].label = ProposalLabel::Valid;
  labeled[1].matched_prototype = 1;
  labeled[1].proposal.box = {Vec3(0, 0, 0), Vec3(0.3, 0.4, 0.5)};
  labeled[2].label = ProposalLabel::Valid;
  labeled[2].matched_prototype = 4;
  labeled[2].proposal.box = {Vec3(0, 0, 0), Vec3(0.4, 0.5, 0.6)};
  labeled[3].label = ProposalLabel::Invalid;
  labeled[3].matched_prototype = 0;
  labeled[3].proposal.box = {Vec3(0, 0, 0), Vec3(9, 9, 9)};

  DetectorConfig config;
  config.confidence_threshold = 0.9;
  config.stride_voxels = 4;
  const Detector det = refit_detector(labeled, dict, config);
  CHECK(det.template_prototype_ids == std::vector<int>{1, 4});
  CHECK(det.confidence_threshold == 0.9);
  CHECK(det.box_size.x() == doctest::Approx(0.3));
  CHECK(det.box_size.y() == doctest::Approx(0.4));
  CHECK(det.box_size.z() == doctest::Approx(0.5));
  for (const ObjectTensor& t : det.templates)
    CHECK(std::sqrt(dot_product(t.data, t.data)) == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<LabeledProposal> no_valid(1);
  no_valid[0].label = ProposalLabel::Invalid;
  CHECK_THROWS_AS(refit_detector(no_valid, dict, config), NoValidProposals);
}

TEST_CASE("detect finds an exact template instance with confidence ~1") {
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 32);
  VoxelGrid grid(spec, 4);
  Rng rng(9);
  for (int z = 8; z < 16; ++z)
    for (int y = 8; y < 16; ++y)
      for (int x = 8; x < 16; ++x) {
        grid.at(x, y, z, 0) = static_cast<float>(rng.uniform(0.5, 1.0));
        grid.at(x, y, z, 3) = 1.0f;
      }
  const Box3D window{Vec3(0.125, 0.125, 0.125), Vec3(0.625, 0.625, 0.625)};

  Detector det;
  det.confidence_threshold = 0.9;
  det.stride_voxels = 4;
  det.box_size = window.extent();
  det.templates.push_back(normalized_template(crop_resize(grid, window)));
  det.template_prototype_ids.push_back(0);

  const RotationSet rots = RotationSet::with_step(90.0);
  const auto proposals = detect_objects(grid, det, rots, 0.3);
  REQUIRE(!proposals.empty());
  bool found = false;
  for (const Proposal& p : proposals) {
    if ((p.box.min_corner - window.min_corner).norm() < 1e-9) {
      found = true;
      CHECK(p.confidence >= 0.999);
    }
  }
  CHECK(found);
  for (std::size_t i = 0; i < proposals.size(); ++i)
    for (std::size_t j = i + 1; j < proposals.size(); ++j)
      CHECK(iou_3d(proposals[i].box, proposals[j].box) <= 0.3);

  VoxelGrid empty(spec, 4);
  CHECK(detect_objects(empty, det, rots, 0.3).empty());
}

TEST_CASE("detect score map equals the brute-force window oracle") {
  Rng rng(17);
  const GridSpec spec = cube_spec(Vec3(0, 0, 0), Vec3(1, 1, 1), 16);
  VoxelGrid grid(spec, 2);
  for (int z = 2; z < 9; ++z)
    for (int y = 3; y < 10; ++y)
      for (int x = 5; x < 12; ++x)
        for (int c = 0; c < 2; ++c)
          grid.at(x, y, z, c) = static_cast<float>(rng.uniform(-1, 1));

  Detector det;
  det.confidence_threshold = 0.5;
  det.stride_voxels = 2;
  det.box_size = Vec3(0.5, 0.5, 0.5);
  for (int t = 0; t < 2; ++t) {
    ObjectTensor tmpl(2);
    for (float& v : tmpl.data) v = static_cast<float>(rng.uniform(-1, 1));
    det.templates.push_back(normalized_template(tmpl));
    det.template_prototype_ids.push_back(t);
  }

  const RotationSet rots = RotationSet::with_step(90.0);
  const auto windows = detect_score_map(grid, det, rots);
  REQUIRE(!windows.empty());
  for (const auto& [box, score] : windows) {
    const ObjectTensor crop = crop_resize(grid, box);
    double want = 0.0;
    for (const ObjectTensor& tmpl : det.templates)
      for (double angle : rots.angles)
        want = std::max(want, cosine_similarity(tmpl, rotate_tensor(crop, angle)));
    CHECK(score == doctest::Approx(want).epsilon(1e-6));
  }
}
