#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advmesh/deform.hpp"
#include "advmesh/detector.hpp"
#include "advmesh/losses.hpp"
#include "advmesh/scene.hpp"

namespace advmesh {

struct OptimizerConfig {
    enum class Type { kGd, kAdam };
    Type type = Type::kGd;
    double epsilon = 0.005;  // normalized-gradient step size (gd)
    double gamma = 0.005;    // adam learning rate
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AttackConfig {
    enum class Mode { kWhite, kBlack };
    Mode mode = Mode::kWhite;
    OptimizerConfig optimizer;
    int epochs = 5;
    SphereSpec sphere{2, {0.7, 0.7, 0.5}};
    Vec3 offset_limit{0.1, 0.1, 0.0};
    LossSpec loss = LossSpec::preset("c_logit");
    std::optional<LossSpec> target_loss;  // black-box acceptance criterion; defaults to `loss`
    uint64_t seed = 1;
    int log_every = 1;
    int checkpoint_every = 0;
    // invoked after accepted steps when checkpoint_every > 0
    std::function<void(int, const DeformationState&)> checkpoint_hook;

    void validate() const;
};

struct StepRecord {
    int step = 0;
    int scene_id = 0;
    double loss = 0.0;        // driving-detector total loss before the step
    double grad_norm = 0.0;   // full parameter gradient norm
    bool accepted = false;    // white-box: every non-skipped step; black-box: passed line 10
    bool skipped = false;     // zero misdetection chain, no step taken
    double target_before = 0.0, target_after = 0.0;  // black-box acceptance pair
};

struct AttackTrace {
    std::vector<StepRecord> steps;
    std::string to_jsonl() const;
};

// Everything discrete about one scene evaluation, pinned so the loss can be
// re-evaluated as a smooth function of the deformation parameters.
struct FrozenSceneContext {
    RenderResult render;
    std::vector<MeshInstance> instances;
    std::vector<RelevantPair> pairs;
    LossSpec spec;
};

struct SceneEval {
    double total = 0.0;
    double misdetection = 0.0;
    double laplacian = 0.0;
    std::vector<Vec3> grad_dv;  // d total / d displacement, per vertex
    Vec3 grad_dg;               // d total / d global offset
    bool chain_zero = true;     // misdetection gradient chain vanished
    FrozenSceneContext frozen;
};

// Renders the current mesh onto every GT rooftop, runs the detector, builds
// the loss and backpropagates to the deformation parameters (straight-through
// clamps, frozen hit assignment within the evaluation).
SceneEval evaluate_scene(const DeformationState& state, DetectorContract& detector,
                         const SceneSample& scene, const RayPattern& pattern,
                         const LossSpec& spec);

// Total loss of the frozen smooth chain at new parameters. The detector must
// still hold the forward cache produced by evaluate_scene.
double evaluate_scene_frozen(const DeformationState& state, DetectorContract& detector,
                             const SceneSample& scene, const RayPattern& pattern,
                             const FrozenSceneContext& ctx);

// Misdetection loss alone (no Laplacian term), fresh evaluation; the
// black-box acceptance criterion.
double target_misdetection(const DeformationState& state, DetectorContract& detector,
                           const SceneSample& scene, const RayPattern& pattern,
                           const LossSpec& spec);

struct AttackResult {
    DeformationState state;
    AttackTrace trace;
};

AttackResult white_box_attack(DetectorContract& target, const std::vector<SceneSample>& scenes,
                              const RayPattern& pattern, const AttackConfig& config);

// Candidate steps come from the surrogate gradient and are kept only when
// the target's misdetection loss on the same scene decreases; rejected steps
// leave the optimizer moments untouched.
AttackResult black_box_attack(DetectorContract& surrogate, DetectorContract& target,
                              const std::vector<SceneSample>& scenes, const RayPattern& pattern,
                              const AttackConfig& config);

}  // namespace advmesh
