#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advmesh/attack.hpp"
#include "advmesh/bridge.hpp"
#include "advmesh/evalmetrics.hpp"
#include "advmesh/trained_detector.hpp"

namespace advmesh {

inline constexpr const char* kVersion = "advmesh 0.1.0";

struct DatasetConfig {
    enum class Type { kSynthetic, kKitti, kManifest };
    Type type = Type::kSynthetic;
    // synthetic
    SyntheticSceneSpec spec;
    int train_scenes = 20;
    int test_scenes = 50;
    uint64_t seed = 7;
    // kitti
    std::string velodyne_dir, label_dir;
    std::vector<std::string> train_ids, test_ids;
    // manifest
    std::string manifest_path;
};

struct DetectorConfig {
    enum class Type { kTemplate, kTrainedPillar, kBridge };
    Type type = Type::kTemplate;
    TemplateDetectorConfig template_config;
    // trained pillar: load weights when set, otherwise train on extra scenes
    std::string weights_path;
    int train_epochs = 200;
    double train_rate = 1.5;
    int train_scenes = 60;
    uint64_t train_seed = 97;
    PillarTrainOptions train_options;
    BridgeConfig bridge;
};

struct EngineConfig {
    DatasetConfig dataset;
    DetectorConfig detector;             // white-box target / black-box target
    std::optional<DetectorConfig> surrogate;  // black-box only
    AttackConfig attack;
    Hdl64Config pattern{true, -60, 60, 0.2, {0, 0, 1.73}, 120.0};        // mesh rendering
    Hdl64Config scene_pattern{false, -60, 60, 0.3, {0, 0, 1.73}, 120.0}; // synthetic scenes
    double eval_iou_threshold = 0.7;
    ApInterpolation interp = ApInterpolation::kR40;
    std::string out_dir = "out";
    bool write_text_report = true;
    bool write_json_report = true;

    void validate() const;
    static EngineConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

struct Dataset {
    std::vector<SceneSample> train;
    std::vector<SceneSample> test;
    std::string manifest_json;  // non-empty for regenerable synthetic datasets
};

Dataset load_dataset(const EngineConfig& config);

// Builds the configured detector; the trained pillar detector is trained on
// freshly generated labeled scenes unless a weights path is given.
std::unique_ptr<DetectorContract> make_detector(const DetectorConfig& dc,
                                                const EngineConfig& config);

int eval_threads();  // ADVMESH_THREADS caps scene-level parallelism

// Average precision of a detector over scenes, single class at the config
// threshold; optionally with the mesh placed on every GT rooftop.
struct PrecisionPair {
    double bev = 0.0;
    double p3d = 0.0;
};
PrecisionPair dataset_precision(DetectorContract& detector, const std::vector<SceneSample>& scenes,
                                const RayPattern& pattern, const TriangleMesh* mesh,
                                double iou_threshold, ApInterpolation interp);

// p_o (no mesh), p_vanilla (undeformed sphere), p_a (given state) and the
// invisibility metrics, assembled into the standard report.
EvalReport evaluate_state(DetectorContract& detector, const std::vector<SceneSample>& scenes,
                          const RayPattern& pattern, const DeformationState& state,
                          const SphereSpec& vanilla_sphere, double iou_threshold,
                          ApInterpolation interp);

struct AblationCell {
    int sphere_level;
    Vec3 scale;
    std::string loss_preset;
    OptimizerConfig optimizer;
};

struct AblationRow {
    AblationCell cell;
    EvalReport report;
    bool failed = false;
    std::string error;
};

// Cartesian product of the grid lists with shared data and seeds; cell
// failures are recorded and the remaining cells proceed.
std::vector<AblationRow> run_ablation(const EngineConfig& base,
                                      const std::vector<int>& levels,
                                      const std::vector<Vec3>& scales,
                                      const std::vector<double>& rates,
                                      const std::vector<std::string>& loss_presets,
                                      const std::vector<std::string>& optimizers);

// CLI entry points; return process exit codes and write artifacts under
// config.out_dir.
int cmd_attack(const EngineConfig& config);
int cmd_eval(const EngineConfig& config, const std::string& mesh_path);
int cmd_sweep(const EngineConfig& config, const std::string& grid_json_text);
int cmd_render(const EngineConfig& config, int scene_index, const std::string& mesh_path,
               const std::string& out_bin);
int cmd_export(const std::string& state_path, const std::string& obj_path);

}  // namespace advmesh
