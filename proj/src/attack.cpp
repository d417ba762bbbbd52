#include "advmesh/attack.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace advmesh {

void AttackConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("attack config: epochs must be >= 1");
    if (optimizer.epsilon < 0.0 || optimizer.gamma < 0.0)
        throw std::invalid_argument("attack config: step sizes must be non-negative");
    sphere.validate();
    if (offset_limit.x < 0 || offset_limit.y < 0 || offset_limit.z < 0)
        throw std::invalid_argument("attack config: offset limit must be non-negative");
    loss.validate();
    if (target_loss) target_loss->validate();
}

std::string AttackTrace::to_jsonl() const {
    std::string out;
    char buf[512];
    for (const auto& s : steps) {
        std::snprintf(buf, sizeof(buf),
                      "{\"step\":%d,\"scene\":%d,\"loss\":%.17g,\"grad_norm\":%.17g,"
                      "\"accepted\":%s,\"skipped\":%s,\"target_before\":%.17g,"
                      "\"target_after\":%.17g}\n",
                      s.step, s.scene_id, s.loss, s.grad_norm, s.accepted ? "true" : "false",
                      s.skipped ? "true" : "false", s.target_before, s.target_after);
        out += buf;
    }
    return out;
}

namespace {

std::vector<MeshInstance> rooftop_instances(const SceneSample& scene) {
    std::vector<MeshInstance> out;
    out.reserve(scene.rooftop_poses.size());
    for (const auto& pose : scene.rooftop_poses) out.push_back({pose, true});
    return out;
}

}  // namespace

SceneEval evaluate_scene(const DeformationState& state, DetectorContract& detector,
                         const SceneSample& scene, const RayPattern& pattern,
                         const LossSpec& spec) {
    SceneEval out;
    out.frozen.spec = spec;
    out.frozen.instances = rooftop_instances(scene);
    TriangleMesh mesh = materialize(state);
    out.frozen.render = render(scene.cloud, mesh, out.frozen.instances, pattern);
    const RenderResult& rr = out.frozen.render;

    std::vector<Detection> dets = detector.forward(rr.cloud);
    out.frozen.pairs = relevance_filter(dets, scene.gt_boxes, spec);
    MisdetectionResult mis = misdetection_loss(dets, scene.gt_boxes, out.frozen.pairs, spec);
    TotalLoss tl = total_loss(mis.value, mesh, spec.lambda);
    out.total = tl.value;
    out.misdetection = mis.value;
    out.laplacian = tl.laplacian;
    out.grad_dv.assign(state.base_vertices.size(), Vec3{});
    out.grad_dg = Vec3{};

    std::vector<Vec3> dcloud = detector.backward(mis.dlogit, mis.dbox);
    if (dcloud.size() != rr.cloud.size())
        throw std::runtime_error("detector backward returned wrong gradient count");

    double chain_sq = 0.0;
    for (size_t hi = 0; hi < rr.hits.size(); ++hi) {
        const Vec3 gp = dcloud[rr.first_hit_index + hi];
        if (gp.x == 0.0 && gp.y == 0.0 && gp.z == 0.0) continue;
        const HitRecord& h = rr.hits[hi];
        const MeshInstance& inst = out.frozen.instances[h.instance_id];
        const auto& face = mesh.faces[h.face_id];
        Vec3 world[3];
        for (int k = 0; k < 3; ++k) {
            Vec3 local = mesh.vertices[face[k]];
            local.z += rr.lifts[h.instance_id];
            world[k] = inst.pose.apply(local);
        }
        const Ray ray = pattern.ray(h.ray_id);
        std::array<std::array<double, 9>, 3> jac;
        try {
            jac = hit_jacobian(ray, world[0], world[1], world[2]);
        } catch (const std::runtime_error&) {
            continue;  // near-degenerate face, drop from the backward pass
        }
        for (int blk = 0; blk < 3; ++blk) {
            Vec3 gw{};
            for (int c = 0; c < 3; ++c)
                for (int r = 0; r < 3; ++r) gw[c] += gp[r] * jac[r][blk * 3 + c];
            const Vec3 gl = inst.pose.rotate_back(gw);
            out.grad_dv[face[blk]] += gl;
            out.grad_dg += gl;
            chain_sq += norm2(gl);
        }
    }
    out.chain_zero = chain_sq == 0.0;
    for (size_t i = 0; i < out.grad_dv.size(); ++i) out.grad_dv[i] += tl.laplacian_gradient[i];
    return out;
}

double evaluate_scene_frozen(const DeformationState& state, DetectorContract& detector,
                             const SceneSample& scene, const RayPattern& pattern,
                             const FrozenSceneContext& ctx) {
    TriangleMesh mesh = materialize(state);
    PointCloud cloud = render_frozen(scene.cloud, mesh, ctx.instances, pattern, ctx.render);
    std::vector<Detection> dets = detector.forward_frozen(cloud);
    MisdetectionResult mis = misdetection_loss(dets, scene.gt_boxes, ctx.pairs, ctx.spec);
    return mis.value + ctx.spec.lambda * laplacian_loss(mesh).value;
}

double target_misdetection(const DeformationState& state, DetectorContract& detector,
                           const SceneSample& scene, const RayPattern& pattern,
                           const LossSpec& spec) {
    TriangleMesh mesh = materialize(state);
    RenderResult rr = render(scene.cloud, mesh, rooftop_instances(scene), pattern);
    std::vector<Detection> dets = detector.forward(rr.cloud);
    auto pairs = relevance_filter(dets, scene.gt_boxes, spec);
    return misdetection_loss(dets, scene.gt_boxes, pairs, spec).value;
}

namespace {

// Flat view of the learnable parameters: displacements then global offset.
struct ParamVector {
    std::vector<double> values;

    static ParamVector from_gradient(const SceneEval& eval) {
        ParamVector p;
        p.values.reserve(eval.grad_dv.size() * 3 + 3);
        for (const auto& g : eval.grad_dv) {
            p.values.push_back(g.x);
            p.values.push_back(g.y);
            p.values.push_back(g.z);
        }
        p.values.push_back(eval.grad_dg.x);
        p.values.push_back(eval.grad_dg.y);
        p.values.push_back(eval.grad_dg.z);
        return p;
    }
    double norm() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s);
    }
};

void apply_delta(DeformationState& state, const std::vector<double>& delta) {
    const size_t n = state.displacements.size();
    for (size_t i = 0; i < n; ++i) {
        state.displacements[i].x += delta[3 * i];
        state.displacements[i].y += delta[3 * i + 1];
        state.displacements[i].z += delta[3 * i + 2];
    }
    state.global_offset.x += delta[3 * n];
    state.global_offset.y += delta[3 * n + 1];
    state.global_offset.z += delta[3 * n + 2];
}

class Optimizer {
 public:
    Optimizer(const OptimizerConfig& config, size_t dim)
        : config_(config), m_(dim, 0.0), v_(dim, 0.0) {}

    // Step from the gradient; for adam the moment update is staged and only
    // kept after commit() (black-box rejections roll it back).
    std::vector<double> propose(const ParamVector& grad) {
        const size_t dim = grad.values.size();
        std::vector<double> delta(dim, 0.0);
        if (config_.type == OptimizerConfig::Type::kGd) {
            const double n = grad.norm();
            if (n > 0.0) {
                const double scale = -config_.epsilon / n;
                for (size_t i = 0; i < dim; ++i) delta[i] = scale * grad.values[i];
            }
            return delta;
        }
        staged_m_ = m_;
        staged_v_ = v_;
        const int t = step_count_ + 1;
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
        for (size_t i = 0; i < dim; ++i) {
            staged_m_[i] = b1 * staged_m_[i] + (1.0 - b1) * grad.values[i];
            staged_v_[i] = b2 * staged_v_[i] + (1.0 - b2) * grad.values[i] * grad.values[i];
            delta[i] = -config_.gamma * (staged_m_[i] / bc1) /
                       (std::sqrt(staged_v_[i] / bc2) + config_.eps);
        }
        return delta;
    }
    void commit() {
        if (config_.type == OptimizerConfig::Type::kAdam) {
            m_ = staged_m_;
            v_ = staged_v_;
            ++step_count_;
        }
    }

 private:
    OptimizerConfig config_;
    std::vector<double> m_, v_, staged_m_, staged_v_;
    int step_count_ = 0;
};

DeformationState initial_state(const AttackConfig& config) {
    TriangleMesh sphere = icosphere(config.sphere);
    DeformationState state =
        DeformationState::from_mesh(sphere, config.sphere.scale, config.offset_limit);
    apply_deformation(state);
    return state;
}

}  // namespace

AttackResult white_box_attack(DetectorContract& target, const std::vector<SceneSample>& scenes,
                              const RayPattern& pattern, const AttackConfig& config) {
    config.validate();
    if (!target.differentiable())
        throw std::invalid_argument("white-box attack requires a differentiable target");
    AttackResult result{initial_state(config), {}};
    Optimizer opt(config.optimizer, result.state.displacements.size() * 3 + 3);
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (size_t si = 0; si < scenes.size(); ++si) {
            SceneEval eval = evaluate_scene(result.state, target, scenes[si], pattern,
                                            config.loss);
            StepRecord rec;
            rec.step = step++;
            rec.scene_id = static_cast<int>(si);
            rec.loss = eval.total;
            if (eval.chain_zero) {
                rec.skipped = true;
                result.trace.steps.push_back(rec);
                continue;
            }
            ParamVector grad = ParamVector::from_gradient(eval);
            rec.grad_norm = grad.norm();
            apply_delta(result.state, opt.propose(grad));
            opt.commit();
            apply_deformation(result.state);
            rec.accepted = true;
            result.trace.steps.push_back(rec);
            if (config.checkpoint_every > 0 && config.checkpoint_hook &&
                rec.step % config.checkpoint_every == 0)
                config.checkpoint_hook(rec.step, result.state);
        }
    }
    return result;
}

AttackResult black_box_attack(DetectorContract& surrogate, DetectorContract& target,
                              const std::vector<SceneSample>& scenes, const RayPattern& pattern,
                              const AttackConfig& config) {
    config.validate();
    if (!surrogate.differentiable())
        throw std::invalid_argument("black-box attack requires a differentiable surrogate");
    const LossSpec target_spec = config.target_loss.value_or(config.loss);
    AttackResult result{initial_state(config), {}};
    Optimizer opt(config.optimizer, result.state.displacements.size() * 3 + 3);
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (size_t si = 0; si < scenes.size(); ++si) {
            SceneEval eval = evaluate_scene(result.state, surrogate, scenes[si], pattern,
                                            config.loss);
            StepRecord rec;
            rec.step = step++;
            rec.scene_id = static_cast<int>(si);
            rec.loss = eval.total;
            if (eval.chain_zero) {
                rec.skipped = true;
                result.trace.steps.push_back(rec);
                continue;
            }
            ParamVector grad = ParamVector::from_gradient(eval);
            rec.grad_norm = grad.norm();
            DeformationState candidate = result.state;
            apply_delta(candidate, opt.propose(grad));
            apply_deformation(candidate);
            rec.target_before =
                target_misdetection(result.state, target, scenes[si], pattern, target_spec);
            rec.target_after =
                target_misdetection(candidate, target, scenes[si], pattern, target_spec);
            if (rec.target_after < rec.target_before) {
                result.state = std::move(candidate);
                opt.commit();
                rec.accepted = true;
                if (config.checkpoint_every > 0 && config.checkpoint_hook &&
                    rec.step % config.checkpoint_every == 0)
                    config.checkpoint_hook(rec.step, result.state);
            }
            result.trace.steps.push_back(rec);
        }
    }
    return result;
}

}  // namespace advmesh
