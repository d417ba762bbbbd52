#pragma once

#include <memory>
#include <string>
#include <vector>

#include "advmesh/detector.hpp"

namespace advmesh {

struct BridgeConfig {
    std::vector<std::string> command;  // argv, command[0] is the executable
    double timeout_seconds = 60.0;
};

class BridgeError : public std::runtime_error {
 public:
    BridgeError(const std::string& what, std::string payload)
        : std::runtime_error(what + (payload.empty() ? "" : " | payload: " + payload)),
          payload_(std::move(payload)) {}
    const std::string& payload() const { return payload_; }

 private:
    std::string payload_;
};

// Proxies the detector contract over a child process speaking one JSON
// object per line on stdin/stdout. Handshake {"op":"hello"} reports the
// capability flags; forward/backward stream points and gradients as decimal
// doubles. Requests are serialized per process.
class BridgeDetector : public DetectorContract {
 public:
    explicit BridgeDetector(const BridgeConfig& config);
    ~BridgeDetector() override;
    BridgeDetector(const BridgeDetector&) = delete;
    BridgeDetector& operator=(const BridgeDetector&) = delete;

    std::string name() const override { return name_; }
    bool differentiable() const override { return differentiable_; }
    bool has_box_regression() const override { return has_box_regression_; }
    int stages() const override { return stages_; }
    std::vector<Detection> forward(const PointCloud& cloud) override;
    std::vector<Detection> forward_frozen(const PointCloud& cloud) override;
    std::vector<Vec3> backward(const std::vector<double>& dlogit,
                               const std::vector<std::array<double, 7>>& dbox) override;

 private:
    std::string request(const std::string& line);

    BridgeConfig config_;
    std::string name_;
    bool differentiable_ = false;
    bool has_box_regression_ = false;
    int stages_ = 1;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string read_buffer_;
    size_t forwarded_points_ = 0;
    bool has_forward_ = false;
};

}  // namespace advmesh
