#include "advmesh/bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

namespace advmesh {

using nlohmann::json;

BridgeDetector::BridgeDetector(const BridgeConfig& config) : config_(config) {
    if (config_.command.empty())
        throw std::invalid_argument("bridge: empty command line");
    int to_pipe[2], from_pipe[2];
    if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0)
        throw BridgeError("bridge: pipe() failed", "");
    pid_ = fork();
    if (pid_ < 0) throw BridgeError("bridge: fork() failed", "");
    if (pid_ == 0) {
        dup2(to_pipe[0], STDIN_FILENO);
        dup2(from_pipe[1], STDOUT_FILENO);
        close(to_pipe[0]);
        close(to_pipe[1]);
        close(from_pipe[0]);
        close(from_pipe[1]);
        std::vector<char*> argv;
        for (const auto& a : config_.command) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        execvp(argv[0], argv.data());
        _exit(127);
    }
    close(to_pipe[0]);
    close(from_pipe[1]);
    to_child_ = to_pipe[1];
    from_child_ = from_pipe[0];

    const std::string reply = request("{\"op\":\"hello\"}");
    try {
        json j = json::parse(reply);
        name_ = j.at("name").get<std::string>();
        differentiable_ = j.at("differentiable").get<bool>();
        has_box_regression_ = j.at("has_box_regression").get<bool>();
        stages_ = j.at("stages").get<int>();
    } catch (const json::exception& e) {
        throw BridgeError(std::string("bridge: bad handshake: ") + e.what(), reply);
    }
}

BridgeDetector::~BridgeDetector() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
        kill(pid_, SIGTERM);
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

std::string BridgeDetector::request(const std::string& line) {
    std::string framed = line;
    framed += '\n';
    size_t written = 0;
    while (written < framed.size()) {
        ssize_t n = write(to_child_, framed.data() + written, framed.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BridgeError("bridge: write failed (process exited?)", "");
        }
        written += static_cast<size_t>(n);
    }
    // one reply line, with a poll() timeout
    while (true) {
        size_t nl = read_buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string reply = read_buffer_.substr(0, nl);
            read_buffer_.erase(0, nl + 1);
            return reply;
        }
        struct pollfd pfd{from_child_, POLLIN, 0};
        int pr = poll(&pfd, 1, static_cast<int>(config_.timeout_seconds * 1000.0));
        if (pr == 0) throw BridgeError("bridge: timeout waiting for reply", read_buffer_);
        if (pr < 0) {
            if (errno == EINTR) continue;
            throw BridgeError("bridge: poll failed", "");
        }
        char buf[65536];
        ssize_t n = read(from_child_, buf, sizeof(buf));
        if (n == 0) throw BridgeError("bridge: process closed its output", read_buffer_);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BridgeError("bridge: read failed", "");
        }
        read_buffer_.append(buf, static_cast<size_t>(n));
    }
}

std::vector<Detection> BridgeDetector::forward(const PointCloud& cloud) {
    json points = json::array();
    for (const auto& p : cloud.points)
        points.push_back(json::array({p.x, p.y, p.z, p.reflectivity}));
    json req{{"op", "forward"}, {"points", std::move(points)}};
    const std::string reply = request(req.dump());
    std::vector<Detection> out;
    try {
        json j = json::parse(reply);
        for (const auto& d : j.at("detections")) {
            const auto& b = d.at("box");
            Box3D box{{b.at(0), b.at(1), b.at(2)}, b.at(3), b.at(4), b.at(5), b.at(6)};
            out.push_back(
                Detection::from_logit(box, d.at("logit").get<double>(),
                                      d.value("label", 0)));
        }
    } catch (const json::exception& e) {
        throw BridgeError(std::string("bridge: bad forward reply: ") + e.what(), reply);
    }
    forwarded_points_ = cloud.size();
    has_forward_ = true;
    return out;
}

std::vector<Detection> BridgeDetector::forward_frozen(const PointCloud& cloud) {
    // external detectors own their discrete structure; re-forwarding is the
    // best available frozen evaluation and is documented as such
    return forward(cloud);
}

std::vector<Vec3> BridgeDetector::backward(const std::vector<double>& dlogit,
                                           const std::vector<std::array<double, 7>>& dbox) {
    if (!has_forward_) throw BridgeError("bridge: backward before forward", "");
    json req{{"op", "backward"}, {"dlogit", dlogit}, {"dbox", dbox}};
    const std::string reply = request(req.dump());
    std::vector<Vec3> out;
    try {
        json j = json::parse(reply);
        for (const auto& g : j.at("dpoints")) out.push_back({g.at(0), g.at(1), g.at(2)});
    } catch (const json::exception& e) {
        throw BridgeError(std::string("bridge: bad backward reply: ") + e.what(), reply);
    }
    if (out.size() != forwarded_points_)
        throw BridgeError("bridge: gradient count does not match forwarded cloud", reply);
    return out;
}

}  // namespace advmesh
