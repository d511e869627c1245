// SPDX-License-Identifier: Apache-2.0
//
// Generic trajectory ingestion for external datasets plus the
// constant-acceleration Kalman smoother applied before training on real
// recordings.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace magpred {

struct CsvError : std::runtime_error {
    CsvError(const std::string& msg, int line_number)
        : std::runtime_error(msg), line(line_number) {}
    int line;
};

struct MonotonicityError : std::runtime_error {
    MonotonicityError(const std::string& msg, std::string agent_id)
        : std::runtime_error(msg), agent(std::move(agent_id)) {}
    std::string agent;
};

struct RawTrajectoryRecord {
    std::string agent_id;
    double t = 0.0;           // seconds
    double x = 0.0, y = 0.0;  // meters
    std::optional<double> vx, vy;
};

struct AgentTrack {
    std::string agent_id;
    std::vector<RawTrajectoryRecord> samples;  // strictly increasing t
};

// Documented header: agent_id,t,x,y[,vx,vy]. Velocity fields may be empty.
// Records are grouped by agent in order of first appearance; timestamps must
// be strictly increasing within an agent. Malformed rows are reported with
// their 1-based line number.
std::vector<AgentTrack> ingest_csv(const std::string& path);

void export_csv(const std::string& path, const std::vector<AgentTrack>& tracks);

struct EkfConfig {
    double process_noise = 1.0;  // white-jerk spectral density
    double meas_var = 0.25;      // position measurement variance
    double init_var = 100.0;     // prior variance on unobserved velocity/acceleration

    void validate() const {
        if (process_noise <= 0.0 || meas_var <= 0.0 || init_var <= 0.0)
            throw std::invalid_argument("ekf: noise parameters must be positive");
    }
};

struct SmoothedState {
    double t = 0.0;
    double pos[2] = {0, 0};
    double vel[2] = {0, 0};
    double acc[2] = {0, 0};
};

// Forward Kalman pass with a constant-acceleration motion model per axis.
// The observation map is linear, so the extended form reduces to the
// standard filter. Causal: the state at step k uses measurements up to k.
std::vector<SmoothedState> ekf_smooth(const AgentTrack& track, const EkfConfig& cfg);

}  // namespace magpred
