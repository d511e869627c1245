// SPDX-License-Identifier: Apache-2.0
#include "magpred/dataio.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "magpred/csv.hpp"

namespace magpred {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_field(const std::string& s, const char* column, int line) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw CsvError("line " + std::to_string(line) + ": non-numeric value '" + s +
                           "' in column " + column,
                       line);
    return v;
}

}  // namespace

std::vector<AgentTrack> ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw CsvError("empty file, expected a header row", 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    bool has_velocity;
    if (line == "agent_id,t,x,y") {
        has_velocity = false;
    } else if (line == "agent_id,t,x,y,vx,vy") {
        has_velocity = true;
    } else {
        throw CsvError("header must be 'agent_id,t,x,y' or 'agent_id,t,x,y,vx,vy', got '" +
                           line + "'",
                       1);
    }

    std::vector<AgentTrack> tracks;
    std::map<std::string, std::size_t> index;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        const std::size_t want = has_velocity ? 6 : 4;
        if (fields.size() != want)
            throw CsvError("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(want) + " fields, got " +
                               std::to_string(fields.size()),
                           line_no);
        RawTrajectoryRecord rec;
        rec.agent_id = fields[0];
        rec.t = parse_field(fields[1], "t", line_no);
        rec.x = parse_field(fields[2], "x", line_no);
        rec.y = parse_field(fields[3], "y", line_no);
        if (has_velocity) {
            if (!fields[4].empty()) rec.vx = parse_field(fields[4], "vx", line_no);
            if (!fields[5].empty()) rec.vy = parse_field(fields[5], "vy", line_no);
        }

        auto it = index.find(rec.agent_id);
        if (it == index.end()) {
            index.emplace(rec.agent_id, tracks.size());
            tracks.push_back(AgentTrack{rec.agent_id, {rec}});
        } else {
            AgentTrack& tr = tracks[it->second];
            if (rec.t <= tr.samples.back().t)
                throw MonotonicityError("agent '" + rec.agent_id +
                                            "': timestamps must be strictly increasing (" +
                                            format_double(rec.t) + " after " +
                                            format_double(tr.samples.back().t) + ")",
                                        rec.agent_id);
            tr.samples.push_back(rec);
        }
    }
    return tracks;
}

void export_csv(const std::string& path, const std::vector<AgentTrack>& tracks) {
    bool any_velocity = false;
    for (const AgentTrack& tr : tracks)
        for (const RawTrajectoryRecord& r : tr.samples)
            if (r.vx || r.vy) any_velocity = true;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("export_csv: cannot open '" + path + "'");
    out << (any_velocity ? "agent_id,t,x,y,vx,vy" : "agent_id,t,x,y") << '\n';
    for (const AgentTrack& tr : tracks)
        for (const RawTrajectoryRecord& r : tr.samples) {
            out << r.agent_id << ',' << format_double(r.t) << ',' << format_double(r.x) << ','
                << format_double(r.y);
            if (any_velocity) {
                out << ',' << (r.vx ? format_double(*r.vx) : "") << ','
                    << (r.vy ? format_double(*r.vy) : "");
            }
            out << '\n';
        }
    if (!out) throw std::runtime_error("export_csv: write failed for '" + path + "'");
}

std::vector<SmoothedState> ekf_smooth(const AgentTrack& track, const EkfConfig& cfg) {
    cfg.validate();
    if (track.samples.size() < 2)
        throw std::invalid_argument("ekf_smooth: agent '" + track.agent_id +
                                    "' needs at least 2 samples");

    using Eigen::Matrix3d;
    using Eigen::Vector3d;

    // per-axis state (position, velocity, acceleration)
    Vector3d state[2];
    Matrix3d cov[2];
    for (int axis = 0; axis < 2; ++axis) {
        const RawTrajectoryRecord& first = track.samples.front();
        state[axis] = Vector3d::Zero();
        state[axis](0) = axis == 0 ? first.x : first.y;
        const std::optional<double> v0 = axis == 0 ? first.vx : first.vy;
        if (v0) state[axis](1) = *v0;
        cov[axis] = Matrix3d::Zero();
        cov[axis](0, 0) = cfg.meas_var;
        cov[axis](1, 1) = cfg.init_var;
        cov[axis](2, 2) = cfg.init_var;
    }

    std::vector<SmoothedState> out;
    out.reserve(track.samples.size());
    {
        SmoothedState s;
        s.t = track.samples.front().t;
        for (int axis = 0; axis < 2; ++axis) {
            s.pos[axis] = state[axis](0);
            s.vel[axis] = state[axis](1);
            s.acc[axis] = state[axis](2);
        }
        out.push_back(s);
    }

    for (std::size_t k = 1; k < track.samples.size(); ++k) {
        const double dt = track.samples[k].t - track.samples[k - 1].t;
        Matrix3d F = Matrix3d::Identity();
        F(0, 1) = dt;
        F(0, 2) = dt * dt / 2.0;
        F(1, 2) = dt;
        Matrix3d Q;
        const double q = cfg.process_noise;
        const double d2 = dt * dt, d3 = d2 * dt, d4 = d3 * dt, d5 = d4 * dt;
        Q << q * d5 / 20, q * d4 / 8, q * d3 / 6,
             q * d4 / 8,  q * d3 / 3, q * d2 / 2,
             q * d3 / 6,  q * d2 / 2, q * dt;

        SmoothedState s;
        s.t = track.samples[k].t;
        for (int axis = 0; axis < 2; ++axis) {
            state[axis] = F * state[axis];
            cov[axis] = F * cov[axis] * F.transpose() + Q;

            const double z = axis == 0 ? track.samples[k].x : track.samples[k].y;
            const double innovation = z - state[axis](0);
            const double S = cov[axis](0, 0) + cfg.meas_var;
            if (!(S > 0.0) || !std::isfinite(S))
                throw std::runtime_error("ekf_smooth: innovation covariance not positive at step " +
                                         std::to_string(k));
            const Vector3d gain = cov[axis].col(0) / S;
            state[axis] += gain * innovation;
            cov[axis] = (Matrix3d::Identity() - gain * Eigen::RowVector3d(1, 0, 0)) * cov[axis];

            s.pos[axis] = state[axis](0);
            s.vel[axis] = state[axis](1);
            s.acc[axis] = state[axis](2);
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace magpred
