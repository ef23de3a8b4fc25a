#pragma once

// Noise schedule and the closed-form forward process. Arrays are indexed
// by timestep t in [1,T]; index 0 holds the t=0 convention alpha_bar[0]=1
// (clean data), beta[0]/alpha[0] are unused.

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "badt2i/tensor.hpp"

namespace badt2i {

enum class ScheduleKind { linear, constant };

inline const char* schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "constant";
}
inline ScheduleKind schedule_kind_from_name(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "constant") return ScheduleKind::constant;
    throw ConfigError("schedule: unknown kind " + s);
}

struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0, beta_end = 0.0;
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<double> beta;       // [0..T], beta[0] unused
    std::vector<double> alpha;      // 1 - beta[t]
    std::vector<double> alpha_bar;  // prod_{s<=t} alpha[s], alpha_bar[0] = 1

    nlohmann::json to_json() const {
        return {{"T", T},
                {"beta_start", beta_start},
                {"beta_end", beta_end},
                {"kind", schedule_kind_name(kind)}};
    }
    bool same_params(const NoiseSchedule& o) const {
        return T == o.T && beta_start == o.beta_start && beta_end == o.beta_end && kind == o.kind;
    }
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.kind = kind;
    s.beta.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<size_t>(T) + 1, 1.0);
    s.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        double b = kind == ScheduleKind::constant
                       ? beta_start
                       : (T == 1 ? beta_start
                                 : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1));
        s.beta[static_cast<size_t>(t)] = b;
        s.alpha[static_cast<size_t>(t)] = 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t)] =
            s.alpha_bar[static_cast<size_t>(t) - 1] * (1.0 - b);
    }
    return s;
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    return make_schedule(j.at("T").get<int>(), j.at("beta_start").get<double>(),
                         j.at("beta_end").get<double>(),
                         schedule_kind_from_name(j.at("kind").get<std::string>()));
}

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
inline Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw BoundsError("q_sample: t out of range");
    if (!x0.same_shape(eps)) throw BoundsError("q_sample: eps shape mismatch");
    double ab = sched.alpha_bar[static_cast<size_t>(t)];
    double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out(x0.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

}  // namespace badt2i
