#pragma once

#include <random>

#include "irsofdm/channel.hpp"
#include "irsofdm/metrics.hpp"
#include "irsofdm/rng.hpp"
#include "irsofdm/scenario.hpp"

namespace irsofdm::test {

struct SmallInstance {
    SystemConfig cfg;
    LinkGeometry geo;
    ChannelTaps taps;
    FrequencyChannels fc;
};

/// A random instance at test scale. Dimensions default to the oracle-sized
/// case (N=8, N_t=2, K=2, M=3, D=3).
inline SmallInstance make_instance(std::uint64_t seed, int n = 8, int nt = 2, int k = 2,
                                   int m = 3, int d = 3) {
    SmallInstance inst;
    inst.cfg.n_subcarriers = n;
    inst.cfg.n_tx = nt;
    inst.cfg.n_users = k;
    inst.cfg.n_irs = m;
    inst.cfg.n_taps = d;
    inst.cfg.cp_len = d;
    inst.cfg.rng_seed = seed;
    auto rng = make_engine(seed);
    inst.geo.d_bs_user = sample_user_distances(inst.geo, k, rng);
    inst.taps = sample_taps(inst.cfg, inst.geo, rng);
    inst.fc = to_frequency(inst.taps, n);
    return inst;
}

/// Random beamformers scaled to exactly the power budget.
inline BeamformerSet random_beamformers(const SystemConfig& cfg, std::mt19937_64& rng) {
    BeamformerSet bf = BeamformerSet::zero(cfg.n_subcarriers, cfg.n_users, cfg.n_tx);
    std::normal_distribution<double> n(0.0, 1.0);
    double total = 0.0;
    for (auto& wi : bf.w)
        for (auto& wk : wi) {
            for (int j = 0; j < wk.size(); ++j) wk(j) = cplx{n(rng), n(rng)};
            total += wk.squaredNorm();
        }
    const double scale = std::sqrt(cfg.tx_power / total);
    for (auto& wi : bf.w)
        for (auto& wk : wi) wk *= scale;
    return bf;
}

}  // namespace irsofdm::test
