#pragma once

// Brute-force reference constructions used only by tests and the
// `validate` CLI subcommand: explicit block-cyclic channel matrices,
// exhaustive grid search for the phase vector, and the two comparison
// baselines. Intentionally slow; guarded to tiny dimensions.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "irsofdm/channel.hpp"
#include "irsofdm/optimizer.hpp"

namespace irsofdm::oracle {

/// Explicit time-domain block-cyclic channel matrices of all three links.
struct BlockCyclicChannel {
    std::vector<Eigen::MatrixXcd> Hd_full;  // [K], N x N*N_t
    Eigen::MatrixXcd G_full;                // M*N x N*N_t
    std::vector<Eigen::MatrixXcd> Hr_full;  // [K], N x N*M
    int n = 0, n_tx = 0, n_irs = 0;
};

/// Builds the block-cyclic matrices whose first block column is the
/// zero-padded tap sequence. Block (p,q) holds tap (p-q) mod N.
inline BlockCyclicChannel build_block_cyclic(const ChannelTaps& taps, int n_subcarriers) {
    const int N = n_subcarriers;
    const int D = taps.n_taps();
    const int K = taps.n_users();
    const int M = static_cast<int>(taps.bs_irs.at(0).rows());
    const int Nt = static_cast<int>(taps.bs_irs.at(0).cols());
    if (static_cast<long>(N) * std::max(Nt, M) > 256)
        throw std::invalid_argument("build_block_cyclic: dimensions beyond test scale");

    BlockCyclicChannel bc;
    bc.n = N;
    bc.n_tx = Nt;
    bc.n_irs = M;
    bc.Hd_full.assign(static_cast<std::size_t>(K),
                      Eigen::MatrixXcd::Zero(N, static_cast<Eigen::Index>(N) * Nt));
    bc.Hr_full.assign(static_cast<std::size_t>(K),
                      Eigen::MatrixXcd::Zero(N, static_cast<Eigen::Index>(N) * M));
    bc.G_full = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(M) * N,
                                       static_cast<Eigen::Index>(N) * Nt);
    for (int p = 0; p < N; ++p)
        for (int q = 0; q < N; ++q) {
            const int d = (p - q + N) % N;
            if (d >= D) continue;
            for (int k = 0; k < K; ++k) {
                bc.Hd_full[static_cast<std::size_t>(k)].block(p, q * Nt, 1, Nt) =
                    taps.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)]
                        .adjoint();
                bc.Hr_full[static_cast<std::size_t>(k)].block(p, q * M, 1, M) =
                    taps.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)]
                        .adjoint();
            }
            bc.G_full.block(p * M, q * Nt, M, Nt) = taps.bs_irs[static_cast<std::size_t>(d)];
        }
    return bc;
}

inline Eigen::MatrixXcd dft_matrix(int n) {
    Eigen::MatrixXcd f(n, n);
    for (int m = 0; m < n; ++m)
        for (int q = 0; q < n; ++q)
            f(m, q) = std::polar(1.0 / std::sqrt(static_cast<double>(n)),
                                 -2.0 * std::numbers::pi * m * q / n);
    return f;
}

struct FrequencyOracleResult {
    // rows[k][i] is the 1 x N_t row vector hhat_{k,i}^H.
    std::vector<std::vector<Eigen::RowVectorXcd>> rows;
    double max_offdiag_ratio = 0.0;  // off-diagonal block energy / total
};

/// Computes F (Hd + Hr (I x Phi) G) (F^H x I) explicitly, checks that the
/// off-diagonal blocks vanish, and returns the diagonal blocks.
inline FrequencyOracleResult frequency_oracle(const BlockCyclicChannel& bc,
                                              const Eigen::VectorXcd& phi) {
    const int N = bc.n, Nt = bc.n_tx, M = bc.n_irs;
    const int K = static_cast<int>(bc.Hd_full.size());
    const Eigen::MatrixXcd f = dft_matrix(N);
    Eigen::MatrixXcd fh_kron = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(N) * Nt,
                                                      static_cast<Eigen::Index>(N) * Nt);
    for (int p = 0; p < N; ++p)
        for (int q = 0; q < N; ++q)
            fh_kron.block(p * Nt, q * Nt, Nt, Nt) =
                std::conj(f(q, p)) * Eigen::MatrixXcd::Identity(Nt, Nt);
    Eigen::MatrixXcd phi_kron = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(N) * M,
                                                       static_cast<Eigen::Index>(N) * M);
    for (int p = 0; p < N; ++p)
        phi_kron.block(p * M, p * M, M, M) = phi.asDiagonal();

    FrequencyOracleResult res;
    res.rows.assign(static_cast<std::size_t>(K),
                    std::vector<Eigen::RowVectorXcd>(static_cast<std::size_t>(N)));
    for (int k = 0; k < K; ++k) {
        const Eigen::MatrixXcd composite =
            f *
            (bc.Hd_full[static_cast<std::size_t>(k)] +
             bc.Hr_full[static_cast<std::size_t>(k)] * phi_kron * bc.G_full) *
            fh_kron;
        const double total = composite.squaredNorm();
        double offdiag = 0.0;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                if (i == j) continue;
                offdiag += composite.block(i, j * Nt, 1, Nt).squaredNorm();
            }
        if (total > 0.0)
            res.max_offdiag_ratio = std::max(res.max_offdiag_ratio, offdiag / total);
        for (int i = 0; i < N; ++i)
            res.rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                composite.block(i, i * Nt, 1, Nt);
    }
    if (res.max_offdiag_ratio > 1e-9)
        throw std::runtime_error("frequency_oracle: off-diagonal blocks do not vanish");
    return res;
}

struct ExhaustiveResult {
    Eigen::VectorXcd phi;
    double objective = 0.0;
};

/// Evaluates the phase quadratic on every point of the b-bit grid and
/// returns the global minimizer. Search space capped at 2^16 points.
inline ExhaustiveResult exhaustive_phi(const PhiQuadratic& quad, int b_bits, int m_elems) {
    if (b_bits < 1 || m_elems < 1) throw std::invalid_argument("exhaustive_phi: bad sizes");
    const long levels = 1L << b_bits;
    double points = std::pow(static_cast<double>(levels), m_elems);
    if (points > 65536.0)
        throw std::invalid_argument("exhaustive_phi: search space beyond 2^16");
    const double delta = 2.0 * std::numbers::pi / static_cast<double>(levels);

    ExhaustiveResult best;
    Eigen::VectorXcd phi(m_elems);
    std::vector<long> idx(static_cast<std::size_t>(m_elems), 0);
    bool first = true;
    while (true) {
        for (int j = 0; j < m_elems; ++j)
            phi(j) = std::polar(1.0, idx[static_cast<std::size_t>(j)] * delta);
        const double obj = phi_objective(quad, phi);
        if (first || obj < best.objective) {
            best.objective = obj;
            best.phi = phi;
            first = false;
        }
        int j = 0;
        for (; j < m_elems; ++j) {
            if (++idx[static_cast<std::size_t>(j)] < levels) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
        if (j == m_elems) break;
    }
    return best;
}

inline ExhaustiveResult exhaustive_phi(const FrequencyChannels& fc, const BeamformerSet& W,
                                       const Eigen::MatrixXd& rho,
                                       const Eigen::MatrixXcd& varpi, int b_bits,
                                       int m_elems) {
    return exhaustive_phi(build_phi_quadratic(fc, W, rho, varpi), b_bits, m_elems);
}

enum class BaselineMode { random_irs, no_irs };

struct BaselineResult {
    BeamformerSet W;
    PhaseVector phi;
    double sum_rate = 0.0;
    OptimizerState state;
};

/// Comparison schemes: random frozen phases, or the direct link alone.
/// Both reuse the rho/varpi/W blocks of the optimizer with the phase
/// vector frozen, so only the IRS treatment differs.
inline BaselineResult baseline(const FrequencyChannels& fc, BaselineMode mode,
                               const SystemConfig& cfg, std::mt19937_64& rng,
                               const StoppingRule& stop = {}) {
    FrequencyChannels channels = fc;
    SystemConfig base_cfg = cfg;
    base_cfg.quant_bits.reset();
    if (mode == BaselineMode::no_irs) {
        for (auto& user : channels.irs_user)
            for (auto& h : user) h.setZero();
    }
    OptimizerState init = initialize(base_cfg, channels, rng);
    if (mode == BaselineMode::no_irs) init.phi = PhaseVector::ones(cfg.n_irs);
    RunOptions opts;
    opts.freeze_phi = true;
    BaselineResult res;
    res.state = run(base_cfg, channels, std::move(init), stop, opts);
    res.W = res.state.W;
    res.phi = res.state.phi;
    res.sum_rate = sum_rate(channels, res.phi, res.W, cfg.noise_power);
    return res;
}

}  // namespace irsofdm::oracle
