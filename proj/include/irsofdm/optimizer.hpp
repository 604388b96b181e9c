#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "irsofdm/channel.hpp"
#include "irsofdm/metrics.hpp"

namespace irsofdm {

struct StoppingRule {
    double outer_tol = 1e-4;   // relative change of the surrogate objective
    int max_outer = 100;
    double phi_tol = 1e-6;     // relative change of the phase quadratic
    int max_phi_sweeps = 50;
};

struct IterationRecord {
    int iter = 0;
    double objective = 0.0;  // weighted-MSE surrogate, Eq. (9a) form
    double sum_rate = 0.0;
    double power_residual = 0.0;
    double phi_residual = 0.0;
    bool sum_rate_dipped = false;  // normalization step is heuristic
    bool w_zeroed = false;
};

struct OptimizerState {
    BeamformerSet W;
    PhaseVector phi;
    Eigen::MatrixXd rho;     // K x N, > 0
    Eigen::MatrixXcd varpi;  // K x N
    std::vector<IterationRecord> trace;
    int outer_iters = 0;
    long inner_sweeps_total = 0;
    bool converged = false;
};

/// The phase design subproblem in quadratic form:
/// minimize phi^H A phi - 2 Re{phi^H b} over unit-modulus phi.
struct PhiQuadratic {
    Eigen::MatrixXcd A;  // M x M, Hermitian PSD
    Eigen::VectorXcd b;  // M
};

inline double phi_objective(const PhiQuadratic& quad, const Eigen::VectorXcd& phi) {
    return std::real(phi.dot(quad.A * phi)) - 2.0 * std::real(phi.dot(quad.b));
}

namespace detail {

/// Effective channels for every (k, i) at the current phase vector.
inline std::vector<std::vector<Eigen::VectorXcd>> all_effective_channels(
    const FrequencyChannels& fc, const Eigen::VectorXcd& phi) {
    const int K = fc.n_users(), N = fc.n_subcarriers();
    std::vector<std::vector<Eigen::VectorXcd>> eff(
        static_cast<std::size_t>(K),
        std::vector<Eigen::VectorXcd>(static_cast<std::size_t>(N)));
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < N; ++i)
            eff[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
                effective_channel(fc, phi, k, i);
    return eff;
}

/// Cross gains t_i(k,p) = eff_{k,i}^H w_{p,i} for every subcarrier.
inline std::vector<Eigen::MatrixXcd> all_cross_gains(
    const std::vector<std::vector<Eigen::VectorXcd>>& eff, const BeamformerSet& W) {
    const int K = static_cast<int>(eff.size());
    const int N = W.n_subcarriers();
    std::vector<Eigen::MatrixXcd> t(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        auto& ti = t[static_cast<std::size_t>(i)];
        ti.resize(K, K);
        for (int k = 0; k < K; ++k)
            for (int p = 0; p < K; ++p)
                ti(k, p) = eff[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)].dot(
                    W.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)]);
    }
    return t;
}

}  // namespace detail

/// rho_{k,i} <- 1 / (MSE_{k,i} ln 2), the exact stationary point of
/// log2(rho) - rho * MSE. The 1/ln2 factor is a scale common to every
/// (k, i), so the varpi, W, and phi block minimizers are unchanged by it;
/// keeping it makes the rho step a true conditional maximizer.
inline void update_rho(OptimizerState& state, const std::vector<Eigen::MatrixXcd>& gains,
                       double sigma2) {
    const int K = static_cast<int>(state.rho.rows());
    const int N = static_cast<int>(state.rho.cols());
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < K; ++k) {
            const double m = mse_from_gains(gains[static_cast<std::size_t>(i)],
                                            state.varpi(k, i), k, sigma2);
            if (m <= 0.0) throw std::domain_error("update_rho: nonpositive MSE");
            state.rho(k, i) = 1.0 / (m * std::numbers::ln2);
        }
}

/// varpi_{k,i} <- hhat^H w_k / (sum_p |hhat^H w_p|^2 + sigma^2).
inline void update_varpi(OptimizerState& state, const std::vector<Eigen::MatrixXcd>& gains,
                         double sigma2) {
    const int K = static_cast<int>(state.varpi.rows());
    const int N = static_cast<int>(state.varpi.cols());
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < K; ++k) {
            const auto& t = gains[static_cast<std::size_t>(i)];
            double denom = sigma2;
            for (int p = 0; p < K; ++p) denom += std::norm(t(k, p));
            state.varpi(k, i) = t(k, k) / denom;
        }
}

/// Per-subcarrier regularized MMSE solve followed by one global power
/// normalization so sum_i ||W_i||_F^2 = P exactly. Returns the record
/// flags for a degenerate all-zero solution.
inline bool update_beamformers(OptimizerState& state,
                               const std::vector<std::vector<Eigen::VectorXcd>>& eff,
                               double tx_power) {
    const int K = static_cast<int>(state.rho.rows());
    const int N = static_cast<int>(state.rho.cols());
    const int Nt = static_cast<int>(eff.at(0).at(0).size());

    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        Eigen::MatrixXcd gram = Eigen::MatrixXcd::Zero(Nt, Nt);
        std::vector<Eigen::VectorXcd> heq(static_cast<std::size_t>(K));
        for (int p = 0; p < K; ++p) {
            heq[static_cast<std::size_t>(p)] =
                state.varpi(p, i) * eff[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
            gram.selfadjointView<Eigen::Lower>().rankUpdate(
                heq[static_cast<std::size_t>(p)], state.rho(p, i));
        }
        gram = gram.selfadjointView<Eigen::Lower>();
        const double eps = 1e-12 * gram.real().trace() / Nt;
        gram += eps * Eigen::MatrixXcd::Identity(Nt, Nt);
        const Eigen::LDLT<Eigen::MatrixXcd> solver(gram);
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXcd wk =
                solver.solve(state.rho(k, i) * heq[static_cast<std::size_t>(k)]);
            total += wk.squaredNorm();
            state.W.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = std::move(wk);
        }
    }
    if (total <= 0.0) {
        for (auto& wi : state.W.w)
            for (auto& wk : wi) wk.setZero();
        return true;
    }
    const double scale = std::sqrt(tx_power / total);
    for (auto& wi : state.W.w)
        for (auto& wk : wi) wk *= scale;
    return false;
}

/// Assembles A = sum rho |varpi|^2 sum_p v v^H and the linear term b of the
/// unit-modulus quadratic program, with
/// v_{k,p,i} = h^r_{k,i} .* conj(G_i w_{p,i}) and
/// hbar_{k,p,i} = (h^d_{k,i})^H w_{p,i}.
inline PhiQuadratic build_phi_quadratic(const FrequencyChannels& fc, const BeamformerSet& W,
                                        const Eigen::MatrixXd& rho,
                                        const Eigen::MatrixXcd& varpi) {
    const int K = fc.n_users(), N = fc.n_subcarriers(), M = fc.n_irs();
    PhiQuadratic quad;
    quad.b = Eigen::VectorXcd::Zero(M);

    Eigen::MatrixXcd cols(M, static_cast<Eigen::Index>(N) * K * K);
    Eigen::Index col = 0;
    for (int i = 0; i < N; ++i) {
        std::vector<Eigen::VectorXcd> gw(static_cast<std::size_t>(K));
        for (int p = 0; p < K; ++p)
            gw[static_cast<std::size_t>(p)] =
                fc.bs_irs[static_cast<std::size_t>(i)] *
                W.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
        for (int k = 0; k < K; ++k) {
            const auto& hr = fc.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            const auto& hd = fc.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            const cplx vp = varpi(k, i);
            const double weight = rho(k, i) * std::norm(vp);
            for (int p = 0; p < K; ++p) {
                const Eigen::VectorXcd v =
                    hr.cwiseProduct(gw[static_cast<std::size_t>(p)].conjugate());
                const cplx hbar =
                    hd.dot(W.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)]);
                cols.col(col++) = std::sqrt(weight) * v;
                quad.b -= weight * hbar * v;
                if (p == k) quad.b += rho(k, i) * vp * v;
            }
        }
    }
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(M, M);
    a.selfadjointView<Eigen::Lower>().rankUpdate(cols);
    quad.A = a.selfadjointView<Eigen::Lower>();
    return quad;
}

namespace detail {

/// Linear coefficient of phi_m with the other elements held fixed:
/// c = b(m) - sum_{n != m} A(m,n) phi_n. `aphi_m` is (A phi)(m).
inline cplx element_coefficient(const PhiQuadratic& quad, const Eigen::VectorXcd& phi,
                                int m, const cplx& aphi_m) {
    return quad.b(m) - (aphi_m - quad.A(m, m) * phi(m));
}

}  // namespace detail

/// Conditionally optimal continuous update phi_m <- c/|c|; the element
/// objective never increases. |c| = 0 keeps the previous value.
inline cplx update_phi_element(const PhiQuadratic& quad, const Eigen::VectorXcd& phi, int m) {
    const cplx aphi_m = (quad.A.row(m) * phi).value();
    const cplx c = detail::element_coefficient(quad, phi, m, aphi_m);
    const double mag = std::abs(c);
    return mag > 0.0 ? c / mag : phi(m);
}

/// Grid-constrained update: the angle of c rounded to the nearest multiple
/// of delta = 2*pi/2^b.
inline cplx quantize_phi_element(const PhiQuadratic& quad, const Eigen::VectorXcd& phi,
                                 int m, int b_bits) {
    if (b_bits < 1) throw std::invalid_argument("quantize_phi_element: b_bits must be >= 1");
    const cplx aphi_m = (quad.A.row(m) * phi).value();
    const cplx c = detail::element_coefficient(quad, phi, m, aphi_m);
    if (std::abs(c) == 0.0) return phi(m);
    const double delta = 2.0 * std::numbers::pi / std::ldexp(1.0, b_bits);
    return std::polar(1.0, std::round(std::arg(c) / delta) * delta);
}

struct SweepResult {
    int sweeps = 0;
    bool converged = false;
};

/// Full element passes until the quadratic objective stalls. In quantized
/// mode an unchanged full pass is an exact fixed point (finite state space)
/// and also terminates the sweep.
inline SweepResult sweep_phi(const PhiQuadratic& quad, PhaseVector& phase, double tol,
                             int max_sweeps) {
    const int M = phase.size();
    Eigen::VectorXcd aphi = quad.A * phase.phi;
    double prev_obj = phi_objective(quad, phase.phi);
    SweepResult res;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool changed = false;
        for (int m = 0; m < M; ++m) {
            const cplx c = detail::element_coefficient(quad, phase.phi, m, aphi(m));
            cplx next = phase.phi(m);
            if (std::abs(c) > 0.0) {
                if (phase.quant_bits) {
                    const double d = phase.delta();
                    next = std::polar(1.0, std::round(std::arg(c) / d) * d);
                } else {
                    next = c / std::abs(c);
                }
            }
            if (next != phase.phi(m)) {
                aphi += quad.A.col(m) * (next - phase.phi(m));
                phase.phi(m) = next;
                changed = true;
            }
        }
        ++res.sweeps;
        const double obj = phi_objective(quad, phase.phi);
        const double denom = std::max(std::abs(prev_obj), 1e-300);
        if ((phase.quant_bits && !changed) || std::abs(obj - prev_obj) / denom < tol) {
            res.converged = true;
            return res;
        }
        prev_obj = obj;
    }
    return res;
}

struct RunOptions {
    bool freeze_phi = false;  // baselines optimize W only
};

/// Matched-filter beamformers to the initial effective channels, power
/// normalized; random (grid-snapped) phases.
inline OptimizerState initialize(const SystemConfig& cfg, const FrequencyChannels& fc,
                                 std::mt19937_64& rng) {
    OptimizerState state;
    state.phi = PhaseVector::random(cfg.n_irs, rng, cfg.quant_bits);
    state.rho = Eigen::MatrixXd::Ones(cfg.n_users, cfg.n_subcarriers);
    state.varpi = Eigen::MatrixXcd::Zero(cfg.n_users, cfg.n_subcarriers);
    state.W = BeamformerSet::zero(cfg.n_subcarriers, cfg.n_users, cfg.n_tx);
    double total = 0.0;
    for (int i = 0; i < cfg.n_subcarriers; ++i)
        for (int k = 0; k < cfg.n_users; ++k) {
            Eigen::VectorXcd h = effective_channel(fc, state.phi.phi, k, i);
            total += h.squaredNorm();
            state.W.w[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = std::move(h);
        }
    if (total > 0.0) {
        const double scale = std::sqrt(cfg.tx_power / total);
        for (auto& wi : state.W.w)
            for (auto& wk : wi) wk *= scale;
    }
    return state;
}

/// Block coordinate descent: rho, varpi, W, then the phase sweep, repeated
/// until the surrogate objective stalls. The trace records the surrogate,
/// the sum-rate, and both constraint residuals per outer iteration.
inline OptimizerState run(const SystemConfig& cfg, const FrequencyChannels& fc,
                          OptimizerState state, const StoppingRule& stop = {},
                          const RunOptions& opts = {}) {
    const double sigma2 = cfg.noise_power;
    auto eff = detail::all_effective_channels(fc, state.phi.phi);
    double prev_obj = 0.0;
    double prev_sum_rate = sum_rate(fc, state.phi, state.W, sigma2);

    for (int iter = 1; iter <= stop.max_outer; ++iter) {
        auto gains = detail::all_cross_gains(eff, state.W);
        update_rho(state, gains, sigma2);
        update_varpi(state, gains, sigma2);
        IterationRecord rec;
        rec.iter = iter;
        rec.w_zeroed = update_beamformers(state, eff, cfg.tx_power);
        if (!opts.freeze_phi) {
            const PhiQuadratic quad = build_phi_quadratic(fc, state.W, state.rho, state.varpi);
            state.inner_sweeps_total +=
                sweep_phi(quad, state.phi, stop.phi_tol, stop.max_phi_sweeps).sweeps;
            eff = detail::all_effective_channels(fc, state.phi.phi);
        }
        rec.objective = wmmse_objective(fc, state.phi, state.W, state.rho, state.varpi, sigma2);
        rec.sum_rate = sum_rate(fc, state.phi, state.W, sigma2);
        rec.power_residual = std::abs(state.W.total_power() - cfg.tx_power);
        rec.phi_residual = state.phi.feasibility_residual();
        rec.sum_rate_dipped = rec.sum_rate < prev_sum_rate - 1e-12;
        state.trace.push_back(rec);
        state.outer_iters = iter;

        if (iter > 1) {
            const double denom = std::max(std::abs(prev_obj), 1e-300);
            if (std::abs(rec.objective - prev_obj) / denom < stop.outer_tol) {
                state.converged = true;
                break;
            }
        }
        prev_obj = rec.objective;
        prev_sum_rate = rec.sum_rate;
    }
    return state;
}

inline OptimizerState run(const SystemConfig& cfg, const FrequencyChannels& fc,
                          std::mt19937_64& init_rng, const StoppingRule& stop = {},
                          const RunOptions& opts = {}) {
    return run(cfg, fc, initialize(cfg, fc, init_rng), stop, opts);
}

}  // namespace irsofdm
