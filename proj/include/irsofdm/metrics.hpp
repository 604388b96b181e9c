#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "irsofdm/channel.hpp"

namespace irsofdm {

/// Per-subcarrier, per-user precoding vectors w_{k,i}.
struct BeamformerSet {
    std::vector<std::vector<Eigen::VectorXcd>> w;  // [N][K], N_t each

    int n_subcarriers() const { return static_cast<int>(w.size()); }
    int n_users() const { return static_cast<int>(w.at(0).size()); }

    double total_power() const {
        double p = 0.0;
        for (const auto& wi : w)
            for (const auto& wk : wi) p += wk.squaredNorm();
        return p;
    }

    static BeamformerSet zero(int n, int k, int nt) {
        BeamformerSet b;
        b.w.assign(static_cast<std::size_t>(n),
                   std::vector<Eigen::VectorXcd>(static_cast<std::size_t>(k),
                                                 Eigen::VectorXcd::Zero(nt)));
        return b;
    }
};

/// The M unit-modulus IRS coefficients, optionally restricted to a b-bit
/// phase grid of spacing delta = 2*pi/2^b.
struct PhaseVector {
    Eigen::VectorXcd phi;
    std::optional<int> quant_bits;

    int size() const { return static_cast<int>(phi.size()); }

    double delta() const {
        if (!quant_bits) throw std::logic_error("delta(): continuous phase vector");
        return 2.0 * std::numbers::pi / std::ldexp(1.0, *quant_bits);
    }

    /// Largest deviation from |phi_m| = 1 (and, when quantized, from the grid).
    double feasibility_residual() const {
        double r = 0.0;
        for (int m = 0; m < phi.size(); ++m)
            r = std::max(r, std::abs(std::abs(phi(m)) - 1.0));
        if (quant_bits) {
            const double d = delta();
            for (int m = 0; m < phi.size(); ++m) {
                const double steps = std::arg(phi(m)) / d;
                r = std::max(r, std::abs(steps - std::round(steps)) * d);
            }
        }
        return r;
    }

    void validate() const {
        if (feasibility_residual() > 1e-12)
            throw std::invalid_argument("phase vector violates unit-modulus/grid constraint");
    }

    /// Uniform random phases, snapped to the grid in quantized mode.
    static PhaseVector random(int m, std::mt19937_64& rng,
                              std::optional<int> quant_bits = std::nullopt) {
        PhaseVector pv;
        pv.quant_bits = quant_bits;
        pv.phi.resize(m);
        std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
        for (int j = 0; j < m; ++j) {
            double theta = u(rng);
            if (quant_bits) {
                const double d = pv.delta();
                theta = std::round(theta / d) * d;
            }
            pv.phi(j) = std::polar(1.0, theta);
        }
        return pv;
    }

    static PhaseVector ones(int m) {
        PhaseVector pv;
        pv.phi = Eigen::VectorXcd::Ones(m);
        return pv;
    }
};

/// Received cross gains t(k,p) = hhat_{k,i}^H w_{p,i} for one subcarrier.
/// All three scalar metrics are functions of these inner products only.
inline Eigen::MatrixXcd cross_gains(const FrequencyChannels& fc, const Eigen::VectorXcd& phi,
                                    const std::vector<Eigen::VectorXcd>& w_i, int i) {
    const int k_users = fc.n_users();
    const int p_users = static_cast<int>(w_i.size());
    Eigen::MatrixXcd t(k_users, p_users);
    for (int k = 0; k < k_users; ++k) {
        const Eigen::VectorXcd hhat = effective_channel(fc, phi, k, i);
        for (int p = 0; p < p_users; ++p)
            t(k, p) = hhat.dot(w_i[static_cast<std::size_t>(p)]);  // hhat^H w_p
    }
    return t;
}

inline double sinr_from_gains(const Eigen::MatrixXcd& t, int k, double sigma2) {
    double interference = 0.0;
    for (int p = 0; p < t.cols(); ++p)
        if (p != k) interference += std::norm(t(k, p));
    return std::norm(t(k, k)) / (interference + sigma2);
}

inline double mse_from_gains(const Eigen::MatrixXcd& t, const cplx& varpi, int k,
                             double sigma2) {
    double quad = 0.0;
    for (int p = 0; p < t.cols(); ++p) quad += std::norm(std::conj(varpi) * t(k, p));
    return quad - 2.0 * std::real(std::conj(varpi) * t(k, k)) +
           std::norm(varpi) * sigma2 + 1.0;
}

/// SINR of user k on subcarrier i (Eq. form: |hhat^H w_k|^2 over
/// interference plus noise).
inline double sinr(const FrequencyChannels& fc, const PhaseVector& phase,
                   const BeamformerSet& bf, int k, int i, double sigma2) {
    return sinr_from_gains(
        cross_gains(fc, phase.phi, bf.w[static_cast<std::size_t>(i)], i), k, sigma2);
}

/// Average sum-rate over subcarriers, bits/s/Hz.
inline double sum_rate(const FrequencyChannels& fc, const PhaseVector& phase,
                       const BeamformerSet& bf, double sigma2) {
    const int n = fc.n_subcarriers();
    const int k_users = fc.n_users();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXcd t = cross_gains(fc, phase.phi, bf.w[static_cast<std::size_t>(i)], i);
        for (int k = 0; k < k_users; ++k)
            total += std::log2(1.0 + sinr_from_gains(t, k, sigma2));
    }
    return total / n;
}

/// Modified per-user MSE with receive scalar varpi_{k,i}.
inline double mse(const FrequencyChannels& fc, const PhaseVector& phase,
                  const BeamformerSet& bf, const cplx& varpi_ki, int k, int i,
                  double sigma2) {
    return mse_from_gains(
        cross_gains(fc, phase.phi, bf.w[static_cast<std::size_t>(i)], i), varpi_ki, k,
        sigma2);
}

/// Weighted-MSE surrogate objective:
/// (1/N) sum_{i,k} (log2(rho_{k,i}) - rho_{k,i} MSE_{k,i} + 1).
inline double wmmse_objective(const FrequencyChannels& fc, const PhaseVector& phase,
                              const BeamformerSet& bf, const Eigen::MatrixXd& rho,
                              const Eigen::MatrixXcd& varpi, double sigma2) {
    const int n = fc.n_subcarriers();
    const int k_users = fc.n_users();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXcd t = cross_gains(fc, phase.phi, bf.w[static_cast<std::size_t>(i)], i);
        for (int k = 0; k < k_users; ++k) {
            const double r = rho(k, i);
            if (r <= 0.0) throw std::domain_error("wmmse_objective: rho must be > 0");
            total += std::log2(r) - r * mse_from_gains(t, varpi(k, i), k, sigma2) + 1.0;
        }
    }
    return total / n;
}

}  // namespace irsofdm
