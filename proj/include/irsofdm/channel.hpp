#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsofdm/scenario.hpp"

namespace irsofdm {

using cplx = std::complex<double>;

/// Time-domain D-tap impulse responses for the three links.
/// direct[k][d] is an N_t-vector, bs_irs[d] an MxN_t matrix,
/// irs_user[k][d] an M-vector. Only the leading D/2 delays are nonzero
/// by default (see sample_taps).
struct ChannelTaps {
    std::vector<std::vector<Eigen::VectorXcd>> direct;    // [K][D]
    std::vector<Eigen::MatrixXcd> bs_irs;                 // [D]
    std::vector<std::vector<Eigen::VectorXcd>> irs_user;  // [K][D]

    int n_users() const { return static_cast<int>(direct.size()); }
    int n_taps() const { return static_cast<int>(bs_irs.size()); }
};

/// Per-subcarrier frequency-domain channels h^d_{k,i}, h^r_{k,i}, G_i.
struct FrequencyChannels {
    std::vector<std::vector<Eigen::VectorXcd>> direct;    // [K][N], N_t each
    std::vector<std::vector<Eigen::VectorXcd>> irs_user;  // [K][N], M each
    std::vector<Eigen::MatrixXcd> bs_irs;                 // [N], MxN_t

    int n_users() const { return static_cast<int>(direct.size()); }
    int n_subcarriers() const { return static_cast<int>(bs_irs.size()); }
    int n_tx() const { return static_cast<int>(direct.at(0).at(0).size()); }
    int n_irs() const { return static_cast<int>(bs_irs.at(0).rows()); }
};

namespace detail {

inline cplx cscg(double variance, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

inline std::vector<int> nonzero_delays(int n_taps, bool random_placement,
                                       std::mt19937_64& rng) {
    const int nnz = std::max(1, n_taps / 2);
    std::vector<int> delays;
    if (!random_placement) {
        for (int d = 0; d < nnz; ++d) delays.push_back(d);
        return delays;
    }
    std::vector<int> all(static_cast<std::size_t>(n_taps));
    for (int d = 0; d < n_taps; ++d) all[static_cast<std::size_t>(d)] = d;
    for (int j = 0; j < nnz; ++j) {
        std::uniform_int_distribution<int> pick(j, n_taps - 1);
        std::swap(all[static_cast<std::size_t>(j)], all[static_cast<std::size_t>(pick(rng))]);
    }
    delays.assign(all.begin(), all.begin() + nnz);
    std::sort(delays.begin(), delays.end());
    return delays;
}

}  // namespace detail

/// Synthesizes tap channels. Total average power per scalar coefficient
/// equals the link path-loss gain, split equally over the nonzero taps.
/// Draw order is fixed (direct, bs_irs, irs_user) so a given seed always
/// yields the same realization.
inline ChannelTaps sample_taps(const SystemConfig& cfg, const LinkGeometry& geo,
                               std::mt19937_64& rng, bool random_placement = false) {
    cfg.validate();
    geo.validate();
    if (static_cast<int>(geo.d_bs_user.size()) != cfg.n_users)
        throw std::invalid_argument("geometry must carry one d_bs_user per user");

    const int K = cfg.n_users, D = cfg.n_taps, Nt = cfg.n_tx, M = cfg.n_irs;
    const auto delays = detail::nonzero_delays(D, random_placement, rng);
    const double nnz = static_cast<double>(delays.size());

    ChannelTaps taps;
    taps.direct.assign(K, std::vector<Eigen::VectorXcd>(
                              D, Eigen::VectorXcd::Zero(Nt)));
    taps.bs_irs.assign(D, Eigen::MatrixXcd::Zero(M, Nt));
    taps.irs_user.assign(K, std::vector<Eigen::VectorXcd>(
                                D, Eigen::VectorXcd::Zero(M)));

    for (int k = 0; k < K; ++k) {
        const double var =
            link_gain(geo.d_bs_user[static_cast<std::size_t>(k)], geo.exp_bs_user,
                      geo.ref_loss_db) / nnz;
        for (int d : delays)
            for (int n = 0; n < Nt; ++n)
                taps.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)](n) =
                    detail::cscg(var, rng);
    }
    {
        const double var =
            link_gain(geo.d_bs_irs, geo.exp_bs_irs, geo.ref_loss_db) / nnz;
        for (int d : delays)
            for (int m = 0; m < M; ++m)
                for (int n = 0; n < Nt; ++n)
                    taps.bs_irs[static_cast<std::size_t>(d)](m, n) = detail::cscg(var, rng);
    }
    for (int k = 0; k < K; ++k) {
        const double var =
            link_gain(geo.d_irs_user, geo.exp_irs_user, geo.ref_loss_db) / nnz;
        for (int d : delays)
            for (int m = 0; m < M; ++m)
                taps.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)](m) =
                    detail::cscg(var, rng);
    }
    return taps;
}

/// Converts taps to per-subcarrier channels as the eigenvalues of the
/// block-cyclic time-domain matrices. The user-side links are defined as
/// conjugated cyclic-matrix eigenvalues, which flips the DFT kernel sign
/// relative to the BS-IRS link:
///   h^d_{k,i}(n) = sum_d direct[k][d](n) * e^{+j 2 pi i d / N}
///   h^r_{k,i}(m) = sum_d irs_user[k][d](m) * e^{+j 2 pi i d / N}
///   G_i(m,n)     = sum_d bs_irs[d](m,n)   * e^{-j 2 pi i d / N}
/// (i zero-based here). These are exactly the diagonal blocks of
/// F (H_cyc) (F^H x I).
inline FrequencyChannels to_frequency(const ChannelTaps& taps, int n_subcarriers) {
    const int N = n_subcarriers;
    const int D = taps.n_taps();
    const int K = taps.n_users();
    if (D > N) throw std::invalid_argument("to_frequency: need D <= N");
    const int M = static_cast<int>(taps.bs_irs.at(0).rows());
    const int Nt = static_cast<int>(taps.bs_irs.at(0).cols());

    Eigen::MatrixXcd twiddle(N, D);  // twiddle(i,d) = e^{-j 2 pi i d / N}
    for (int i = 0; i < N; ++i)
        for (int d = 0; d < D; ++d)
            twiddle(i, d) = std::polar(1.0, -2.0 * std::numbers::pi * i * d / N);

    FrequencyChannels fc;
    fc.direct.assign(K, std::vector<Eigen::VectorXcd>(N, Eigen::VectorXcd::Zero(Nt)));
    fc.irs_user.assign(K, std::vector<Eigen::VectorXcd>(N, Eigen::VectorXcd::Zero(M)));
    fc.bs_irs.assign(N, Eigen::MatrixXcd::Zero(M, Nt));

    for (int i = 0; i < N; ++i) {
        for (int d = 0; d < D; ++d) {
            const cplx w = twiddle(i, d);
            fc.bs_irs[static_cast<std::size_t>(i)] +=
                w * taps.bs_irs[static_cast<std::size_t>(d)];
            const cplx wc = std::conj(w);
            for (int k = 0; k < K; ++k) {
                fc.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] +=
                    wc * taps.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
                fc.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] +=
                    wc * taps.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
            }
        }
    }
    return fc;
}

/// Composite channel for user k on subcarrier i: the column vector whose
/// conjugate-transpose is (h^d)^H + (h^r)^H diag(phi) G_i.
inline Eigen::VectorXcd effective_channel(const FrequencyChannels& fc,
                                          const Eigen::VectorXcd& phi, int k, int i) {
    const auto& hr = fc.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
    const auto& G = fc.bs_irs[static_cast<std::size_t>(i)];
    return fc.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] +
           G.adjoint() * phi.conjugate().cwiseProduct(hr);
}

/// Writes one realization as (link, k, d, row, col, re, im) records.
/// k is '-' for the bs_irs link.
inline void dump_taps(const ChannelTaps& taps, std::ostream& out) {
    out.precision(17);
    out << "# link k d row col re im\n";
    const int K = taps.n_users(), D = taps.n_taps();
    for (int k = 0; k < K; ++k)
        for (int d = 0; d < D; ++d) {
            const auto& v = taps.direct[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
            for (int r = 0; r < v.size(); ++r)
                out << "direct " << k << ' ' << d << ' ' << r << " 0 "
                    << v(r).real() << ' ' << v(r).imag() << '\n';
        }
    for (int d = 0; d < D; ++d) {
        const auto& g = taps.bs_irs[static_cast<std::size_t>(d)];
        for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < g.cols(); ++c)
                out << "bs_irs - " << d << ' ' << r << ' ' << c << ' '
                    << g(r, c).real() << ' ' << g(r, c).imag() << '\n';
    }
    for (int k = 0; k < K; ++k)
        for (int d = 0; d < D; ++d) {
            const auto& v = taps.irs_user[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
            for (int r = 0; r < v.size(); ++r)
                out << "irs_user " << k << ' ' << d << ' ' << r << " 0 "
                    << v(r).real() << ' ' << v(r).imag() << '\n';
        }
}

/// Reads a dump produced by dump_taps. Dimensions must match the config.
inline ChannelTaps load_taps(std::istream& in, const SystemConfig& cfg) {
    ChannelTaps taps;
    taps.direct.assign(cfg.n_users, std::vector<Eigen::VectorXcd>(
                                        cfg.n_taps, Eigen::VectorXcd::Zero(cfg.n_tx)));
    taps.bs_irs.assign(cfg.n_taps, Eigen::MatrixXcd::Zero(cfg.n_irs, cfg.n_tx));
    taps.irs_user.assign(cfg.n_users, std::vector<Eigen::VectorXcd>(
                                          cfg.n_taps, Eigen::VectorXcd::Zero(cfg.n_irs)));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string link, kf;
        int d, r, c;
        double re, im;
        if (!(ls >> link >> kf >> d >> r >> c >> re >> im))
            throw std::runtime_error("malformed tap record: " + line);
        const int k = (kf == "-") ? 0 : std::stoi(kf);
        if (link == "direct")
            taps.direct.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(d))(r) = {re, im};
        else if (link == "bs_irs")
            taps.bs_irs.at(static_cast<std::size_t>(d))(r, c) = {re, im};
        else if (link == "irs_user")
            taps.irs_user.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(d))(r) = {re, im};
        else
            throw std::runtime_error("unknown link tag: " + link);
    }
    return taps;
}

}  // namespace irsofdm
