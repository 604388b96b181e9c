#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace irsofdm {

/// System dimensions and physical parameters. All powers are linear scale
/// (watts); dB inputs are converted once at config load.
struct SystemConfig {
    int n_subcarriers = 64;  // N
    int n_tx = 8;            // N_t
    int n_users = 3;         // K
    int n_irs = 64;          // M
    int n_taps = 16;         // D
    int cp_len = 16;         // N_cp
    double noise_power = 1e-10;  // sigma^2, watts (-70 dBm)
    double tx_power = 1.0;       // P, watts
    std::optional<int> quant_bits;  // b; absent = continuous phase shifters
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (n_subcarriers < 1) throw std::invalid_argument("n_subcarriers must be >= 1");
        if (n_tx < 1) throw std::invalid_argument("n_tx must be >= 1");
        if (n_users < 1) throw std::invalid_argument("n_users must be >= 1");
        if (n_irs < 1) throw std::invalid_argument("n_irs must be >= 1");
        if (n_taps < 1 || n_taps > cp_len || cp_len > n_subcarriers)
            throw std::invalid_argument("need 1 <= n_taps <= cp_len <= n_subcarriers");
        if (n_users > n_tx)
            throw std::invalid_argument("n_users must not exceed n_tx");
        if (noise_power <= 0) throw std::invalid_argument("noise_power must be > 0");
        if (tx_power <= 0) throw std::invalid_argument("tx_power must be > 0");
        if (quant_bits && *quant_bits < 1)
            throw std::invalid_argument("quant_bits must be >= 1 when set");
    }
};

/// Link distances and path-loss exponents. BS-user distances are sampled
/// per Monte Carlo trial; the rest is fixed geometry.
struct LinkGeometry {
    double d_bs_irs = 50.0;   // d_BI
    double d_irs_user = 3.0;  // d_IU
    std::vector<double> d_bs_user;  // d_BU_k, one per user (sampled)
    double ref_loss_db = 30.0;      // attenuation at 1 m reference
    double exp_bs_irs = 2.8;
    double exp_irs_user = 2.5;
    double exp_bs_user = 3.5;

    void validate() const {
        if (d_bs_irs < 1.0 || d_irs_user < 0.0)
            throw std::invalid_argument("distances must be >= 1 m (d_irs_user >= 0)");
        if (exp_bs_irs <= 0 || exp_irs_user <= 0 || exp_bs_user <= 0)
            throw std::invalid_argument("path-loss exponents must be > 0");
        for (double d : d_bs_user) {
            if (d < d_bs_irs - d_irs_user - 1e-12 || d > d_bs_irs + d_irs_user + 1e-12)
                throw std::invalid_argument("d_bs_user outside [d_BI - d_IU, d_BI + d_IU]");
        }
    }
};

struct Scenario {
    SystemConfig sys;
    LinkGeometry geo;
};

/// Linear power gain of a link: 10^(-ref_loss_db/10) * distance^(-exponent).
inline double link_gain(double distance, double exponent, double ref_loss_db) {
    if (distance < 1.0)
        throw std::domain_error("link_gain: distance below 1 m reference");
    return std::pow(10.0, -ref_loss_db / 10.0) * std::pow(distance, -exponent);
}

/// Draws K BS-user distances uniformly from [d_BI - d_IU, d_BI + d_IU].
inline std::vector<double> sample_user_distances(const LinkGeometry& geo, int k_users,
                                                 std::mt19937_64& rng) {
    if (k_users < 1) throw std::invalid_argument("k_users must be >= 1");
    const double lo = geo.d_bs_irs - geo.d_irs_user;
    const double hi = geo.d_bs_irs + geo.d_irs_user;
    if (lo < 1.0)
        throw std::domain_error("sample_user_distances: interval extends below 1 m");
    std::vector<double> out(static_cast<std::size_t>(k_users));
    if (lo == hi) {
        for (auto& d : out) d = lo;
        return out;
    }
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& d : out) d = dist(rng);
    return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

/// Applies one key/value pair to a scenario. Keys mirror the struct fields;
/// noise_power_dbm is accepted and converted to watts on the spot.
inline void apply_config_entry(Scenario& sc, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_dbl = [&] { return std::stod(value); };
    if (key == "n_subcarriers") sc.sys.n_subcarriers = as_int();
    else if (key == "n_tx") sc.sys.n_tx = as_int();
    else if (key == "n_users") sc.sys.n_users = as_int();
    else if (key == "n_irs") sc.sys.n_irs = as_int();
    else if (key == "n_taps") sc.sys.n_taps = as_int();
    else if (key == "cp_len") sc.sys.cp_len = as_int();
    else if (key == "noise_power") sc.sys.noise_power = as_dbl();
    else if (key == "noise_power_dbm") sc.sys.noise_power = std::pow(10.0, (as_dbl() - 30.0) / 10.0);
    else if (key == "tx_power") sc.sys.tx_power = as_dbl();
    else if (key == "quant_bits") {
        if (value == "none" || value.empty()) sc.sys.quant_bits.reset();
        else sc.sys.quant_bits = as_int();
    }
    else if (key == "rng_seed") sc.sys.rng_seed = std::stoull(value);
    else if (key == "d_bs_irs") sc.geo.d_bs_irs = as_dbl();
    else if (key == "d_irs_user") sc.geo.d_irs_user = as_dbl();
    else if (key == "ref_loss_db") sc.geo.ref_loss_db = as_dbl();
    else if (key == "exp_bs_irs") sc.geo.exp_bs_irs = as_dbl();
    else if (key == "exp_irs_user") sc.geo.exp_irs_user = as_dbl();
    else if (key == "exp_bs_user") sc.geo.exp_bs_user = as_dbl();
    else throw std::invalid_argument("unknown config key: " + key);
}

/// Loads `key = value` lines; '#' starts a comment.
inline Scenario load_config(std::istream& in, Scenario base = {}) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        apply_config_entry(base, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
    return base;
}

inline Scenario load_config_file(const std::string& path, Scenario base = {}) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    return load_config(f, std::move(base));
}

}  // namespace irsofdm
