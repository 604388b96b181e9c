#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "irsofdm/channel.hpp"
#include "irsofdm/optimizer.hpp"
#include "irsofdm/oracle.hpp"
#include "irsofdm/rng.hpp"
#include "irsofdm/scenario.hpp"

namespace irsofdm {

struct SchemeSpec {
    enum Kind { proposed_cont, proposed_quant, random_irs, no_irs };
    Kind kind = proposed_cont;
    int bits = 0;  // proposed_quant only

    std::string label() const {
        switch (kind) {
            case proposed_cont: return "proposed_cont";
            case proposed_quant: return "proposed_b" + std::to_string(bits);
            case random_irs: return "random_irs";
            case no_irs: return "no_irs";
        }
        return "?";
    }

    static SchemeSpec parse(const std::string& s) {
        SchemeSpec spec;
        if (s == "proposed_cont") spec.kind = proposed_cont;
        else if (s == "random_irs") spec.kind = random_irs;
        else if (s == "no_irs") spec.kind = no_irs;
        else if (s.rfind("proposed_b", 0) == 0) {
            spec.kind = proposed_quant;
            spec.bits = std::stoi(s.substr(10));
            if (spec.bits < 1) throw std::invalid_argument("scheme bits must be >= 1");
        } else {
            throw std::invalid_argument("unknown scheme: " + s);
        }
        return spec;
    }
};

struct SweepSpec {
    enum Variable { tx_power, n_irs, quant_bits, none };
    Variable variable = none;
    std::vector<double> values;  // strictly increasing; ignored for `none`
    int n_trials = 100;
    Scenario base;
    std::vector<SchemeSpec> schemes;
    StoppingRule stopping;
    int n_threads = 1;

    void validate() const {
        if (schemes.empty()) throw std::invalid_argument("sweep: scheme list is empty");
        if (n_trials < 1) throw std::invalid_argument("sweep: n_trials must be >= 1");
        if (variable != none) {
            if (values.empty()) throw std::invalid_argument("sweep: values list is empty");
            for (std::size_t j = 1; j < values.size(); ++j)
                if (values[j] <= values[j - 1])
                    throw std::invalid_argument("sweep: values must be strictly increasing");
        }
    }
};

struct TrialResult {
    double sweep_value = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    std::string scheme;
    double sum_rate = 0.0;
    int outer_iters = 0;
    long inner_sweeps_total = 0;
    double wall_time = 0.0;
    std::uint64_t channel_hash = 0;
    bool failed = false;
    std::string error;
};

struct SweepResults {
    SweepSpec::Variable variable = SweepSpec::none;
    std::vector<TrialResult> trials;
};

namespace detail {

inline void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t j = 0; j < n; ++j) {
        h ^= p[j];
        h *= 0x100000001b3ULL;  // FNV-1a
    }
}

inline std::uint64_t hash_taps(const ChannelTaps& taps) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& user : taps.direct)
        for (const auto& v : user)
            hash_bytes(h, v.data(), sizeof(cplx) * static_cast<std::size_t>(v.size()));
    for (const auto& g : taps.bs_irs)
        hash_bytes(h, g.data(), sizeof(cplx) * static_cast<std::size_t>(g.size()));
    for (const auto& user : taps.irs_user)
        for (const auto& v : user)
            hash_bytes(h, v.data(), sizeof(cplx) * static_cast<std::size_t>(v.size()));
    return h;
}

// Seed stream ids. Proposed schemes share one init stream so quantized and
// continuous variants start from the same underlying phase angles.
inline constexpr std::uint64_t kChannelStream = 1;
inline constexpr std::uint64_t kProposedInitStream = 2;
inline constexpr std::uint64_t kRandomIrsStream = 3;
inline constexpr std::uint64_t kNoIrsStream = 4;

inline void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    if (n_threads <= 1) {
        for (int j = 0; j < n; ++j) fn(j);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(n_threads, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (int j = next.fetch_add(1); j < n; j = next.fetch_add(1)) fn(j);
        });
    for (auto& th : pool) th.join();
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// One (sweep value, trial, scheme) cell on a fixed channel realization.
inline TrialResult run_trial_scheme(const Scenario& sc, const FrequencyChannels& fc,
                                    const SchemeSpec& scheme, std::uint64_t master,
                                    int trial, const StoppingRule& stop) {
    TrialResult res;
    res.trial = trial;
    res.scheme = scheme.label();
    const auto t0 = std::chrono::steady_clock::now();
    SystemConfig cfg = sc.sys;
    switch (scheme.kind) {
        case SchemeSpec::proposed_cont:
        case SchemeSpec::proposed_quant: {
            if (scheme.kind == SchemeSpec::proposed_cont) cfg.quant_bits.reset();
            else cfg.quant_bits = scheme.bits;
            res.seed = derive_seed(master, detail::kProposedInitStream,
                                   static_cast<std::uint64_t>(trial));
            auto rng = make_engine(res.seed);
            const OptimizerState st = run(cfg, fc, rng, stop);
            res.sum_rate = st.trace.empty() ? 0.0 : st.trace.back().sum_rate;
            res.outer_iters = st.outer_iters;
            res.inner_sweeps_total = st.inner_sweeps_total;
            break;
        }
        case SchemeSpec::random_irs:
        case SchemeSpec::no_irs: {
            const bool rnd = scheme.kind == SchemeSpec::random_irs;
            res.seed = derive_seed(master,
                                   rnd ? detail::kRandomIrsStream : detail::kNoIrsStream,
                                   static_cast<std::uint64_t>(trial));
            auto rng = make_engine(res.seed);
            const auto bl = oracle::baseline(
                fc, rnd ? oracle::BaselineMode::random_irs : oracle::BaselineMode::no_irs,
                cfg, rng, stop);
            res.sum_rate = bl.sum_rate;
            res.outer_iters = bl.state.outer_iters;
            break;
        }
    }
    res.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Runs every sweep value x trial x scheme cell. All schemes of one cell
/// consume the same channel realization (paired comparison); channel seeds
/// depend only on the trial index so pairing also holds across sweep
/// values whenever the channel dimensions allow it. Failed trials are
/// recorded with the error message and a warning, never dropped silently.
inline SweepResults run_sweep(const SweepSpec& spec) {
    spec.validate();
    spec.base.sys.validate();
    const std::uint64_t master = spec.base.sys.rng_seed;
    const std::vector<double> values =
        spec.variable == SweepSpec::none ? std::vector<double>{0.0} : spec.values;

    SweepResults results;
    results.variable = spec.variable;
    const int cells = static_cast<int>(values.size()) * spec.n_trials;
    std::vector<std::vector<TrialResult>> rows(static_cast<std::size_t>(cells));

    detail::parallel_for(cells, spec.n_threads, [&](int cell) {
        const int vi = cell / spec.n_trials;
        const int trial = cell % spec.n_trials;
        const double value = values[static_cast<std::size_t>(vi)];

        Scenario sc = spec.base;
        std::vector<SchemeSpec> schemes = spec.schemes;
        switch (spec.variable) {
            case SweepSpec::tx_power: sc.sys.tx_power = value; break;
            case SweepSpec::n_irs: sc.sys.n_irs = static_cast<int>(value); break;
            case SweepSpec::quant_bits:
                for (auto& s : schemes)
                    if (s.kind == SchemeSpec::proposed_quant)
                        s.bits = static_cast<int>(value);
                break;
            case SweepSpec::none: break;
        }

        auto& out = rows[static_cast<std::size_t>(cell)];
        std::uint64_t channel_hash = 0;
        FrequencyChannels fc;
        bool channel_ok = true;
        std::string channel_error;
        try {
            auto chan_rng = make_engine(derive_seed(master, detail::kChannelStream,
                                                    static_cast<std::uint64_t>(trial)));
            sc.geo.d_bs_user = sample_user_distances(sc.geo, sc.sys.n_users, chan_rng);
            const ChannelTaps taps = sample_taps(sc.sys, sc.geo, chan_rng);
            channel_hash = detail::hash_taps(taps);
            fc = to_frequency(taps, sc.sys.n_subcarriers);
        } catch (const std::exception& e) {
            channel_ok = false;
            channel_error = e.what();
        }

        for (const auto& scheme : schemes) {
            TrialResult res;
            if (!channel_ok) {
                res.trial = trial;
                res.scheme = scheme.label();
                res.failed = true;
                res.error = channel_error;
            } else {
                try {
                    res = run_trial_scheme(sc, fc, scheme, master, trial, spec.stopping);
                } catch (const std::exception& e) {
                    res.trial = trial;
                    res.scheme = scheme.label();
                    res.failed = true;
                    res.error = e.what();
                }
            }
            res.sweep_value = value;
            res.channel_hash = channel_hash;
            if (res.failed)
                std::cerr << "warning: trial " << trial << " scheme " << res.scheme
                          << " failed: " << res.error << '\n';
            out.push_back(std::move(res));
        }
    });

    for (auto& cell : rows)
        for (auto& r : cell) results.trials.push_back(std::move(r));
    return results;
}

struct AggregateRow {
    double sweep_value = 0.0;
    std::string scheme;
    double mean_rate = 0.0;
    double stderr_rate = 0.0;
    double mean_iters = 0.0;
    int n_trials = 0;
};

inline std::vector<AggregateRow> aggregate(const SweepResults& results) {
    std::vector<AggregateRow> rows;
    auto find = [&](double v, const std::string& s) -> AggregateRow& {
        for (auto& r : rows)
            if (r.sweep_value == v && r.scheme == s) return r;
        rows.push_back({v, s, 0.0, 0.0, 0.0, 0});
        return rows.back();
    };
    for (const auto& t : results.trials) {
        if (t.failed) continue;
        auto& r = find(t.sweep_value, t.scheme);
        r.mean_rate += t.sum_rate;
        r.mean_iters += t.outer_iters;
        ++r.n_trials;
    }
    for (auto& r : rows) {
        if (r.n_trials == 0) continue;
        r.mean_rate /= r.n_trials;
        r.mean_iters /= r.n_trials;
    }
    for (const auto& t : results.trials) {
        if (t.failed) continue;
        auto& r = find(t.sweep_value, t.scheme);
        const double d = t.sum_rate - r.mean_rate;
        r.stderr_rate += d * d;
    }
    for (auto& r : rows)
        if (r.n_trials > 1)
            r.stderr_rate = std::sqrt(r.stderr_rate / (r.n_trials - 1) / r.n_trials);
        else
            r.stderr_rate = 0.0;
    return rows;
}

enum class EmitFormat { tsv, jsonl };

/// Writes the aggregated table and the per-trial raw rows under `dir`.
/// Output is byte-stable for identical inputs.
inline std::vector<std::filesystem::path> emit(const SweepResults& results,
                                               const std::filesystem::path& dir,
                                               EmitFormat format = EmitFormat::tsv) {
    if (results.trials.empty())
        throw std::invalid_argument("emit: no trial results to write");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    const auto rows = aggregate(results);
    const bool tsv = format == EmitFormat::tsv;
    const auto summary_path = dir / (tsv ? "summary.tsv" : "summary.jsonl");
    const auto trials_path = dir / (tsv ? "trials.tsv" : "trials.jsonl");

    std::ofstream summary(summary_path);
    std::ofstream trials(trials_path);
    if (!summary || !trials)
        throw std::runtime_error("emit: cannot write to " + dir.string());

    using detail::fmt_double;
    if (tsv) {
        summary << "sweep_value\tscheme\tmean_rate\tstderr\tmean_iters\tn_trials\n";
        for (const auto& r : rows)
            summary << fmt_double(r.sweep_value) << '\t' << r.scheme << '\t'
                    << fmt_double(r.mean_rate) << '\t' << fmt_double(r.stderr_rate) << '\t'
                    << fmt_double(r.mean_iters) << '\t' << r.n_trials << '\n';
        // wall_time stays in memory only: emitted files must be
        // byte-identical across reruns of the same seed.
        trials << "sweep_value\tscheme\ttrial\tseed\tsum_rate\touter_iters\t"
                  "inner_sweeps\tchannel_hash\tfailed\terror\n";
        for (const auto& t : results.trials)
            trials << fmt_double(t.sweep_value) << '\t' << t.scheme << '\t' << t.trial
                   << '\t' << t.seed << '\t' << fmt_double(t.sum_rate) << '\t'
                   << t.outer_iters << '\t' << t.inner_sweeps_total << '\t'
                   << t.channel_hash << '\t' << (t.failed ? 1 : 0) << '\t' << t.error
                   << '\n';
    } else {
        for (const auto& r : rows)
            summary << "{\"sweep_value\":" << fmt_double(r.sweep_value) << ",\"scheme\":\""
                    << r.scheme << "\",\"mean_rate\":" << fmt_double(r.mean_rate)
                    << ",\"stderr\":" << fmt_double(r.stderr_rate)
                    << ",\"mean_iters\":" << fmt_double(r.mean_iters)
                    << ",\"n_trials\":" << r.n_trials << "}\n";
        for (const auto& t : results.trials)
            trials << "{\"sweep_value\":" << fmt_double(t.sweep_value) << ",\"scheme\":\""
                   << t.scheme << "\",\"trial\":" << t.trial << ",\"seed\":" << t.seed
                   << ",\"sum_rate\":" << fmt_double(t.sum_rate)
                   << ",\"outer_iters\":" << t.outer_iters
                   << ",\"inner_sweeps\":" << t.inner_sweeps_total
                   << ",\"channel_hash\":" << t.channel_hash
                   << ",\"failed\":" << (t.failed ? "true" : "false") << ",\"error\":\""
                   << t.error << "\"}\n";
    }
    return {summary_path, trials_path};
}

/// Per-iteration convergence trace of one optimizer run.
inline void write_trace(const OptimizerState& state, std::ostream& out) {
    using detail::fmt_double;
    out << "iter\twmmse_objective\tsum_rate\tpower_residual\tphi_feasibility_residual\n";
    for (const auto& r : state.trace)
        out << r.iter << '\t' << fmt_double(r.objective) << '\t' << fmt_double(r.sum_rate)
            << '\t' << fmt_double(r.power_residual) << '\t' << fmt_double(r.phi_residual)
            << '\n';
}

}  // namespace irsofdm
