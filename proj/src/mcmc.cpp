#include "salmon/mcmc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "salmon/errors.hpp"

namespace salmon::mcmc {

std::vector<double> DrawMatrix::column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = data[r * cols + c];
    return out;
}

std::uint64_t chain_seed(std::uint64_t base, std::size_t chain) {
    // splitmix64 finalizer over base and chain index
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(chain) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

struct WindowStats {
    std::size_t n = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd m2;

    void reset(std::size_t d) {
        n = 0;
        mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        m2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    }
    void push(const Eigen::VectorXd& x) {
        ++n;
        Eigen::VectorXd delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean).transpose();
    }
};

struct Block {
    std::vector<std::size_t> idx;
    Eigen::MatrixXd chol;
    double log_scale = 0.0;
    std::size_t rm_step = 0;
    std::size_t warm_accepts = 0, warm_tries = 0;
    std::size_t accepts = 0, tries = 0;
    std::size_t win_accepts = 0, win_tries = 0;
    std::vector<double> window_acceptance;
    WindowStats stats;
};

std::vector<std::size_t> window_schedule(std::size_t n_warmup) {
    std::vector<std::size_t> ends;
    if (n_warmup < 150) return ends;
    const std::size_t begin = n_warmup * 15 / 100;
    const std::size_t end = n_warmup - n_warmup / 10;
    std::size_t start = begin;
    std::size_t size = 50;
    while (start < end) {
        std::size_t stop = start + size;
        if (stop + 2 * size > end) stop = end;
        ends.push_back(stop);
        start = stop;
        size *= 2;
    }
    return ends;
}

double safe_eval(const LogDensity& f, std::span<const double> x) {
    try {
        const double v = f(x);
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    } catch (const DomainError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

}  // namespace

PosteriorChain run_chain(const LogDensity& log_density, std::vector<double> init, const ChainSettings& settings,
                         const std::vector<std::string>& names, std::size_t chain_id) {
    if (settings.n_warmup == 0 || settings.n_iter == 0) throw ValidationError("n_warmup and n_iter must be > 0");
    if (settings.thin == 0) throw ValidationError("thin must be > 0");
    const std::size_t dim = init.size();
    if (dim == 0) throw ValidationError("empty parameter vector");

    double lp = safe_eval(log_density, init);
    if (!std::isfinite(lp)) {
        std::ostringstream msg;
        msg << "initial log-posterior is not finite (" << lp << ")";
        std::size_t shown = 0;
        for (std::size_t k = 0; k < dim && shown < 12; ++k) {
            if (!std::isfinite(init[k])) {
                msg << "; " << (k < names.size() ? names[k] : "x" + std::to_string(k)) << "=" << init[k];
                ++shown;
            }
        }
        if (shown == 0) msg << "; all " << dim << " coordinates finite, density rejects the point";
        throw InitializationError(msg.str());
    }

    std::vector<std::vector<std::size_t>> layout = settings.blocks;
    if (layout.empty()) {
        layout.emplace_back(dim);
        std::iota(layout.back().begin(), layout.back().end(), std::size_t{0});
    }

    std::vector<Block> blocks(layout.size());
    for (std::size_t b = 0; b < layout.size(); ++b) {
        auto& blk = blocks[b];
        blk.idx = layout[b];
        for (auto k : blk.idx)
            if (k >= dim) throw ValidationError("block index out of range");
        const auto d = static_cast<Eigen::Index>(blk.idx.size());
        blk.chol = Eigen::MatrixXd::Identity(d, d) * settings.initial_scale;
        blk.stats.reset(blk.idx.size());
    }

    std::seed_seq seq{static_cast<std::uint32_t>(settings.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(settings.seed >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const auto windows = window_schedule(settings.n_warmup);
    const std::size_t window_begin = settings.n_warmup * 15 / 100;
    std::size_t next_window = 0;

    const std::size_t n_keep = (settings.n_iter + settings.thin - 1) / settings.thin;
    PosteriorChain chain;
    chain.chain_id = chain_id;
    chain.seed = settings.seed;
    chain.names = names;
    chain.draws = DrawMatrix(n_keep, dim);
    chain.log_posterior.reserve(n_keep);

    std::vector<double> x = std::move(init);
    std::vector<double> y = x;
    Eigen::VectorXd z, step, xb;
    std::size_t kept = 0;
    const std::size_t total = settings.n_warmup + settings.n_iter;

    for (std::size_t it = 0; it < total; ++it) {
        const bool warming = it < settings.n_warmup;
        for (auto& blk : blocks) {
            const auto d = static_cast<Eigen::Index>(blk.idx.size());
            z.resize(d);
            for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng);
            step = std::exp(blk.log_scale) * (blk.chol * z);
            for (Eigen::Index j = 0; j < d; ++j) y[blk.idx[static_cast<std::size_t>(j)]] += step(j);
            const double lp_new = safe_eval(log_density, y);
            const bool accept = std::isfinite(lp_new) && std::log(unif(rng)) < lp_new - lp;
            if (accept) {
                for (auto k : blk.idx) x[k] = y[k];
                lp = lp_new;
            } else {
                for (auto k : blk.idx) y[k] = x[k];
            }
            if (warming) {
                ++blk.warm_tries;
                blk.warm_accepts += accept;
                ++blk.win_tries;
                blk.win_accepts += accept;
                if (settings.adapt) {
                    const double gain = 1.0 / std::pow(static_cast<double>(blk.rm_step) + 5.0, 0.6);
                    blk.log_scale += gain * ((accept ? 1.0 : 0.0) - settings.target_accept);
                    ++blk.rm_step;
                }
            } else {
                ++blk.tries;
                blk.accepts += accept;
            }
        }

        if (warming && settings.adapt && it >= window_begin && next_window < windows.size()) {
            for (auto& blk : blocks) {
                xb.resize(static_cast<Eigen::Index>(blk.idx.size()));
                for (std::size_t j = 0; j < blk.idx.size(); ++j) xb(static_cast<Eigen::Index>(j)) = x[blk.idx[j]];
                blk.stats.push(xb);
            }
            if (it + 1 == windows[next_window]) {
                for (auto& blk : blocks) {
                    const auto d = static_cast<Eigen::Index>(blk.idx.size());
                    const double n = static_cast<double>(blk.stats.n);
                    if (blk.stats.n > 2) {
                        Eigen::MatrixXd cov = blk.stats.m2 / (n - 1.0);
                        cov = (n / (n + 5.0)) * cov +
                              1e-3 * (5.0 / (n + 5.0)) * Eigen::MatrixXd::Identity(d, d);
                        Eigen::LLT<Eigen::MatrixXd> llt(cov);
                        if (llt.info() == Eigen::Success) {
                            blk.chol = llt.matrixL();
                            blk.log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
                            blk.rm_step = 0;
                        }
                    }
                    blk.window_acceptance.push_back(blk.win_tries ? static_cast<double>(blk.win_accepts) /
                                                                            static_cast<double>(blk.win_tries)
                                                                  : 0.0);
                    blk.win_accepts = blk.win_tries = 0;
                    blk.stats.reset(blk.idx.size());
                }
                ++next_window;
            }
        }

        if (!warming && (it - settings.n_warmup) % settings.thin == 0) {
            std::copy(x.begin(), x.end(), chain.draws.row(kept).begin());
            chain.log_posterior.push_back(lp);
            ++kept;
        }
    }

    for (const auto& blk : blocks) {
        BlockState st;
        st.indices = blk.idx;
        st.scale = std::exp(blk.log_scale);
        const auto d = blk.chol.rows();
        st.chol.reserve(static_cast<std::size_t>(d * d));
        for (Eigen::Index r = 0; r < d; ++r)
            for (Eigen::Index c = 0; c < d; ++c) st.chol.push_back(blk.chol(r, c));
        st.warmup_acceptance =
                blk.warm_tries ? static_cast<double>(blk.warm_accepts) / static_cast<double>(blk.warm_tries) : 0.0;
        st.acceptance = blk.tries ? static_cast<double>(blk.accepts) / static_cast<double>(blk.tries) : 0.0;
        st.window_acceptance = blk.window_acceptance;
        chain.blocks.push_back(std::move(st));
    }
    return chain;
}

std::vector<PosteriorChain> run_chains(const LogDensity& log_density, const std::vector<std::vector<double>>& inits,
                                       const ChainSettings& settings, const std::vector<std::string>& names) {
    std::vector<PosteriorChain> chains(inits.size());
    std::vector<std::exception_ptr> errors(inits.size());
    std::vector<std::thread> workers;
    workers.reserve(inits.size());
    for (std::size_t k = 0; k < inits.size(); ++k) {
        workers.emplace_back([&, k] {
            try {
                ChainSettings s = settings;
                s.seed = chain_seed(settings.seed, k);
                chains[k] = run_chain(log_density, inits[k], s, names, k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return chains;
}

// --- diagnostics -----------------------------------------------------------

bool DiagnosticsReport::passed() const {
    return std::none_of(params.begin(), params.end(), [](const auto& p) { return p.flagged; });
}

std::vector<std::string> DiagnosticsReport::flagged() const {
    std::vector<std::string> out;
    for (const auto& p : params)
        if (p.flagged) out.push_back(p.name);
    return out;
}

double DiagnosticsReport::max_rhat() const {
    double m = 0.0;
    for (const auto& p : params)
        if (!p.degenerate) m = std::max(m, p.rhat);
    return m;
}

double DiagnosticsReport::min_ess() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : params)
        if (!p.degenerate) m = std::min(m, p.ess);
    return m;
}

namespace {

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double var_of(std::span<const double> x) {
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

std::size_t min_length(const std::vector<std::vector<double>>& chains) {
    std::size_t n = std::numeric_limits<std::size_t>::max();
    for (const auto& c : chains) n = std::min(n, c.size());
    return chains.empty() ? 0 : n;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
    const std::size_t n_full = min_length(chains);
    const std::size_t half = n_full / 2;
    if (chains.empty() || half < 2) throw ValidationError("split R-hat needs at least 4 draws per chain");
    std::vector<std::span<const double>> parts;
    for (const auto& c : chains) {
        parts.emplace_back(c.data(), half);
        parts.emplace_back(c.data() + (n_full - half), half);
    }
    const double n = static_cast<double>(half);
    std::vector<double> means, vars;
    for (auto p : parts) {
        means.push_back(mean_of(p));
        vars.push_back(var_of(p));
    }
    const double W = mean_of(vars);
    const double B_over_n = var_of(means);
    const double var_plus = (n - 1.0) / n * W + B_over_n;
    if (W <= 0.0) return var_plus > 0.0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(var_plus / W);
}

std::vector<double> autocorrelation(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    std::size_t nfft = 1;
    while (nfft < 2 * n) nfft <<= 1;
    const double m = mean_of(x);
    std::vector<double> padded(nfft, 0.0);
    for (std::size_t k = 0; k < n; ++k) padded[k] = x[k] - m;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, padded);
    for (auto& c : freq) c = std::complex<double>(std::norm(c), 0.0);
    std::vector<double> acov;
    fft.inv(acov, freq);
    std::vector<double> out(n);
    const double var0 = acov[0];
    for (std::size_t k = 0; k < n; ++k) out[k] = var0 > 0.0 ? acov[k] / var0 : 0.0;
    return out;
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
    const std::size_t n_sz = min_length(chains);
    if (chains.empty() || n_sz < 4) throw ValidationError("ESS needs at least 4 draws per chain");
    const double n = static_cast<double>(n_sz);
    const double m = static_cast<double>(chains.size());

    std::vector<std::vector<double>> acov(chains.size());
    std::vector<double> means, vars;
    for (std::size_t j = 0; j < chains.size(); ++j) {
        std::span<const double> c(chains[j].data(), n_sz);
        const auto rho = autocorrelation(c);
        const double v = var_of(c);
        means.push_back(mean_of(c));
        vars.push_back(v);
        acov[j].resize(n_sz);
        const double biased_var = v * (n - 1.0) / n;
        for (std::size_t t = 0; t < n_sz; ++t) acov[j][t] = rho[t] * biased_var;
    }
    const double W = mean_of(vars);
    const double B_over_n = chains.size() > 1 ? var_of(means) : 0.0;
    const double var_plus = (n - 1.0) / n * W + B_over_n;
    if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();

    auto rho_at = [&](std::size_t t) {
        double s = 0.0;
        for (const auto& a : acov) s += a[t];
        return 1.0 - (W - s / m) / var_plus;
    };

    double tau_sum = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t + 1 < n_sz; t += 2) {
        double pair = rho_at(t) + rho_at(t + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);  // initial monotone sequence
        tau_sum += pair;
        prev_pair = pair;
    }
    const double tau = std::max(-1.0 + 2.0 * tau_sum, 1.0 / std::log10(m * n));
    return m * n / tau;
}

DiagnosticsReport diagnostics(const std::vector<DrawMatrix>& chains, const std::vector<std::string>& names,
                              double threshold) {
    if (chains.empty()) throw ValidationError("diagnostics need at least one chain");
    const std::size_t dim = chains.front().cols;
    for (const auto& c : chains)
        if (c.cols != dim) throw ValidationError("chains differ in parameter count");
    DiagnosticsReport report;
    report.threshold = threshold;
    for (std::size_t p = 0; p < dim; ++p) {
        std::vector<std::vector<double>> cols;
        for (const auto& c : chains) cols.push_back(c.column(p));
        ParamDiagnostic d;
        d.name = p < names.size() ? names[p] : "x" + std::to_string(p);
        std::vector<double> pooled;
        for (const auto& c : cols) pooled.insert(pooled.end(), c.begin(), c.end());
        d.mean = mean_of(pooled);
        d.sd = pooled.size() > 1 ? std::sqrt(var_of(pooled)) : 0.0;
        d.rhat = split_rhat(cols);
        d.ess = effective_sample_size(cols);
        d.degenerate = std::isnan(d.rhat) || std::isnan(d.ess);
        d.flagged = d.degenerate || !(d.rhat <= threshold);
        report.params.push_back(std::move(d));
    }
    return report;
}

}  // namespace salmon::mcmc
