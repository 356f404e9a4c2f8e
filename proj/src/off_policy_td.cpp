#include "optd/off_policy_td.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

namespace optd {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RandomStream RandomStream::for_run(std::uint64_t base_seed, std::uint64_t run) {
    return RandomStream(splitmix64(splitmix64(base_seed) ^ splitmix64(run + 0x632be59bd9b4e019ULL)));
}

std::size_t RandomStream::index(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return std::min(k, n - 1);
}

std::size_t sample_next(const StochasticMatrix& p, std::size_t x, RandomStream& rng) {
    if (x >= p.size())
        throw StructuralError("state index out of range");
    const auto row = p.row(x);
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t k = 0; k < row.count; ++k) {
        cum += row.vals[k];
        if (u < cum)
            return row.cols[k];
    }
    // Rounding left u above the accumulated mass; take the last entry.
    return row.cols[row.count - 1];
}

void StepSchedule::validate() const {
    if (kind == Kind::constant && !(gamma > 0.0))
        throw ValidationError("constant step must be positive");
    if (kind == Kind::diminishing && !(a > 0.0 && b > 0.0))
        throw ValidationError("diminishing step needs a > 0 and b > 0");
}

void TdConfig::validate() const {
    if (!(discount > 0.0 && discount < 1.0))
        throw ValidationError("discount must lie in (0,1)");
    if (run_length == 0)
        throw ValidationError("run length must be at least 1");
    if (num_runs == 0)
        throw ValidationError("need at least one run");
    if (decimation == 0)
        throw ValidationError("decimation must be at least 1");
    step.validate();
}

void TdRunResult::write_csv(std::ostream& os) const {
    os << "iteration";
    const auto psi = final_r.size();
    for (Eigen::Index i = 0; i < psi; ++i)
        os << ",r_" << i + 1;
    os << ",norm2,td_error_mean\n";
    for (const auto& s : snapshots) {
        os << s.iteration;
        for (Eigen::Index i = 0; i < s.r.size(); ++i)
            os << ',' << format_double(s.r[i]);
        os << ',' << format_double(s.norm2) << ',' << format_double(s.td_error_mean) << '\n';
    }
}

TdRunResult run_off_policy_td(const StochasticMatrix& behavior, const StochasticMatrix& target,
                              const Vector& reward, const FeatureMatrix& phi, const TdConfig& cfg,
                              std::size_t run_index) {
    cfg.validate();
    const std::size_t n = behavior.size();
    if (target.size() != n || static_cast<std::size_t>(reward.size()) != n || phi.num_states() != n)
        throw StructuralError("TD inputs have inconsistent dimensions");
    const auto psi = static_cast<Eigen::Index>(phi.num_features());

    TdRunResult out;
    out.run_index = run_index;
    RandomStream rng = RandomStream::for_run(cfg.base_seed, run_index);
    out.seed = splitmix64(cfg.base_seed) ^ run_index;

    ParameterVector r = cfg.r0 ? *cfg.r0 : ParameterVector::Zero(psi);
    if (r.size() != psi)
        throw StructuralError("initial parameter vector has wrong length");

    std::size_t xbar = cfg.initial_state ? *cfg.initial_state : rng.index(n);
    if (xbar >= n)
        throw StructuralError("initial state out of range");
    out.initial_state = xbar;

    const Matrix& f = phi.matrix();
    out.norms.reserve(cfg.run_length);
    double block_sum = 0.0, total = 0.0, total_abs = 0.0;
    std::size_t block_count = 0;

    for (std::size_t k = 0; k < cfg.run_length; ++k) {
        const std::size_t x = sample_next(target, xbar, rng);
        const auto fb = f.row(static_cast<Eigen::Index>(xbar));
        const auto fx = f.row(static_cast<Eigen::Index>(x));
        const bool literal = cfg.fidelity == Fidelity::literal;
        const double rew = reward[static_cast<Eigen::Index>(literal ? x : xbar)];
        const double delta = rew + cfg.discount * fx.dot(r) - fb.dot(r);
        const double step = cfg.step.at(k);
        if (literal)
            r += (step * delta) * fx.transpose();
        else
            r += (step * delta) * fb.transpose();

        const double norm = r.norm();
        out.iterations_done = k + 1;
        if (!std::isfinite(norm) || norm > cfg.divergence_limit) {
            out.diverged = true;
            out.norms.push_back(norm);
            break;
        }
        out.norms.push_back(norm);
        block_sum += delta;
        total += delta;
        total_abs += std::abs(delta);
        ++block_count;
        if ((k + 1) % cfg.decimation == 0 || k + 1 == cfg.run_length) {
            out.snapshots.push_back({k + 1, r, norm, block_sum / static_cast<double>(block_count)});
            block_sum = 0.0;
            block_count = 0;
        }
        xbar = sample_next(behavior, xbar, rng);
    }
    out.final_r = r;
    const double done = static_cast<double>(std::max<std::size_t>(out.iterations_done, 1));
    out.td_error_mean = total / done;
    out.td_error_abs_mean = total_abs / done;
    return out;
}

std::vector<TdRunResult> run_off_policy_td_batch(const StochasticMatrix& behavior,
                                                 const StochasticMatrix& target, const Vector& reward,
                                                 const FeatureMatrix& phi, const TdConfig& cfg,
                                                 std::size_t threads) {
    cfg.validate();
    std::vector<TdRunResult> results(cfg.num_runs);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.num_runs; i = next++) {
            try {
                results[i] = run_off_policy_td(behavior, target, reward, phi, cfg, i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, cfg.num_runs);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (failure)
        std::rethrow_exception(failure);
    return results;
}

McEstimate estimate_projected_system_mc(const StochasticMatrix& behavior, const StochasticMatrix& target,
                                        const Vector& reward, const FeatureMatrix& phi, double discount,
                                        std::size_t samples, RandomStream& rng,
                                        std::optional<std::size_t> initial_state) {
    const std::size_t n = behavior.size();
    if (target.size() != n || static_cast<std::size_t>(reward.size()) != n || phi.num_states() != n)
        throw StructuralError("Monte-Carlo inputs have inconsistent dimensions");
    if (samples == 0)
        throw ValidationError("need at least one sample");
    const auto psi = static_cast<Eigen::Index>(phi.num_features());
    const Matrix& f = phi.matrix();

    McEstimate est;
    est.z = Matrix::Zero(psi, psi);
    est.d = Vector::Zero(psi);
    std::size_t xbar = initial_state ? *initial_state : rng.index(n);
    if (xbar >= n)
        throw StructuralError("initial state out of range");
    for (std::size_t k = 0; k < samples; ++k) {
        const std::size_t x = sample_next(target, xbar, rng);
        const Vector fb = f.row(static_cast<Eigen::Index>(xbar)).transpose();
        const Vector fx = f.row(static_cast<Eigen::Index>(x)).transpose();
        est.z.noalias() += fb * (fb - discount * fx).transpose();
        est.d += reward[static_cast<Eigen::Index>(xbar)] * fb;
        xbar = sample_next(behavior, xbar, rng);
    }
    est.samples = samples;
    est.z /= static_cast<double>(samples);
    est.d /= static_cast<double>(samples);
    return est;
}

// ---------------------------------------------------------------------------

Aggregate aggregate_runs(const std::vector<TdRunResult>& results) {
    if (results.empty())
        throw ValidationError("no runs to aggregate");
    Aggregate agg;
    const TdRunResult* first = nullptr;
    for (const auto& r : results) {
        if (r.diverged) {
            ++agg.diverged_runs;
            continue;
        }
        if (!first) {
            first = &r;
            agg.mean_final = ParameterVector::Zero(r.final_r.size());
        }
        agg.mean_final += r.final_r;
        ++agg.used_runs;
    }
    if (agg.used_runs == 0)
        throw NumericalError("all " + std::to_string(results.size()) + " runs diverged");
    agg.mean_final /= static_cast<double>(agg.used_runs);

    for (const auto& s : first->snapshots)
        agg.iterations.push_back(s.iteration);
    const std::size_t points = agg.iterations.size();
    agg.mean_norm_curve.assign(points, 0.0);
    agg.mean_r_curve.assign(points, ParameterVector::Zero(first->final_r.size()));
    for (const auto& r : results) {
        if (r.diverged)
            continue;
        if (r.snapshots.size() != points)
            throw StructuralError("runs have different snapshot grids");
        std::vector<double> curve(points);
        for (std::size_t i = 0; i < points; ++i) {
            curve[i] = r.snapshots[i].norm2;
            agg.mean_norm_curve[i] += curve[i];
            agg.mean_r_curve[i] += r.snapshots[i].r;
        }
        agg.norm_curves.push_back(std::move(curve));
    }
    const double used = static_cast<double>(agg.used_runs);
    for (std::size_t i = 0; i < points; ++i) {
        agg.mean_norm_curve[i] /= used;
        agg.mean_r_curve[i] /= used;
    }
    return agg;
}

double last_decile_slope_ratio(const std::vector<std::size_t>& iterations, const std::vector<double>& curve) {
    const std::size_t n = curve.size();
    if (iterations.size() != n)
        throw StructuralError("curve and iteration grid differ in length");
    if (n < 20)
        throw ValidationError("need at least 20 curve points to measure flattening");
    auto slope = [&](std::size_t lo, std::size_t hi) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            mx += static_cast<double>(iterations[i]);
            my += curve[i];
        }
        const double cnt = static_cast<double>(hi - lo);
        mx /= cnt;
        my /= cnt;
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double dx = static_cast<double>(iterations[i]) - mx;
            sxy += dx * (curve[i] - my);
            sxx += dx * dx;
        }
        return sxy / sxx;
    };
    double peak = 0.0;
    for (std::size_t i = 1; i < n; ++i)
        peak = std::max(peak, std::abs(curve[i] - curve[i - 1]) /
                                  static_cast<double>(iterations[i] - iterations[i - 1]));
    const double last = std::abs(slope(n - n / 10, n));
    return peak > 0.0 ? last / peak : 0.0;
}

void Aggregate::write_mean_csv(std::ostream& os) const {
    os << "iteration";
    for (Eigen::Index i = 0; i < mean_final.size(); ++i)
        os << ",r_" << i + 1;
    os << ",norm2\n";
    for (std::size_t p = 0; p < iterations.size(); ++p) {
        os << iterations[p];
        for (Eigen::Index i = 0; i < mean_r_curve[p].size(); ++i)
            os << ',' << format_double(mean_r_curve[p][i]);
        os << ',' << format_double(mean_norm_curve[p]) << '\n';
    }
}

void Aggregate::write_norm_curves_csv(std::ostream& os) const {
    os << "iteration";
    for (std::size_t r = 0; r < norm_curves.size(); ++r)
        os << ",run_" << r;
    os << '\n';
    for (std::size_t p = 0; p < iterations.size(); ++p) {
        os << iterations[p];
        for (const auto& c : norm_curves)
            os << ',' << format_double(c[p]);
        os << '\n';
    }
}

} // namespace optd
