#include "hutd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace hutd::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> mask, std::size_t& targets,
                  std::size_t& background)
{
    if (scores.size() != mask.size())
        throw std::invalid_argument("roc: " + std::to_string(scores.size()) + " scores for " +
                                    std::to_string(mask.size()) + " mask pixels");
    targets = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    background = mask.size() - targets;
    if (targets == 0) throw std::invalid_argument("roc: mask has no target pixels");
    if (background == 0) throw std::invalid_argument("roc: mask has no background pixels");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("roc: non-finite score");
}

} // namespace

double auc(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size()) throw std::invalid_argument("auc: xs and ys differ in length");
    if (xs.size() < 2) throw std::invalid_argument("auc: need at least two points");
    double area = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] < xs[i - 1]) throw std::invalid_argument("auc: xs must be non-decreasing");
        area += (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) * 0.5;
    }
    return area;
}

double auc_oa(double a_df, double a_dt, double a_ft) { return a_df + a_dt - a_ft; }

double auc_snpr(double a_dt, double a_ft) { return a_ft == 0.0 ? kInfinity : a_dt / a_ft; }

RocData roc(std::span<const double> scores, std::span<const std::uint8_t> mask)
{
    std::size_t nt = 0, nb = 0;
    check_inputs(scores, mask, nt, nb);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocData r;
    r.thresholds.push_back(kInfinity);
    r.pd.push_back(0.0);
    r.pf.push_back(0.0);
    std::size_t hit_t = 0, hit_b = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double tau = scores[order[k]];
        while (k < order.size() && scores[order[k]] == tau) {
            if (mask[order[k]]) ++hit_t;
            else ++hit_b;
            ++k;
        }
        r.thresholds.push_back(tau);
        r.pd.push_back(static_cast<double>(hit_t) / static_cast<double>(nt));
        r.pf.push_back(static_cast<double>(hit_b) / static_cast<double>(nb));
    }
    r.score_max = scores[order.front()];
    r.score_min = scores[order.back()];

    r.auc_pd_pf = auc(r.pf, r.pd);

    // tau axis, ascending; the sentinel sits at the top of the range.
    if (r.score_max > r.score_min) {
        const std::size_t m = r.thresholds.size();
        std::vector<double> tau(m), pd(m), pf(m);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t src = m - 1 - i;
            const double t = r.thresholds[src];
            tau[i] = std::isinf(t) ? 1.0 : (t - r.score_min) / (r.score_max - r.score_min);
            pd[i] = r.pd[src];
            pf[i] = r.pf[src];
        }
        r.auc_pd_tau = auc(tau, pd);
        r.auc_pf_tau = auc(tau, pf);
    }
    r.auc_oa = auc_oa(r.auc_pd_pf, r.auc_pd_tau, r.auc_pf_tau);
    r.auc_snpr = auc_snpr(r.auc_pd_tau, r.auc_pf_tau);
    return r;
}

double mann_whitney(std::span<const double> scores, std::span<const std::uint8_t> mask)
{
    std::size_t nt = 0, nb = 0;
    check_inputs(scores, mask, nt, nb);
    std::vector<double> t, b;
    for (std::size_t i = 0; i < scores.size(); ++i) (mask[i] ? t : b).push_back(scores[i]);
    std::sort(b.begin(), b.end());
    // Twice the count so that ties stay integral.
    std::uint64_t twice = 0;
    for (double s : t) {
        const auto lo = std::lower_bound(b.begin(), b.end(), s);
        const auto hi = std::upper_bound(lo, b.end(), s);
        twice += 2 * static_cast<std::uint64_t>(lo - b.begin()) + static_cast<std::uint64_t>(hi - lo);
    }
    return static_cast<double>(twice) / (2.0 * static_cast<double>(nt) * static_cast<double>(nb));
}

std::pair<double, double> auc_oracle_check(std::span<const double> scores, std::span<const std::uint8_t> mask)
{
    return {roc(scores, mask).auc_pd_pf, mann_whitney(scores, mask)};
}

void save_auc_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("auc csv: cannot write " + path.string());
    os.precision(17);
    os << "detector,auc_pd_pf,auc_pd_tau,auc_pf_tau,auc_oa,auc_snpr\n";
    for (const auto& r : rows) {
        os << r.name << "," << r.roc.auc_pd_pf << "," << r.roc.auc_pd_tau << "," << r.roc.auc_pf_tau << ","
           << r.roc.auc_oa << ",";
        if (std::isinf(r.roc.auc_snpr)) os << "inf";
        else os << r.roc.auc_snpr;
        os << "\n";
    }
}

void save_roc_csv(const RocData& roc, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("roc csv: cannot write " + path.string());
    os.precision(17);
    os << "tau,tau_normalized,pd,pf\n";
    const double span = roc.score_max - roc.score_min;
    for (std::size_t i = 0; i < roc.thresholds.size(); ++i) {
        const double t = roc.thresholds[i];
        if (std::isinf(t)) os << "inf,";
        else os << t << ",";
        if (std::isinf(t)) os << 1.0;
        else os << (span > 0.0 ? (t - roc.score_min) / span : 0.0);
        os << "," << roc.pd[i] << "," << roc.pf[i] << "\n";
    }
}

} // namespace hutd::eval
