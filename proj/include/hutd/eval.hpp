#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hutd::eval {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct RocData {
    // Descending: +inf sentinel first, then every distinct score.
    std::vector<double> thresholds;
    std::vector<double> pd;
    std::vector<double> pf;
    double score_min = 0.0;
    double score_max = 0.0;
    double auc_pd_pf = 0.0;
    double auc_pd_tau = 0.0;   // tau min-max normalised to [0, 1]
    double auc_pf_tau = 0.0;
    double auc_oa = 0.0;
    double auc_snpr = 0.0;
};

// Exact threshold sweep; P = |{score >= tau}| / count per class.
RocData roc(std::span<const double> scores, std::span<const std::uint8_t> mask);

// Trapezoid rule; xs must be non-decreasing.
double auc(std::span<const double> xs, std::span<const double> ys);
double auc_oa(double a_df, double a_dt, double a_ft);
// +inf when a_ft == 0.
double auc_snpr(double a_dt, double a_ft);

// Probability that a random target outscores a random background pixel,
// ties counted one half.
double mann_whitney(std::span<const double> scores, std::span<const std::uint8_t> mask);
// (trapezoid AUC(P_d, P_f), Mann-Whitney)
std::pair<double, double> auc_oracle_check(std::span<const double> scores, std::span<const std::uint8_t> mask);

struct ReportRow {
    std::string name;
    RocData roc;
};

// detector,auc_pd_pf,auc_pd_tau,auc_pf_tau,auc_oa,auc_snpr
void save_auc_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
// tau,tau_normalized,pd,pf
void save_roc_csv(const RocData& roc, const std::filesystem::path& path);

} // namespace hutd::eval
