#ifndef OBJDISC_METRICS_HPP
#define OBJDISC_METRICS_HPP

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "objdisc/cloud.hpp"
#include "objdisc/discover.hpp"

namespace objdisc {

// How "point-to-point overlap" between a ground-truth object g and a
// predicted cluster c is scored: intersection-over-union, or recall-style
// coverage |g ∩ c| / |g|.
enum class OverlapConvention { iou, recall };

std::string overlap_convention_name(OverlapConvention convention);
OverlapConvention overlap_convention_from_name(const std::string& name);

struct MatchEntry {
    int gt_id = 0;
    int cluster_id = 0;  // matched predicted id, 0 when unmatched
    double overlap = 0.0;
};

struct AccuracyResult {
    double accuracy = 0.0;
    std::vector<MatchEntry> matches;  // one entry per ground-truth object, id ascending
};

// Greedy one-to-one matching between ground-truth objects (labels >= 1) and
// predicted clusters in descending overlap order (per the chosen
// convention); an object counts as discovered when its matched cluster's
// overlap strictly exceeds tau. Ties between clusters are broken toward the
// larger cluster and then the one containing the earliest point, so every
// metric is invariant under relabeling of predicted ids.
// accuracy = discovered / |eval_ids|.
AccuracyResult accuracy(const DiscoveryResult& pred, const LabeledCloud& gt,
                        const std::set<int>& eval_ids, double tau = 0.8,
                        OverlapConvention convention = OverlapConvention::iou);

// Over- and under-segmentation failure fractions over all object points:
// f_os = 1 - n_true/n_all, f_us = n_false/n_all, where n_true counts points
// predicted as their object's matched cluster and n_false counts points
// carrying some other non-zero prediction.
std::pair<double, double> fos_fus(const DiscoveryResult& pred, const LabeledCloud& gt,
                                  OverlapConvention convention = OverlapConvention::iou);

struct DiscoveryRates {
    double r_os = 0.0, r_us = 0.0, r_gs = 0.0, r_ms = 0.0;
    // exact point accounting behind the fractions: n_gs + n_os + n_ms = n_all
    std::size_t n_gs = 0, n_os = 0, n_ms = 0, n_us = 0, n_all = 0;
};

// Per ground-truth object the best cluster is the recall-style overlap
// argmax (largest |g ∩ c|, ties toward the larger / earliest cluster).
// Object points in their best cluster feed r_gs, points in any other
// cluster feed r_os, uncovered points feed r_ms; points whose covering
// cluster has a different majority object feed r_us.
DiscoveryRates discovery_rates(const DiscoveryResult& pred, const LabeledCloud& gt);

struct MetricReport {
    double accuracy = 0.0;
    double f_os = 0.0, f_us = 0.0;
    DiscoveryRates rates;
    std::vector<MatchEntry> matches;
};

MetricReport evaluate(const DiscoveryResult& pred, const LabeledCloud& gt,
                      const std::set<int>& eval_ids, double tau = 0.8,
                      OverlapConvention convention = OverlapConvention::iou);

// CSV of `metric,percent` rows, two decimals.
void save_metrics(const MetricReport& report, const std::string& path);

}  // namespace objdisc

#endif
