#include "objdisc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "objdisc/errors.hpp"

namespace objdisc {

namespace {

using PointList = std::vector<int>;  // ascending point indices

std::size_t intersection_size(const PointList& a, const PointList& b) {
    std::size_t n = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j])
            ++i;
        else if (b[j] < a[i])
            ++j;
        else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

struct Grouped {
    std::map<int, PointList> gt;        // gt object id -> points
    std::vector<PointList> clusters;    // canonical order: size desc, first point asc
    std::vector<int> original_id;       // canonical index -> predicted id
    std::size_t n_all = 0;              // total object points
};

Grouped group(const DiscoveryResult& pred, const LabeledCloud& gt) {
    if (!gt.has_labels()) throw std::invalid_argument("ground truth cloud has no labels");
    if (pred.object_of_point.size() != gt.size())
        throw std::invalid_argument("prediction covers " +
                                    std::to_string(pred.object_of_point.size()) +
                                    " points but the ground truth has " +
                                    std::to_string(gt.size()));
    Grouped g;
    std::map<int, PointList> by_pred;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        if (gt.labels[p] > 0) {
            g.gt[gt.labels[p]].push_back(static_cast<int>(p));
            ++g.n_all;
        }
        if (pred.object_of_point[p] > 0)
            by_pred[pred.object_of_point[p]].push_back(static_cast<int>(p));
    }
    // canonical cluster order depends only on the partition, never on the
    // incoming ids, so every metric survives relabeling
    std::vector<std::pair<int, const PointList*>> order;
    for (const auto& [id, pts] : by_pred) order.push_back({id, &pts});
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second->size() != b.second->size()) return a.second->size() > b.second->size();
        return a.second->front() < b.second->front();
    });
    for (const auto& [id, pts] : order) {
        g.original_id.push_back(id);
        g.clusters.push_back(*pts);
    }
    return g;
}

double overlap_of(const PointList& gt, const PointList& cluster, OverlapConvention convention) {
    const std::size_t inter = intersection_size(gt, cluster);
    if (inter == 0) return 0.0;
    if (convention == OverlapConvention::recall)
        return static_cast<double>(inter) / static_cast<double>(gt.size());
    return static_cast<double>(inter) / static_cast<double>(gt.size() + cluster.size() - inter);
}

// greedy one-to-one matching, descending overlap; returns gt id -> canonical
// cluster index
std::map<int, std::pair<int, double>> match_greedy(const Grouped& g, OverlapConvention convention) {
    struct Cand {
        double overlap;
        int gt_id;
        int cluster;  // canonical index
    };
    std::vector<Cand> cands;
    for (const auto& [gt_id, pts] : g.gt)
        for (std::size_t c = 0; c < g.clusters.size(); ++c) {
            const double o = overlap_of(pts, g.clusters[c], convention);
            if (o > 0.0) cands.push_back({o, gt_id, static_cast<int>(c)});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
        return a.cluster < b.cluster;
    });
    std::map<int, std::pair<int, double>> matched;
    std::vector<char> cluster_taken(g.clusters.size(), 0);
    for (const Cand& c : cands) {
        if (matched.count(c.gt_id) || cluster_taken[c.cluster]) continue;
        matched[c.gt_id] = {c.cluster, c.overlap};
        cluster_taken[c.cluster] = 1;
    }
    return matched;
}

}  // namespace

std::string overlap_convention_name(OverlapConvention convention) {
    return convention == OverlapConvention::recall ? "recall" : "iou";
}

OverlapConvention overlap_convention_from_name(const std::string& name) {
    if (name == "iou") return OverlapConvention::iou;
    if (name == "recall") return OverlapConvention::recall;
    throw std::invalid_argument("unknown overlap convention: " + name);
}

AccuracyResult accuracy(const DiscoveryResult& pred, const LabeledCloud& gt,
                        const std::set<int>& eval_ids, double tau, OverlapConvention convention) {
    if (eval_ids.empty()) throw std::invalid_argument("evaluation id set is empty");
    if (!(tau >= 0.0) || tau >= 1.0)
        throw std::invalid_argument("overlap threshold must lie in [0, 1)");
    const Grouped g = group(pred, gt);
    for (int id : eval_ids)
        if (!g.gt.count(id))
            throw data_error("evaluation object " + std::to_string(id) +
                             " is absent from the ground truth");

    const auto matched = match_greedy(g, convention);
    AccuracyResult res;
    std::size_t discovered = 0;
    for (const auto& [gt_id, pts] : g.gt) {
        MatchEntry e;
        e.gt_id = gt_id;
        const auto it = matched.find(gt_id);
        if (it != matched.end()) {
            e.cluster_id = g.original_id[it->second.first];
            e.overlap = it->second.second;
        }
        res.matches.push_back(e);
        if (eval_ids.count(gt_id) && it != matched.end() && it->second.second > tau) ++discovered;
    }
    res.accuracy = static_cast<double>(discovered) / static_cast<double>(eval_ids.size());
    return res;
}

std::pair<double, double> fos_fus(const DiscoveryResult& pred, const LabeledCloud& gt,
                                  OverlapConvention convention) {
    const Grouped g = group(pred, gt);
    if (g.gt.empty()) throw data_error("ground truth labels contain no objects");
    const auto matched = match_greedy(g, convention);

    std::map<int, int> matched_original;  // gt id -> original predicted id
    for (const auto& [gt_id, m] : matched) matched_original[gt_id] = g.original_id[m.first];

    std::size_t n_true = 0, n_false = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const int label = gt.labels[p];
        if (label <= 0) continue;
        const int predicted = pred.object_of_point[p];
        const auto it = matched_original.find(label);
        if (it != matched_original.end() && predicted == it->second)
            ++n_true;
        else if (predicted > 0)
            ++n_false;
    }
    const double all = static_cast<double>(g.n_all);
    return {1.0 - static_cast<double>(n_true) / all, static_cast<double>(n_false) / all};
}

DiscoveryRates discovery_rates(const DiscoveryResult& pred, const LabeledCloud& gt) {
    const Grouped g = group(pred, gt);
    if (g.gt.empty()) throw data_error("ground truth labels contain no objects");

    // best cluster per gt object: recall-style overlap argmax (equivalently
    // the intersection argmax), canonical order on ties
    std::map<int, int> best;  // gt id -> canonical cluster index (-1 when uncovered)
    for (const auto& [gt_id, pts] : g.gt) {
        int best_c = -1;
        std::size_t best_inter = 0;
        for (std::size_t c = 0; c < g.clusters.size(); ++c) {
            const std::size_t inter = intersection_size(pts, g.clusters[c]);
            if (inter > best_inter) {
                best_inter = inter;
                best_c = static_cast<int>(c);
            }
        }
        best[gt_id] = best_c;
    }
    // majority gt object per cluster
    std::vector<int> majority(g.clusters.size(), -1);
    for (std::size_t c = 0; c < g.clusters.size(); ++c) {
        std::size_t best_count = 0;
        for (const auto& [gt_id, pts] : g.gt) {
            const std::size_t inter = intersection_size(pts, g.clusters[c]);
            if (inter > best_count) {  // map order: ties stay with the smaller gt id
                best_count = inter;
                majority[c] = gt_id;
            }
        }
    }
    std::map<int, int> canon_of_original;
    for (std::size_t c = 0; c < g.original_id.size(); ++c)
        canon_of_original[g.original_id[c]] = static_cast<int>(c);

    DiscoveryRates r;
    r.n_all = g.n_all;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const int label = gt.labels[p];
        if (label <= 0) continue;
        const int predicted = pred.object_of_point[p];
        if (predicted <= 0) {
            ++r.n_ms;
            continue;
        }
        const int canon = canon_of_original.at(predicted);
        if (canon == best.at(label))
            ++r.n_gs;
        else
            ++r.n_os;
        if (majority[canon] != label) ++r.n_us;
    }
    const double all = static_cast<double>(r.n_all);
    r.r_gs = static_cast<double>(r.n_gs) / all;
    r.r_os = static_cast<double>(r.n_os) / all;
    r.r_ms = static_cast<double>(r.n_ms) / all;
    r.r_us = static_cast<double>(r.n_us) / all;
    return r;
}

MetricReport evaluate(const DiscoveryResult& pred, const LabeledCloud& gt,
                      const std::set<int>& eval_ids, double tau, OverlapConvention convention) {
    MetricReport rep;
    AccuracyResult acc = accuracy(pred, gt, eval_ids, tau, convention);
    rep.accuracy = acc.accuracy;
    rep.matches = std::move(acc.matches);
    const auto [fos, fus] = fos_fus(pred, gt, convention);
    rep.f_os = fos;
    rep.f_us = fus;
    rep.rates = discovery_rates(pred, gt);
    return rep;
}

void save_metrics(const MetricReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    char buf[64];
    auto row = [&](const char* name, double value) {
        std::snprintf(buf, sizeof(buf), "%s,%.2f\n", name, value * 100.0);
        out << buf;
    };
    out << "metric,percent\n";
    row("accuracy", report.accuracy);
    row("f_os", report.f_os);
    row("f_us", report.f_us);
    row("r_os", report.rates.r_os);
    row("r_us", report.rates.r_us);
    row("r_gs", report.rates.r_gs);
    row("r_ms", report.rates.r_ms);
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace objdisc
