#include "objdisc/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "objdisc/errors.hpp"
#include "test_util.hpp"

using namespace objdisc;

namespace {

LabeledCloud cloud_with_labels(const std::vector<int>& labels) {
    LabeledCloud c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        c.points.push_back({0.01 * static_cast<double>(i), 0.0, 0.0});
        c.colors.push_back({128, 128, 128});
        c.labels.push_back(labels[i]);
    }
    return c;
}

DiscoveryResult prediction(const std::vector<int>& object_of_point) {
    DiscoveryResult r;
    r.object_of_point = object_of_point;
    std::map<int, int> sizes;
    for (int id : object_of_point)
        if (id > 0) ++sizes[id];
    r.object_count = static_cast<int>(sizes.size());
    for (const auto& [id, n] : sizes) r.object_sizes.push_back(n);
    return r;
}

}  // namespace

TEST_CASE("perfect prediction scores perfectly regardless of id names") {
    const LabeledCloud gt = cloud_with_labels({1, 1, 1, 2, 2, 2, 2, 0, 0});
    // same partition, permuted ids (7 and 3 instead of 1 and 2)
    const DiscoveryResult pred = prediction({7, 7, 7, 3, 3, 3, 3, 0, 0});

    const AccuracyResult acc = accuracy(pred, gt, {1, 2});
    CHECK(acc.accuracy == 1.0);
    REQUIRE(acc.matches.size() == 2);
    CHECK(acc.matches[0].gt_id == 1);
    CHECK(acc.matches[0].cluster_id == 7);
    CHECK(acc.matches[0].overlap == 1.0);
    CHECK(acc.matches[1].gt_id == 2);
    CHECK(acc.matches[1].cluster_id == 3);
    CHECK(acc.matches[1].overlap == 1.0);

    const auto [fos, fus] = fos_fus(pred, gt);
    CHECK(fos == 0.0);
    CHECK(fus == 0.0);

    const DiscoveryRates r = discovery_rates(pred, gt);
    CHECK(r.r_gs == 1.0);
    CHECK(r.r_os == 0.0);
    CHECK(r.r_ms == 0.0);
    CHECK(r.r_us == 0.0);
    CHECK(r.n_all == 7);
}

TEST_CASE("all-background prediction misses everything") {
    const LabeledCloud gt = cloud_with_labels({1, 1, 2, 2, 0});
    const DiscoveryResult pred = prediction({0, 0, 0, 0, 0});

    CHECK(accuracy(pred, gt, {1, 2}).accuracy == 0.0);
    const auto [fos, fus] = fos_fus(pred, gt);
    CHECK(fos == 1.0);
    CHECK(fus == 0.0);
    const DiscoveryRates r = discovery_rates(pred, gt);
    CHECK(r.r_ms == 1.0);
    CHECK(r.r_gs == 0.0);
    CHECK(r.n_ms == 4);
}

TEST_CASE("failure fractions on an 80/15/5 split") {
    // one object of 20 points: 16 in the matched cluster, 3 in a rival
    // cluster, 1 unassigned -> f_os = 1 - 16/20 = 0.20, f_us = 3/20 = 0.15
    std::vector<int> labels(20, 1);
    std::vector<int> pred_ids(20, 1);
    pred_ids[16] = 2;
    pred_ids[17] = 2;
    pred_ids[18] = 2;
    pred_ids[19] = 0;
    const LabeledCloud gt = cloud_with_labels(labels);
    const DiscoveryResult pred = prediction(pred_ids);

    const auto [fos, fus] = fos_fus(pred, gt);
    CHECK(fos == doctest::Approx(0.20).epsilon(1e-12));
    CHECK(fus == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("discovery threshold is strict") {
    // object of 10 points; a cluster covering exactly 8 of them and nothing
    // else has overlap 8/10 = 0.8 and must NOT count at tau = 0.8
    std::vector<int> labels(10, 1);
    const LabeledCloud gt = cloud_with_labels(labels);

    std::vector<int> eight(10, 0);
    std::fill(eight.begin(), eight.begin() + 8, 4);
    const AccuracyResult at_eight = accuracy(prediction(eight), gt, {1});
    CHECK(at_eight.accuracy == 0.0);
    CHECK(at_eight.matches[0].cluster_id == 4);
    CHECK(at_eight.matches[0].overlap == doctest::Approx(0.8).epsilon(1e-12));

    std::vector<int> nine(10, 0);
    std::fill(nine.begin(), nine.begin() + 9, 4);
    CHECK(accuracy(prediction(nine), gt, {1}).accuracy == 1.0);
}

TEST_CASE("greedy matching assigns each cluster at most once") {
    // cluster 1 overlaps object 1 strongly and object 2 weakly; object 2's
    // only other suitor is the small cluster 2. Greedy must give cluster 1
    // to object 1 and cluster 2 to object 2.
    const LabeledCloud gt = cloud_with_labels({1, 1, 1, 1, 2, 2, 2, 2});
    const DiscoveryResult pred = prediction({1, 1, 1, 1, 1, 2, 2, 0});

    const AccuracyResult acc = accuracy(pred, gt, {1, 2}, 0.5);
    REQUIRE(acc.matches.size() == 2);
    CHECK(acc.matches[0].gt_id == 1);
    CHECK(acc.matches[0].cluster_id == 1);
    CHECK(acc.matches[0].overlap == doctest::Approx(4.0 / 5.0).epsilon(1e-12));
    CHECK(acc.matches[1].gt_id == 2);
    CHECK(acc.matches[1].cluster_id == 2);
    CHECK(acc.matches[1].overlap == doctest::Approx(2.0 / 4.0).epsilon(1e-12));
    // 0.8 > 0.5 discovered; 0.5 not strictly above 0.5
    CHECK(acc.accuracy == 0.5);
}

TEST_CASE("unmatched objects report cluster id zero") {
    const LabeledCloud gt = cloud_with_labels({1, 1, 2, 2});
    const DiscoveryResult pred = prediction({5, 5, 0, 0});
    const AccuracyResult acc = accuracy(pred, gt, {1, 2});
    REQUIRE(acc.matches.size() == 2);
    CHECK(acc.matches[1].gt_id == 2);
    CHECK(acc.matches[1].cluster_id == 0);
    CHECK(acc.matches[1].overlap == 0.0);
}

TEST_CASE("argument validation") {
    const LabeledCloud gt = cloud_with_labels({1, 1, 0});
    const DiscoveryResult pred = prediction({1, 1, 0});

    SUBCASE("evaluation id absent from ground truth") {
        CHECK_THROWS_AS(accuracy(pred, gt, {1, 9}), data_error);
    }
    SUBCASE("empty evaluation set") {
        CHECK_THROWS_AS(accuracy(pred, gt, {}), std::invalid_argument);
    }
    SUBCASE("threshold out of range") {
        CHECK_THROWS_AS(accuracy(pred, gt, {1}, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(accuracy(pred, gt, {1}, -0.1), std::invalid_argument);
    }
    SUBCASE("prediction and ground truth sizes differ") {
        const DiscoveryResult shorter = prediction({1, 1});
        CHECK_THROWS_AS(accuracy(shorter, gt, {1}), std::invalid_argument);
        CHECK_THROWS_AS(fos_fus(shorter, gt), std::invalid_argument);
        CHECK_THROWS_AS(discovery_rates(shorter, gt), std::invalid_argument);
    }
    SUBCASE("unlabeled ground truth") {
        LabeledCloud unlabeled = gt;
        unlabeled.labels.clear();
        CHECK_THROWS_AS(accuracy(pred, unlabeled, {1}), std::invalid_argument);
    }
    SUBCASE("no objects in the ground truth") {
        const LabeledCloud empty_gt = cloud_with_labels({0, 0, 0});
        const DiscoveryResult p3 = prediction({0, 1, 1});
        CHECK_THROWS_AS(fos_fus(p3, empty_gt), data_error);
        CHECK_THROWS_AS(discovery_rates(p3, empty_gt), data_error);
    }
}

TEST_CASE("object split into two equal halves") {
    // best cluster is the tie-break winner; its half is good, the other half
    // is over-segmented, nothing is missed or under-segmented
    std::vector<int> labels(8, 1);
    const LabeledCloud gt = cloud_with_labels(labels);
    const DiscoveryResult pred = prediction({1, 1, 1, 1, 2, 2, 2, 2});

    const DiscoveryRates r = discovery_rates(pred, gt);
    CHECK(r.r_gs == 0.5);
    CHECK(r.r_os == 0.5);
    CHECK(r.r_ms == 0.0);
    CHECK(r.r_us == 0.0);
    CHECK(r.n_gs == 4);
    CHECK(r.n_os == 4);
}

TEST_CASE("two objects fused into one cluster") {
    // the fused cluster is each object's best cluster, so nothing counts as
    // over-segmented, but the minority object's points are under-segmented
    const LabeledCloud gt = cloud_with_labels({1, 1, 1, 1, 1, 2, 2, 2});
    const DiscoveryResult pred = prediction({6, 6, 6, 6, 6, 6, 6, 6});

    const DiscoveryRates r = discovery_rates(pred, gt);
    CHECK(r.r_gs == 1.0);
    CHECK(r.r_os == 0.0);
    CHECK(r.r_ms == 0.0);
    CHECK(r.r_us == doctest::Approx(3.0 / 8.0).epsilon(1e-12));
    CHECK(r.n_us == 3);
}

TEST_CASE("point accounting is exact on random scenes") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 20 + static_cast<int>(rng() % 181);
        const int n_objects = 1 + static_cast<int>(rng() % 5);
        const int n_clusters = static_cast<int>(rng() % 7);
        std::vector<int> labels(n), preds(n);
        for (int i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng() % static_cast<unsigned>(n_objects + 1));
            preds[i] =
                n_clusters == 0 ? 0 : static_cast<int>(rng() % static_cast<unsigned>(n_clusters + 1));
        }
        // ensure at least one labeled point so the rates are defined
        labels[0] = 1;
        const LabeledCloud gt = cloud_with_labels(labels);
        const DiscoveryResult pred = prediction(preds);

        const DiscoveryRates r = discovery_rates(pred, gt);
        CHECK(r.n_gs + r.n_os + r.n_ms == r.n_all);
        CHECK(r.n_us <= r.n_all);
        for (double v : {r.r_gs, r.r_os, r.r_ms, r.r_us}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const auto [fos, fus] = fos_fus(pred, gt);
        CHECK(fos >= 0.0);
        CHECK(fos <= 1.0);
        CHECK(fus >= 0.0);
        CHECK(fus <= 1.0);
        // n_true + n_false <= n_all  <=>  fus <= fos is false in general, but
        // 1 - fos (true fraction) + fus (false fraction) <= 1 always holds
        CHECK((1.0 - fos) + fus <= 1.0 + 1e-12);
    }
}

TEST_CASE("every metric is invariant under relabeling of predicted ids") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 30 + static_cast<int>(rng() % 120);
        std::vector<int> labels(n), preds(n);
        for (int i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng() % 4);
            preds[i] = static_cast<int>(rng() % 5);
        }
        labels[0] = 1;
        labels[1] = 2;
        const LabeledCloud gt = cloud_with_labels(labels);

        // random bijection on the non-zero ids actually used
        std::vector<int> used;
        for (int id : preds)
            if (id > 0 && std::find(used.begin(), used.end(), id) == used.end())
                used.push_back(id);
        std::vector<int> renamed = used;
        std::shuffle(renamed.begin(), renamed.end(), rng);
        const int offset = 10 + static_cast<int>(rng() % 50);
        std::vector<int> permuted(n, 0);
        for (int i = 0; i < n; ++i) {
            if (preds[i] == 0) continue;
            const auto at = std::find(used.begin(), used.end(), preds[i]) - used.begin();
            permuted[i] = renamed[at] + offset;
        }

        const DiscoveryResult a = prediction(preds);
        const DiscoveryResult b = prediction(permuted);
        const std::set<int> ids = {1, 2};

        const MetricReport ra = evaluate(a, gt, ids, 0.5);
        const MetricReport rb = evaluate(b, gt, ids, 0.5);
        CHECK(ra.accuracy == rb.accuracy);
        CHECK(ra.f_os == rb.f_os);
        CHECK(ra.f_us == rb.f_us);
        CHECK(ra.rates.r_gs == rb.rates.r_gs);
        CHECK(ra.rates.r_os == rb.rates.r_os);
        CHECK(ra.rates.r_ms == rb.rates.r_ms);
        CHECK(ra.rates.r_us == rb.rates.r_us);
        CHECK(ra.rates.n_gs == rb.rates.n_gs);
        CHECK(ra.rates.n_us == rb.rates.n_us);
        // matched overlaps agree object by object even though ids differ
        REQUIRE(ra.matches.size() == rb.matches.size());
        for (std::size_t k = 0; k < ra.matches.size(); ++k) {
            CHECK(ra.matches[k].gt_id == rb.matches[k].gt_id);
            CHECK(ra.matches[k].overlap == rb.matches[k].overlap);
        }
    }
}

TEST_CASE("recall convention scores coverage instead of iou") {
    // object of 10 points fully inside a 20-point cluster: IoU 0.5 but
    // recall-style coverage 1.0
    std::vector<int> labels(20, 0);
    std::fill(labels.begin(), labels.begin() + 10, 1);
    const LabeledCloud gt = cloud_with_labels(labels);
    const DiscoveryResult pred = prediction(std::vector<int>(20, 2));

    const AccuracyResult by_iou = accuracy(pred, gt, {1}, 0.8, OverlapConvention::iou);
    CHECK(by_iou.accuracy == 0.0);
    CHECK(by_iou.matches[0].overlap == doctest::Approx(0.5).epsilon(1e-12));

    const AccuracyResult by_recall = accuracy(pred, gt, {1}, 0.8, OverlapConvention::recall);
    CHECK(by_recall.accuracy == 1.0);
    CHECK(by_recall.matches[0].overlap == 1.0);

    CHECK(overlap_convention_from_name("iou") == OverlapConvention::iou);
    CHECK(overlap_convention_from_name("recall") == OverlapConvention::recall);
    CHECK(overlap_convention_name(OverlapConvention::recall) == "recall");
    CHECK_THROWS_AS(overlap_convention_from_name("dice"), std::invalid_argument);
}

TEST_CASE("rates pick the best cluster by coverage, not iou") {
    // object 1 = points 0..9; cluster 7 holds 6 of them plus 94 background
    // points (IoU 6/104), cluster 8 holds the remaining 4 object points only
    // (IoU 4/10). IoU would prefer cluster 8; coverage prefers cluster 7.
    std::vector<int> labels(110, 0);
    std::fill(labels.begin(), labels.begin() + 10, 1);
    std::vector<int> preds(110, 7);
    std::fill(preds.begin() + 6, preds.begin() + 10, 8);
    const LabeledCloud gt = cloud_with_labels(labels);
    const DiscoveryResult pred = prediction(preds);

    const DiscoveryRates r = discovery_rates(pred, gt);
    CHECK(r.n_gs == 6);
    CHECK(r.n_os == 4);
    CHECK(r.n_ms == 0);
}

TEST_CASE("prediction ids need not be contiguous") {
    const LabeledCloud gt = cloud_with_labels({1, 1, 1, 2, 2, 2});
    const DiscoveryResult pred = prediction({41, 41, 41, 1000, 1000, 1000});
    const MetricReport rep = evaluate(pred, gt, {1, 2});
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.rates.r_gs == 1.0);
    CHECK(rep.matches[0].cluster_id == 41);
    CHECK(rep.matches[1].cluster_id == 1000);
}

TEST_CASE("report file uses two-decimal percent rows") {
    const LabeledCloud gt = cloud_with_labels({1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2});
    // object 1: 6 of 8 in cluster 3, 1 in cluster 9, 1 missed;
    // object 2 fully in cluster 9 -> cluster 9 matches object 2
    const DiscoveryResult pred = prediction({3, 3, 3, 3, 3, 3, 9, 0, 9, 9, 9, 9});
    const MetricReport rep = evaluate(pred, gt, {1, 2}, 0.5);

    const std::string path = (testutil::scratch_dir() / "metrics.csv").string();
    save_metrics(rep, path);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "metric,percent");
    std::map<std::string, std::string> rows;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        REQUIRE(comma != std::string::npos);
        rows[line.substr(0, comma)] = line.substr(comma + 1);
        // exactly two decimals
        const std::string value = line.substr(comma + 1);
        const auto dot = value.find('.');
        REQUIRE(dot != std::string::npos);
        CHECK(value.size() - dot - 1 == 2);
    }
    REQUIRE(rows.size() == 7);
    // object 1 overlap 6/9 > 0.5, object 2 overlap 4/5 > 0.5 -> accuracy 1
    CHECK(rows.at("accuracy") == "100.00");
    // n_true = 6 + 4 = 10 of 12 -> f_os = 2/12 = 16.67%; n_false = 1 -> 8.33%
    CHECK(rows.at("f_os") == "16.67");
    CHECK(rows.at("f_us") == "8.33");
    CHECK(rows.count("r_os") == 1);
    CHECK(rows.count("r_us") == 1);
    CHECK(rows.count("r_gs") == 1);
    CHECK(rows.count("r_ms") == 1);
}
