#include "objdisc/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "objdisc/errors.hpp"

namespace objdisc {

namespace {

std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) {  // uniform in [0, n)
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = 0; i + 1 < idx.size(); ++i)
        std::swap(idx[i], idx[i + draw(rng, idx.size() - i)]);
}

void check_optimizer(const OptimizerConfig& opt) {
    if (!(opt.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (opt.momentum < 0.0 || opt.momentum >= 1.0)
        throw std::invalid_argument("momentum must lie in [0, 1)");
    if (opt.batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
}

std::string ref_str(const SupervoxelRef& r) {
    std::ostringstream s;
    s << "scale " << r.scale << " supervoxel " << r.id;
    return s.str();
}

// momentum step for a single tensor: v <- mo*v - lr*g; t <- t + v
void tensor_step(Tensor& t, const Tensor& g, Tensor& v, double lr, double mo) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        v.values[i] = mo * v.values[i] - lr * g.values[i];
        t.values[i] += v.values[i];
    }
}

void fc_forward(const Tensor& w, const Tensor& b, const std::vector<double>& in, Tensor& pre,
                Tensor& act) {
    const int rows = w.shape[0], cols = w.shape[1];
    pre = Tensor({rows});
    act = Tensor({rows});
    for (int i = 0; i < rows; ++i) {
        double s = b.values[i];
        const double* row = &w.values[static_cast<std::size_t>(i) * cols];
        for (int j = 0; j < cols; ++j) s += row[j] * in[j];
        pre.values[i] = s;
        act.values[i] = leaky(s);
    }
}

// backward through act = leaky(w*in + b); accumulates gw/gb, returns d_in
std::vector<double> fc_backward(const Tensor& w, const Tensor& pre, const std::vector<double>& in,
                                const std::vector<double>& d_act, Tensor& gw, Tensor& gb,
                                double scale) {
    const int rows = w.shape[0], cols = w.shape[1];
    std::vector<double> d_in(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
        const double d_pre = d_act[i] * leaky_grad(pre.values[i]);
        gb.values[i] += scale * d_pre;
        const double* row = &w.values[static_cast<std::size_t>(i) * cols];
        double* grow = &gw.values[static_cast<std::size_t>(i) * cols];
        for (int j = 0; j < cols; ++j) {
            grow[j] += scale * d_pre * in[j];
            d_in[j] += d_pre * row[j];
        }
    }
    return d_in;
}

}  // namespace

PairLossResult pair_loss(const std::vector<double>& e_i, const std::vector<double>& e_j, int y,
                         const LossConfig& cfg) {
    if (e_i.size() != e_j.size())
        throw std::invalid_argument("pair_loss: embedding dimensions differ");
    if (!(cfg.m > 0.0)) throw std::invalid_argument("pair_loss: margin must be positive");
    if (y != 1 && y != -1) throw std::invalid_argument("pair_loss: y must be +1 or -1");

    PairLossResult r;
    r.d_ei.assign(e_i.size(), 0.0);
    r.d_ej.assign(e_j.size(), 0.0);
    for (std::size_t k = 0; k < e_i.size(); ++k) {
        const double diff = e_i[k] - e_j[k];
        r.d2 += diff * diff;
    }
    const double arg = cfg.b - static_cast<double>(y) * (cfg.m - r.d2);
    if (arg > 0.0) {
        r.loss = arg;
        for (std::size_t k = 0; k < e_i.size(); ++k) {
            const double g = 2.0 * static_cast<double>(y) * (e_i[k] - e_j[k]);
            r.d_ei[k] = g;
            r.d_ej[k] = -g;
        }
    }
    return r;
}

void save_report(const TrainReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    out << "epoch,mean_loss,mean_pos_d2,mean_neg_d2\n";
    char buf[128];
    for (int e = 0; e < report.epochs_run(); ++e) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e, report.mean_loss[e],
                      report.mean_pos_d2[e], report.mean_neg_d2[e]);
        out << buf;
    }
    if (!out) throw data_error("write failed: " + path);
}

GridTable build_grid_table(const std::vector<SegmentationResult>& scales,
                           const LabeledCloud& cloud, int side, int padding) {
    GridTable table;
    for (std::size_t s = 0; s < scales.size(); ++s)
        for (const Supervoxel& sv : scales[s].supervoxels)
            table[{static_cast<int>(s), sv.id}] = render_occupancy(cloud, sv, side, padding);
    return table;
}

std::pair<NetworkParams, TrainReport> train_vdml(const NetworkParams& params, const PairSet& pairs,
                                                 const GridTable& grids, const LossConfig& loss_cfg,
                                                 const OptimizerConfig& opt, int epochs,
                                                 std::uint64_t rng_seed) {
    if (epochs < 1)
        throw std::invalid_argument("epochs must be at least 1; a report needs one epoch");
    if (pairs.size() == 0) throw std::invalid_argument("cannot train on an empty pair set");
    if (!(loss_cfg.m > 0.0)) throw std::invalid_argument("margin must be positive");
    check_optimizer(opt);

    std::vector<const SupervoxelPair*> all;
    all.reserve(pairs.size());
    for (const auto& p : pairs.positives) all.push_back(&p);
    for (const auto& p : pairs.negatives) all.push_back(&p);
    for (const SupervoxelPair* p : all)
        for (const SupervoxelRef& r : {p->a, p->b})
            if (grids.find(r) == grids.end())
                throw data_error("no occupancy grid for " + ref_str(r));

    NetworkParams p = params;
    Gradients velocity = zero_gradients(p);
    TrainReport report;
    std::mt19937_64 rng(rng_seed);
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_indices(order, rng);
        double loss_sum = 0.0, pos_d2 = 0.0, neg_d2 = 0.0;
        std::size_t pos_n = 0, neg_n = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            const double inv = 1.0 / static_cast<double>(stop - start);
            Gradients batch = zero_gradients(p);

            for (std::size_t k = start; k < stop; ++k) {
                const SupervoxelPair& pr = *all[order[k]];
                ForwardTrace ti, tj;
                const auto e_i = forward_embed(p, grids.at(pr.a), &ti);
                const auto e_j = forward_embed(p, grids.at(pr.b), &tj);
                const PairLossResult r = pair_loss(e_i, e_j, pr.y, loss_cfg);
                if (!std::isfinite(r.loss)) {
                    std::ostringstream msg;
                    msg << "training diverged: non-finite loss at epoch " << epoch << ", batch "
                        << start / static_cast<std::size_t>(opt.batch_size) << ", pair ("
                        << ref_str(pr.a) << ") x (" << ref_str(pr.b) << "), d2 = " << r.d2;
                    throw model_error(msg.str());
                }
                loss_sum += r.loss;
                if (pr.y > 0) {
                    pos_d2 += r.d2;
                    ++pos_n;
                } else {
                    neg_d2 += r.d2;
                    ++neg_n;
                }
                if (r.loss > 0.0) {  // flat region contributes nothing
                    accumulate(batch, backward(p, ti, r.d_ei), inv);
                    accumulate(batch, backward(p, tj, r.d_ej), inv);
                }
            }
            sgd_step(p, batch, opt.learning_rate, opt.momentum, velocity);
        }

        report.mean_loss.push_back(loss_sum / static_cast<double>(all.size()));
        report.mean_pos_d2.push_back(pos_n ? pos_d2 / static_cast<double>(pos_n) : 0.0);
        report.mean_neg_d2.push_back(neg_n ? neg_d2 / static_cast<double>(neg_n) : 0.0);

        const int e = report.epochs_run() - 1;
        if (e >= 5 && report.mean_loss[e - 5] - report.mean_loss[e] < 1e-5) {
            report.stop_reason = "converged: loss improved less than 1e-5 over 5 epochs";
            break;
        }
    }
    if (report.stop_reason.empty()) report.stop_reason = "max epochs reached";
    return {std::move(p), std::move(report)};
}

void DvcConfig::validate() const {
    base.validate();
    if (fca < 1 || fcb < 1) throw config_error("appended fully connected widths must be positive");
    if (classes < 2) throw config_error("classifier needs at least 2 classes");
}

DvcParams init_dvc_params(const DvcConfig& config, std::uint64_t seed) {
    config.validate();
    DvcParams p;
    p.config = config;
    p.backbone = init_params(config.base, seed);
    // a pinned, separate stream for the head so backbone init is unchanged
    std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
    p.fca_w = Tensor({config.fca, config.base.fc1});
    p.fca_b = Tensor({config.fca});
    p.fcb_w = Tensor({config.fcb, config.fca});
    p.fcb_b = Tensor({config.fcb});
    p.cls_w = Tensor({config.classes, config.fcb});  // zero: uniform softmax at start
    p.cls_b = Tensor({config.classes});
    glorot_fill(p.fca_w, config.base.fc1, config.fca, rng);
    glorot_fill(p.fcb_w, config.fca, config.fcb, rng);
    return p;
}

std::vector<double> dvc_forward(const DvcParams& p, const OccupancyGrid& grid, DvcTrace* trace) {
    p.config.validate();
    if (!(p.backbone.config == p.config.base))
        throw config_error("backbone configuration does not match the classifier head");
    DvcTrace local;
    DvcTrace& t = trace ? *trace : local;
    forward_embed(p.backbone, grid, &t.backbone);
    const std::vector<double>& fc1_act = t.backbone.fc1_act.values;

    fc_forward(p.fca_w, p.fca_b, fc1_act, t.fca_pre, t.fca_act);
    fc_forward(p.fcb_w, p.fcb_b, t.fca_act.values, t.fcb_pre, t.fcb_act);

    std::vector<double> logits(p.config.classes, 0.0);
    for (int k = 0; k < p.config.classes; ++k) {
        double s = p.cls_b.values[k];
        const double* row = &p.cls_w.values[static_cast<std::size_t>(k) * p.config.fcb];
        for (int j = 0; j < p.config.fcb; ++j) s += row[j] * t.fcb_act.values[j];
        logits[k] = s;
    }
    return logits;
}

std::vector<double> dvc_features(const DvcParams& p, const OccupancyGrid& grid) {
    DvcTrace t;
    dvc_forward(p, grid, &t);
    return t.fcb_act.values;
}

std::pair<DvcParams, DvcReport> train_dvc(const DvcParams& params,
                                          const std::vector<ClassifiedGrid>& examples,
                                          const OptimizerConfig& opt, int epochs,
                                          std::uint64_t rng_seed) {
    params.config.validate();
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (examples.empty()) throw std::invalid_argument("cannot train on an empty example list");
    check_optimizer(opt);
    std::set<int> classes_seen;
    for (const auto& ex : examples) {
        if (ex.class_index < 0 || ex.class_index >= params.config.classes)
            throw std::invalid_argument("class index outside the configured class count");
        classes_seen.insert(ex.class_index);
    }
    if (classes_seen.size() < 2)
        throw data_error("classification training needs at least 2 distinct classes; got " +
                         std::to_string(classes_seen.size()));

    DvcParams p = params;
    Gradients base_velocity = zero_gradients(p.backbone);
    Tensor v_fca_w(p.fca_w.shape), v_fca_b(p.fca_b.shape), v_fcb_w(p.fcb_w.shape),
        v_fcb_b(p.fcb_b.shape), v_cls_w(p.cls_w.shape), v_cls_b(p.cls_b.shape);

    DvcReport report;
    std::mt19937_64 rng(rng_seed);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_indices(order, rng);
        double ce_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            const double inv = 1.0 / static_cast<double>(stop - start);
            Gradients base_grad = zero_gradients(p.backbone);
            Tensor g_fca_w(p.fca_w.shape), g_fca_b(p.fca_b.shape), g_fcb_w(p.fcb_w.shape),
                g_fcb_b(p.fcb_b.shape), g_cls_w(p.cls_w.shape), g_cls_b(p.cls_b.shape);

            for (std::size_t k = start; k < stop; ++k) {
                const ClassifiedGrid& ex = examples[order[k]];
                DvcTrace t;
                const std::vector<double> logits = dvc_forward(p, ex.grid, &t);

                const double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0.0;
                for (double l : logits) z += std::exp(l - mx);
                const double ce = -(logits[ex.class_index] - mx - std::log(z));
                if (!std::isfinite(ce)) {
                    std::ostringstream msg;
                    msg << "training diverged: non-finite cross-entropy at epoch " << epoch
                        << ", batch " << start / static_cast<std::size_t>(opt.batch_size);
                    throw model_error(msg.str());
                }
                ce_sum += ce;
                const int pred = static_cast<int>(
                    std::max_element(logits.begin(), logits.end()) - logits.begin());
                if (pred == ex.class_index) ++correct;

                // d(ce)/d(logit_k) = softmax_k - onehot_k
                std::vector<double> d_logits(logits.size());
                for (std::size_t c = 0; c < logits.size(); ++c)
                    d_logits[c] = std::exp(logits[c] - mx) / z -
                                  (static_cast<int>(c) == ex.class_index ? 1.0 : 0.0);

                std::vector<double> d_fcb_act(p.config.fcb, 0.0);
                for (std::size_t c = 0; c < logits.size(); ++c) {
                    g_cls_b.values[c] += inv * d_logits[c];
                    const double* row = &p.cls_w.values[c * static_cast<std::size_t>(p.config.fcb)];
                    double* grow = &g_cls_w.values[c * static_cast<std::size_t>(p.config.fcb)];
                    for (int j = 0; j < p.config.fcb; ++j) {
                        grow[j] += inv * d_logits[c] * t.fcb_act.values[j];
                        d_fcb_act[j] += d_logits[c] * row[j];
                    }
                }
                const std::vector<double> d_fca_act = fc_backward(
                    p.fcb_w, t.fcb_pre, t.fca_act.values, d_fcb_act, g_fcb_w, g_fcb_b, inv);
                const std::vector<double> d_fc1_act =
                    fc_backward(p.fca_w, t.fca_pre, t.backbone.fc1_act.values, d_fca_act, g_fca_w,
                                g_fca_b, inv);
                accumulate(base_grad, backward_from_fc1(p.backbone, t.backbone, d_fc1_act), inv);
            }

            sgd_step(p.backbone, base_grad, opt.learning_rate, opt.momentum, base_velocity);
            tensor_step(p.fca_w, g_fca_w, v_fca_w, opt.learning_rate, opt.momentum);
            tensor_step(p.fca_b, g_fca_b, v_fca_b, opt.learning_rate, opt.momentum);
            tensor_step(p.fcb_w, g_fcb_w, v_fcb_w, opt.learning_rate, opt.momentum);
            tensor_step(p.fcb_b, g_fcb_b, v_fcb_b, opt.learning_rate, opt.momentum);
            tensor_step(p.cls_w, g_cls_w, v_cls_w, opt.learning_rate, opt.momentum);
            tensor_step(p.cls_b, g_cls_b, v_cls_b, opt.learning_rate, opt.momentum);
        }

        report.mean_ce.push_back(ce_sum / static_cast<double>(examples.size()));
        report.accuracy.push_back(static_cast<double>(correct) /
                                  static_cast<double>(examples.size()));
    }
    report.stop_reason = "max epochs reached";
    return {std::move(p), std::move(report)};
}

void save_dvc_report(const DvcReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    out << "epoch,mean_ce,accuracy\n";
    char buf[96];
    for (std::size_t e = 0; e < report.mean_ce.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", static_cast<int>(e),
                      report.mean_ce[e], report.accuracy[e]);
        out << buf;
    }
    if (!out) throw data_error("write failed: " + path);
}

namespace {

constexpr char kDvcMagic[8] = {'O', 'D', 'D', 'V', 'C', 'K', 'P', '\0'};
constexpr std::uint32_t kDvcVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw model_error("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::array<const Tensor*, 6> head_tensors(const DvcParams& p) {
    return {&p.fca_w, &p.fca_b, &p.fcb_w, &p.fcb_b, &p.cls_w, &p.cls_b};
}

std::array<Tensor*, 6> head_tensors(DvcParams& p) {
    return {&p.fca_w, &p.fca_b, &p.fcb_w, &p.fcb_b, &p.cls_w, &p.cls_b};
}

std::vector<std::uint32_t> dvc_config_words(const DvcConfig& c) {
    return {static_cast<std::uint32_t>(c.base.side),
            static_cast<std::uint32_t>(c.base.conv1_channels),
            static_cast<std::uint32_t>(c.base.conv1_kernel),
            static_cast<std::uint32_t>(c.base.conv1_stride),
            static_cast<std::uint32_t>(c.base.conv2_channels),
            static_cast<std::uint32_t>(c.base.conv2_kernel),
            static_cast<std::uint32_t>(c.base.conv2_stride),
            static_cast<std::uint32_t>(c.base.pool),
            static_cast<std::uint32_t>(c.base.fc1),
            static_cast<std::uint32_t>(c.base.embed_dim),
            static_cast<std::uint32_t>(c.fca),
            static_cast<std::uint32_t>(c.fcb),
            static_cast<std::uint32_t>(c.classes)};
}

}  // namespace

void save_dvc_checkpoint(const DvcParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for write: " + path);
    out.write(kDvcMagic, 8);
    put_u32(out, kDvcVersion);
    for (std::uint32_t w : dvc_config_words(params.config)) put_u32(out, w);

    auto write_values = [&](const Tensor& t) {
        put_u32(out, static_cast<std::uint32_t>(t.numel()));
        for (double v : t.values) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    };
    for (const Tensor* t : tensor_list(params.backbone)) write_values(*t);
    for (const Tensor* t : head_tensors(params)) write_values(*t);
    if (!out) throw data_error("write failed: " + path);
}

DvcParams load_dvc_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kDvcMagic, 8) != 0)
        throw model_error("not a classifier checkpoint file: " + path);
    const std::uint32_t version = get_u32(in, path);
    if (version != kDvcVersion)
        throw model_error("unsupported classifier checkpoint version " +
                          std::to_string(version) + ": " + path);

    DvcConfig cfg;
    int* fields[13] = {&cfg.base.side,           &cfg.base.conv1_channels,
                       &cfg.base.conv1_kernel,   &cfg.base.conv1_stride,
                       &cfg.base.conv2_channels, &cfg.base.conv2_kernel,
                       &cfg.base.conv2_stride,   &cfg.base.pool,
                       &cfg.base.fc1,            &cfg.base.embed_dim,
                       &cfg.fca,                 &cfg.fcb,
                       &cfg.classes};
    for (int* f : fields) *f = static_cast<int>(get_u32(in, path));
    cfg.validate();

    DvcParams params = init_dvc_params(cfg, 0);
    auto read_values = [&](Tensor& t) {
        const std::uint32_t n = get_u32(in, path);
        if (n != t.numel()) throw model_error("tensor size mismatch in checkpoint: " + path);
        for (double& v : t.values) {
            const std::uint32_t bits = get_u32(in, path);
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
    };
    for (Tensor* t : tensor_list(params.backbone)) read_values(*t);
    for (Tensor* t : head_tensors(params)) read_values(*t);
    return params;
}

}  // namespace objdisc
