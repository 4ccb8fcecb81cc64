#include "vlmgeo/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "vlmgeo/error.hpp"
#include "vlmgeo/rng.hpp"

namespace vlmgeo {

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct Forward {
    std::vector<double> s;  // h_t.u
    std::vector<double> alpha;
    double z = 0.0;
    double logit = 0.0;
};

Forward forward(const AttentionProbe& p, const ActivationSequence& acts) {
    if (acts.dim != p.dim()) throw Error(Errc::dimension_mismatch, "probe width differs from activation width");
    if (acts.length == 0) throw Error(Errc::invalid_argument, "empty activation sequence");
    Forward f;
    f.s.resize(acts.length);
    f.alpha.resize(acts.length);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < acts.length; ++t) {
        const auto row = acts.row(t);
        double s = 0.0;
        for (std::size_t k = 0; k < acts.dim; ++k) s += static_cast<double>(row[k]) * p.u[k];
        f.s[t] = s;
        top = std::max(top, s + p.b_att);
    }
    double total = 0.0;
    for (std::size_t t = 0; t < acts.length; ++t) {
        f.alpha[t] = std::exp(f.s[t] + p.b_att - top);
        total += f.alpha[t];
    }
    for (std::size_t t = 0; t < acts.length; ++t) {
        f.alpha[t] /= total;
        f.z += f.alpha[t] * f.s[t];
    }
    f.logit = f.z * p.w_out + p.b_out;
    return f;
}

bool all_finite(const AttentionProbe& p) {
    auto ok = [](double x) { return std::isfinite(x); };
    return std::all_of(p.u.begin(), p.u.end(), ok) && ok(p.b_att) && ok(p.w_out) && ok(p.b_out);
}

std::string echo(const ProbeTrainConfig& c) {
    std::ostringstream os;
    os << "optimizer=" << (c.optimizer == ProbeOptimizer::adam ? "adam" : "gd") << " learning_rate=" << c.learning_rate << " epochs=" << c.epochs << " batch_size=" << c.batch_size
       << " init_scale=" << c.init_scale << " init_w_out=" << c.init_w_out << " seed=" << c.seed << " early_stop_patience=" << c.early_stop_patience
       << " holdout_fraction=" << c.holdout_fraction;
    return os.str();
}

}  // namespace

ProbeOutput probe_forward(const AttentionProbe& probe, const ActivationSequence& acts) {
    auto f = forward(probe, acts);
    return {sigmoid(f.logit), std::move(f.alpha), f.z};
}

double probe_loss(const AttentionProbe& probe, std::span<const ProbeExample> batch, ProbeGradient* grad) {
    if (batch.empty()) throw Error(Errc::invalid_argument, "empty probe batch");
    const std::size_t d = probe.dim();
    if (grad) {
        grad->u.assign(d, 0.0);
        grad->b_att = grad->w_out = grad->b_out = 0.0;
    }
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        const auto f = forward(probe, *ex.acts);
        // BCE written on the logit: y*softplus(-x) + (1-y)*softplus(x)
        loss += ex.label ? softplus(-f.logit) : softplus(f.logit);
        if (!grad) continue;
        const double dlogit = (sigmoid(f.logit) - (ex.label ? 1.0 : 0.0)) * inv_n;
        grad->w_out += dlogit * f.z;
        grad->b_out += dlogit;
        // dz/du = sum_t alpha_t (1 + s_t - z) h_t; dz/db_att = 0
        const double dz = dlogit * probe.w_out;
        for (std::size_t t = 0; t < ex.acts->length; ++t) {
            const double c = dz * f.alpha[t] * (1.0 + f.s[t] - f.z);
            const auto row = ex.acts->row(t);
            for (std::size_t k = 0; k < d; ++k) grad->u[k] += c * static_cast<double>(row[k]);
        }
    }
    return loss * inv_n;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(Errc::invalid_argument, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mann-Whitney U with mid-ranks for ties.
    double rank_sum = 0.0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j + 1);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) rank_sum += mid;
        }
        i = j;
    }
    for (int l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0) throw Error(Errc::degenerate, "AUC needs both classes");
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum - p * (p + 1) / 2) / (p * n);
}

ProbeResult train_attention_probe(std::span<const ProbeExample> corpus, const std::string& concept_name,
                                  const ProbeTrainConfig& cfg, const std::string& model_id) {
    if (!(cfg.learning_rate > 0.0) || cfg.epochs < 1) {
        throw Error(Errc::invalid_argument, "probe config needs learning_rate > 0 and epochs >= 1");
    }
    if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
        throw Error(Errc::invalid_argument, "holdout_fraction must lie in (0, 1)");
    }
    if (corpus.empty()) throw Error(Errc::invalid_argument, "empty probe corpus");
    const std::size_t d = corpus.front().acts->dim;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].acts->dim != d) throw Error(Errc::dimension_mismatch, "probe corpus mixes widths");
        (corpus[i].label ? pos : neg).push_back(i);
    }
    if (pos.size() < 2 || neg.size() < 2) {
        throw Error(Errc::invalid_argument, "probe corpus for '" + concept_name + "' needs at least two examples of each class");
    }

    // Stratified split so both classes appear on both sides.
    Rng rng(derive_seed(cfg.seed, fnv1a64(concept_name)));
    rng.shuffle(pos.begin(), pos.end());
    rng.shuffle(neg.begin(), neg.end());
    std::vector<ProbeExample> train, held;
    for (const auto* cls : {&pos, &neg}) {
        const auto n_held = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(cls->size()))), 1,
            cls->size() - 1);
        for (std::size_t k = 0; k < cls->size(); ++k) {
            (k < n_held ? held : train).push_back(corpus[(*cls)[k]]);
        }
    }

    // Descent runs on tokens centered at the training mean. Softmax ignores the
    // constant shift m.u, so this only reparametrizes b_out; it removes the
    // large shared component that otherwise dictates the usable step size.
    std::vector<double> center;
    {
        std::vector<ActivationSequence> tmp;
        for (const auto& ex : train) tmp.push_back(*ex.acts);
        center = global_mean(tmp);
    }
    const std::vector<ProbeExample> held_raw = held;
    std::vector<ActivationSequence> centered;
    centered.reserve(train.size() + held.size());
    for (auto* split : {&train, &held}) {
        for (auto& ex : *split) {
            ActivationSequence c = *ex.acts;
            for (std::size_t t = 0; t < c.length; ++t) {
                auto row = c.row(t);
                for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(row[k] - center[k]);
            }
            centered.push_back(std::move(c));
            ex.acts = &centered.back();
        }
    }

    AttentionProbe p;
    p.u.resize(d);
    const double scale = cfg.init_scale / std::sqrt(static_cast<double>(d));
    for (auto& x : p.u) x = scale * rng.normal();
    p.w_out = cfg.init_w_out;

    ProbeMetrics m;
    m.train_count = train.size();
    m.heldout_count = held.size();
    m.train_loss.push_back(probe_loss(p, train));
    m.heldout_loss.push_back(probe_loss(p, held));
    AttentionProbe best = p;
    double best_held = m.heldout_loss.back();
    int since_best = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = cfg.batch_size > 0 ? static_cast<std::size_t>(cfg.batch_size) : train.size();
    ProbeGradient g;
    std::vector<ProbeExample> batch;
    // Adam state, laid out as [u..., b_att, w_out, b_out].
    const std::size_t np = d + 3;
    std::vector<double> m1(np, 0.0), m2(np, 0.0);
    long step = 0;
    auto apply = [&](std::size_t i, double& param, double grad) {
        if (cfg.optimizer == ProbeOptimizer::gd) {
            param -= cfg.learning_rate * grad;
            return;
        }
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m1[i] = b1 * m1[i] + (1 - b1) * grad;
        m2[i] = b2 * m2[i] + (1 - b2) * grad * grad;
        const double mh = m1[i] / (1 - std::pow(b1, static_cast<double>(step)));
        const double vh = m2[i] / (1 - std::pow(b2, static_cast<double>(step)));
        param -= cfg.learning_rate * mh / (std::sqrt(vh) + eps);
    };
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (bs < train.size()) rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < train.size(); start += bs) {
            batch.clear();
            for (std::size_t k = start; k < std::min(train.size(), start + bs); ++k) batch.push_back(train[order[k]]);
            probe_loss(p, batch, &g);
            ++step;
            for (std::size_t k = 0; k < d; ++k) apply(k, p.u[k], g.u[k]);
            apply(d, p.b_att, g.b_att);
            apply(d + 1, p.w_out, g.w_out);
            apply(d + 2, p.b_out, g.b_out);
        }
        const double tl = probe_loss(p, train);
        const double hl = probe_loss(p, held);
        if (!std::isfinite(tl) || !std::isfinite(hl) || !all_finite(p)) {
            throw Error(Errc::divergence, "probe '" + concept_name + "' diverged at epoch " + std::to_string(epoch) +
                                              " (" + echo(cfg) + ")");
        }
        if (tl > m.train_loss.back()) ++m.loss_increases;
        m.train_loss.push_back(tl);
        m.heldout_loss.push_back(hl);
        m.epochs_run = epoch;
        if (hl < best_held) {
            best_held = hl;
            best = p;
            m.best_epoch = epoch;
            since_best = 0;
        } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
            break;
        }
    }

    double shift = 0.0;
    for (std::size_t k = 0; k < d; ++k) shift += center[k] * best.u[k];
    best.b_out -= best.w_out * shift;

    std::vector<double> scores;
    std::vector<int> labels;
    std::size_t correct = 0;
    for (const auto& ex : held_raw) {
        const double y = probe_forward(best, *ex.acts).y_hat;
        scores.push_back(y);
        labels.push_back(ex.label ? 1 : 0);
        if ((y > 0.5) == ex.label) ++correct;
    }
    m.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(held_raw.size());
    m.heldout_auc = roc_auc(scores, labels);

    // Orient the direction so that a larger projection raises y_hat.
    std::vector<double> dir = best.u;
    if (best.w_out < 0) {
        for (auto& x : dir) x = -x;
    }
    return {make_concept_vector(dir, concept_name, Method::probe, model_id), std::move(best), std::move(m)};
}

std::vector<double> global_mean(std::span<const ActivationSequence> corpus) {
    if (corpus.empty()) throw Error(Errc::invalid_argument, "global mean of an empty corpus");
    const std::size_t d = corpus.front().dim;
    std::vector<double> sum(d, 0.0);
    std::size_t count = 0;
    for (const auto& seq : corpus) {
        if (seq.dim != d) throw Error(Errc::dimension_mismatch, "corpus mixes widths");
        for (std::size_t t = 0; t < seq.length; ++t) {
            const auto row = seq.row(t);
            for (std::size_t k = 0; k < d; ++k) sum[k] += row[k];
        }
        count += seq.length;
    }
    if (count == 0) throw Error(Errc::invalid_argument, "global mean of a corpus without tokens");
    for (auto& x : sum) x /= static_cast<double>(count);
    return sum;
}

ConceptVector distill_centroid(std::span<const ActivationSequence> corpus,
                               std::span<const std::vector<std::uint32_t>> masks, std::span<const double> mu_glob,
                               const std::string& concept_name, const std::string& model_id) {
    if (masks.size() != corpus.size()) throw Error(Errc::invalid_argument, "one token mask per sequence required");
    const std::size_t d = mu_glob.size();
    std::vector<double> sum(d, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& seq = corpus[i];
        if (seq.dim != d) throw Error(Errc::dimension_mismatch, "sequence width differs from mu_glob");
        for (auto t : masks[i]) {
            if (t >= seq.length) throw Error(Errc::invalid_argument, "token mask index out of range");
            const auto row = seq.row(t);
            for (std::size_t k = 0; k < d; ++k) sum[k] += row[k];
        }
        count += masks[i].size();
    }
    if (count == 0) throw Error(Errc::degenerate, "no tokens selected for '" + concept_name + "'");
    for (std::size_t k = 0; k < d; ++k) sum[k] = sum[k] / static_cast<double>(count) - mu_glob[k];
    return make_concept_vector(sum, concept_name, Method::centroid, model_id);
}

ConceptVector distill_centroid(std::span<const ActivationSequence> corpus, std::span<const double> mu_glob,
                               const std::string& concept_name) {
    std::vector<std::vector<std::uint32_t>> masks(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (const auto& ann : corpus[i].annotations) {
            if (ann.label == concept_name) masks[i].insert(masks[i].end(), ann.tokens.begin(), ann.tokens.end());
        }
    }
    return distill_centroid(corpus, masks, mu_glob, concept_name, corpus.empty() ? std::string{} : corpus.front().model_id);
}

std::vector<std::string> annotated_labels(std::span<const ActivationSequence> corpus) {
    std::vector<std::string> labels;
    for (const auto& seq : corpus) {
        for (const auto& ann : seq.annotations) {
            if (std::find(labels.begin(), labels.end(), ann.label) == labels.end()) labels.push_back(ann.label);
        }
    }
    return labels;
}

PcaRegularization pca_regularize(std::span<const ConceptVector> vectors, std::size_t n_colors, std::size_t n_shapes,
                                 double tol, int max_iterations) {
    if (n_colors < 1 || n_shapes < 1 || vectors.size() != n_colors * n_shapes) {
        throw Error(Errc::invalid_argument, "pca_regularize needs exactly n_colors * n_shapes vectors, got " +
                                                std::to_string(vectors.size()));
    }
    const auto n = static_cast<Eigen::Index>(vectors.size());
    const auto d = static_cast<Eigen::Index>(vectors.front().dim());
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = vectors[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(v.dim()) != d) throw Error(Errc::dimension_mismatch, "vectors differ in width");
        for (Eigen::Index k = 0; k < d; ++k) X(i, k) = v.direction[static_cast<std::size_t>(k)];
    }

    PcaRegularization out;
    out.retained = n_colors + n_shapes - 2;
    for (int it = 1; it <= max_iterations; ++it) {
        const Eigen::RowVectorXd mean = X.colwise().mean();
        const Eigen::MatrixXd C = X.rowwise() - mean;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const double cutoff = sv.size() ? sv(0) * 1e-10 : 0.0;
        std::size_t rank = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k) {
            if (sv(k) > cutoff) ++rank;
        }
        if (it == 1) {
            out.rank = rank;
            if (rank < out.retained) {
                out.warnings.push_back("centered rank " + std::to_string(rank) + " below " +
                                       std::to_string(out.retained) + "; projecting onto available rank");
            }
        }
        const auto k = static_cast<Eigen::Index>(std::min(rank, out.retained));
        const Eigen::MatrixXd V = svd.matrixV().leftCols(k);
        Eigen::MatrixXd Y = (C * V * V.transpose()).rowwise() + mean;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double norm = Y.row(i).norm();
            if (norm < 1e-12) throw Error(Errc::degenerate, "regularized vector collapsed to zero");
            Y.row(i) /= norm;
        }
        const double change = (Y - X).cwiseAbs().maxCoeff();
        X = std::move(Y);
        out.iterations = it;
        if (change < tol) break;
        if (it == max_iterations) out.warnings.push_back("fixed-point iteration did not settle");
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& src = vectors[static_cast<std::size_t>(i)];
        std::vector<double> row(static_cast<std::size_t>(d));
        for (Eigen::Index k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] = X(i, k);
        const Method m = src.method == Method::probe ? Method::pca_probe : src.method;
        out.vectors.push_back(make_concept_vector(row, src.label, m, src.model_id));
    }
    return out;
}

}  // namespace vlmgeo
