#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlmgeo/tensor_store.hpp"

namespace vlmgeo {

struct AttentionProbe {
    std::vector<double> u;  // u_c
    double b_att = 0.0;
    double w_out = 0.0;
    double b_out = 0.0;

    std::size_t dim() const { return u.size(); }
};

enum class ProbeOptimizer { adam, gd };

struct ProbeTrainConfig {
    ProbeOptimizer optimizer = ProbeOptimizer::adam;
    double learning_rate = 0.05;
    int epochs = 500;
    int batch_size = 0;  // 0: full batch
    double init_scale = 1.0;  // u ~ N(0, init_scale^2 / d)
    // With w_out = 0 the direction receives no gradient until the readout has
    // picked a sign, and the negative sign leads to a basin where attention
    // cannot isolate the concept tokens.
    double init_w_out = 1.0;
    std::uint64_t seed = 0;
    int early_stop_patience = 50;  // epochs without held-out improvement; 0 disables
    double holdout_fraction = 0.2;
};

struct ProbeOutput {
    double y_hat = 0.0;
    std::vector<double> alpha;
    double pooled = 0.0;  // sum_t alpha_t h_t.u
};

ProbeOutput probe_forward(const AttentionProbe& probe, const ActivationSequence& acts);

struct ProbeExample {
    const ActivationSequence* acts = nullptr;
    bool label = false;
};

struct ProbeGradient {
    std::vector<double> u;
    double b_att = 0.0;
    double w_out = 0.0;
    double b_out = 0.0;
};

// Mean binary cross-entropy over `batch` and its analytic gradient.
double probe_loss(const AttentionProbe& probe, std::span<const ProbeExample> batch, ProbeGradient* grad = nullptr);

struct ProbeMetrics {
    std::vector<double> train_loss;  // full training-split loss after each epoch, index 0 = initial
    std::vector<double> heldout_loss;
    int epochs_run = 0;
    int best_epoch = 0;
    int loss_increases = 0;  // epochs whose training loss exceeded the previous one
    double heldout_accuracy = 0.0;
    double heldout_auc = 0.0;
    std::size_t train_count = 0;
    std::size_t heldout_count = 0;
};

struct ProbeResult {
    ConceptVector vector;
    AttentionProbe probe;
    ProbeMetrics metrics;
};

// Area under the ROC curve; tied scores count one half. labels: nonzero = positive.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

ProbeResult train_attention_probe(std::span<const ProbeExample> corpus, const std::string& concept_name,
                                  const ProbeTrainConfig& cfg, const std::string& model_id = {});

std::vector<double> global_mean(std::span<const ActivationSequence> corpus);

// Mean of the selected tokens minus mu_glob, normalized. masks[i] selects
// tokens of corpus[i].
ConceptVector distill_centroid(std::span<const ActivationSequence> corpus,
                               std::span<const std::vector<std::uint32_t>> masks, std::span<const double> mu_glob,
                               const std::string& concept_name, const std::string& model_id);

// Token sets come from the sequences' annotations whose label is `concept_name`.
ConceptVector distill_centroid(std::span<const ActivationSequence> corpus, std::span<const double> mu_glob,
                               const std::string& concept_name);

// Every annotated label in the corpus, in order of first appearance.
std::vector<std::string> annotated_labels(std::span<const ActivationSequence> corpus);

struct PcaRegularization {
    std::vector<ConceptVector> vectors;
    std::size_t retained = 0;  // components kept (n_colors + n_shapes - 2)
    std::size_t rank = 0;      // numerical rank of the centered input
    int iterations = 0;
    std::vector<std::string> warnings;
};

// Projects the centered directions onto their top n_colors + n_shapes - 2
// principal components, re-adds the mean and renormalizes. The step is
// repeated until it no longer moves the vectors, so the result is a fixed
// point of the map.
PcaRegularization pca_regularize(std::span<const ConceptVector> vectors, std::size_t n_colors, std::size_t n_shapes,
                                 double tol = 1e-12, int max_iterations = 200);

}  // namespace vlmgeo
