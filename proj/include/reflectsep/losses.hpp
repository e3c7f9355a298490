#pragma once

#include <string>
#include <vector>

#include "reflectsep/model.hpp"
#include "reflectsep/synthesis.hpp"

namespace reflectsep {

struct LossWeights {
    double lambda1 = 100.0;
    double lambda2 = 100.0;
};

// Per-term loss values for one step. Terms are stored unweighted together
// with the weight they enter the total with; total = sum(value * weight).
struct LossReport {
    struct Term {
        std::string name;
        double value = 0.0;
        double weight = 1.0;
    };
    std::vector<Term> terms;
    double total = 0.0;

    double term(const std::string& name) const;
    bool has_term(const std::string& name) const;
    double weighted_sum() const;
    std::string tsv_header() const;           // step\tname...\ttotal
    std::string tsv_line(long step) const;
};

// Scalar loss graph plus its named components (for reports).
struct LossGraph {
    ad::NodeP total;
    std::vector<std::pair<std::string, ad::NodeP>> term_nodes;
    std::vector<double> term_weights;
    LossReport report() const;
};

// Scores are clamped to [eps, 1-eps] before the log, eps = 1e-7.
ad::NodeP gan_d_loss(const ad::NodeP& real_scores, const ad::NodeP& fake_scores);
// Non-saturating generator objective: -mean(log fake_scores).
ad::NodeP gan_g_loss(const ad::NodeP& fake_scores);
// Mean absolute difference over all elements.
ad::NodeP l1_term(const ad::NodeP& a, const ad::NodeP& b);
// Euclidean norm of the flattened difference divided by the element count.
ad::NodeP l2_term(const ad::NodeP& a, const ad::NodeP& b);

// Sum over the five encoder layers of three norm terms, each divided by that
// layer's element count (the division is folded into l2_term).
ad::NodeP content_loss(const SeparatorModel& m, const EncOut& enc_y, const ad::NodeP& t,
                       const ad::NodeP& r, const ad::NodeP& t_hat, const ad::NodeP& r_hat,
                       const ad::NodeP& w_y);

// Generator-side objective for supervised variants (B1/B2/B3).
LossGraph supervised_generator_loss(const SeparatorModel& m, const SepOut& sep,
                                    const ad::NodeP& y, const ad::NodeP& t, const ad::NodeP& r,
                                    const LossWeights& w);
// Generator-side objective for the weakly-supervised MASK variant.
LossGraph weak_generator_loss(const SeparatorModel& m, const SepOut& sep, const ad::NodeP& y,
                              const LossWeights& w);
// Discriminator objective; fakes are detached from the generator graph.
// Supervised mode conditions on y (t_real/r_real are the paired ground truth);
// weak mode passes unconditional pools.
LossGraph discriminator_loss(const SeparatorModel& m, const SepOut& sep, const ad::NodeP& y,
                             const ad::NodeP& t_real, const ad::NodeP& r_real);

// High-level entry points: run the forward pass and report every term.
LossReport loss_supervised(const SeparatorModel& m, const std::vector<TrainingPair>& batch,
                           const LossWeights& w);
LossReport loss_weak(const SeparatorModel& m, const Tensor& y_batch, const Tensor& t_pool,
                     const Tensor& r_pool, const LossWeights& w);

} // namespace reflectsep
