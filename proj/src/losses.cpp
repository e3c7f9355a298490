#include "reflectsep/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace reflectsep {

using ad::NodeP;

namespace {
constexpr double kScoreEps = 1e-7;

NodeP one_minus(const NodeP& x) { return ad::add_scalar(ad::scale(x, -1.0), 1.0); }
} // namespace

double LossReport::term(const std::string& name) const {
    for (const auto& t : terms)
        if (t.name == name) return t.value;
    throw std::invalid_argument("LossReport: no term named " + name);
}

bool LossReport::has_term(const std::string& name) const {
    for (const auto& t : terms)
        if (t.name == name) return true;
    return false;
}

double LossReport::weighted_sum() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.value * t.weight;
    return s;
}

std::string LossReport::tsv_header() const {
    std::ostringstream os;
    os << "step";
    for (const auto& t : terms) os << '\t' << t.name;
    os << "\ttotal";
    return os.str();
}

std::string LossReport::tsv_line(long step) const {
    std::ostringstream os;
    os << step;
    for (const auto& t : terms) os << '\t' << t.value;
    os << '\t' << total;
    return os.str();
}

LossReport LossGraph::report() const {
    LossReport r;
    for (std::size_t i = 0; i < term_nodes.size(); ++i)
        r.terms.push_back({term_nodes[i].first, term_nodes[i].second->value[0], term_weights[i]});
    r.total = total->value[0];
    return r;
}

NodeP gan_d_loss(const ad::NodeP& real_scores, const ad::NodeP& fake_scores) {
    NodeP real = ad::clamp(real_scores, kScoreEps, 1.0 - kScoreEps);
    NodeP fake = ad::clamp(fake_scores, kScoreEps, 1.0 - kScoreEps);
    NodeP a = ad::scale(ad::mean_all(ad::log_op(real)), -1.0);
    NodeP b = ad::scale(ad::mean_all(ad::log_op(one_minus(fake))), -1.0);
    return ad::add(a, b);
}

NodeP gan_g_loss(const ad::NodeP& fake_scores) {
    NodeP fake = ad::clamp(fake_scores, kScoreEps, 1.0 - kScoreEps);
    return ad::scale(ad::mean_all(ad::log_op(fake)), -1.0);
}

NodeP l1_term(const ad::NodeP& a, const ad::NodeP& b) { return ad::l1_mean(a, b); }

NodeP l2_term(const ad::NodeP& a, const ad::NodeP& b) { return ad::l2_norm_mean(a, b); }

NodeP content_loss(const SeparatorModel& m, const EncOut& enc_y, const NodeP& t, const NodeP& r,
                   const NodeP& t_hat, const NodeP& r_hat, const NodeP& w_y) {
    const EncOut enc_t = m.encode(t);
    const EncOut enc_r = m.encode(r);
    const EncOut enc_th = m.encode(t_hat);
    const EncOut enc_rh = m.encode(r_hat);
    const int n = w_y->value.dim(0);
    NodeP wb = ad::reshape(w_y, {n, 1, 1, 1});
    NodeP one_minus_wb = one_minus(wb);
    NodeP sum;
    for (int i = 0; i < 5; ++i) {
        NodeP mix = ad::add(ad::mul(wb, enc_th.f[i]), ad::mul(one_minus_wb, enc_rh.f[i]));
        NodeP li = ad::add(l2_term(enc_y.f[i], mix),
                           ad::add(l2_term(enc_t.f[i], enc_th.f[i]),
                                   l2_term(enc_r.f[i], enc_rh.f[i])));
        sum = sum ? ad::add(sum, li) : li;
    }
    return sum;
}

LossGraph supervised_generator_loss(const SeparatorModel& m, const SepOut& sep, const NodeP& y,
                                    const NodeP& t, const NodeP& r, const LossWeights& w) {
    if (m.variant() == Variant::MASK)
        throw std::invalid_argument("loss_supervised: MASK variant is trained weakly (use loss_weak)");
    LossGraph g;
    auto add_term = [&](const std::string& name, const NodeP& node, double weight) {
        g.term_nodes.emplace_back(name, node);
        g.term_weights.push_back(weight);
        NodeP scaled = weight == 1.0 ? node : ad::scale(node, weight);
        g.total = g.total ? ad::add(g.total, scaled) : scaled;
    };
    add_term("adv_t", gan_g_loss(m.discriminate(Branch::T, sep.t_hat, y)), 1.0);
    add_term("adv_r", gan_g_loss(m.discriminate(Branch::R, sep.r_hat, y)), 1.0);
    add_term("l1_t", l1_term(t, sep.t_hat), w.lambda1);
    add_term("l1_r", l1_term(r, sep.r_hat), w.lambda1);
    if (sep.y_hat) add_term("l1_y", l1_term(y, sep.y_hat), w.lambda1);
    if (m.variant() == Variant::B3)
        add_term("content", content_loss(m, sep.enc, t, r, sep.t_hat, sep.r_hat, sep.wy),
                 w.lambda2);
    return g;
}

LossGraph weak_generator_loss(const SeparatorModel& m, const SepOut& sep, const NodeP& y,
                              const LossWeights& w) {
    if (m.variant() != Variant::MASK)
        throw std::invalid_argument("loss_weak: requires the MASK variant");
    LossGraph g;
    auto add_term = [&](const std::string& name, const NodeP& node, double weight) {
        g.term_nodes.emplace_back(name, node);
        g.term_weights.push_back(weight);
        NodeP scaled = weight == 1.0 ? node : ad::scale(node, weight);
        g.total = g.total ? ad::add(g.total, scaled) : scaled;
    };
    add_term("adv_t", gan_g_loss(m.discriminate(Branch::T, sep.t_hat)), 1.0);
    add_term("adv_r", gan_g_loss(m.discriminate(Branch::R, sep.r_hat)), 1.0);

    NodeP masked_y = ad::mul(sep.mask, y);
    NodeP inv_masked_y = ad::mul(one_minus(sep.mask), y);
    add_term("pix_y", l2_term(y, sep.y_hat), w.lambda1);
    add_term("pix_mt", l2_term(masked_y, sep.mt), w.lambda1);
    add_term("pix_mr", l2_term(inv_masked_y, sep.mr), w.lambda1);

    const EncOut enc_my = m.encode(masked_y);
    const EncOut enc_imy = m.encode(inv_masked_y);
    const EncOut enc_mt = m.encode(sep.mt);
    const EncOut enc_mr = m.encode(sep.mr);
    NodeP feat;
    for (int i = 0; i < 5; ++i) {
        NodeP li = ad::add(l2_term(enc_my.f[i], enc_mt.f[i]), l2_term(enc_imy.f[i], enc_mr.f[i]));
        feat = feat ? ad::add(feat, li) : li;
    }
    add_term("feat", feat, w.lambda2);
    return g;
}

LossGraph discriminator_loss(const SeparatorModel& m, const SepOut& sep, const NodeP& y,
                             const NodeP& t_real, const NodeP& r_real) {
    LossGraph g;
    const bool cond = m.conditional_discriminators();
    NodeP fake_t = ad::detach(sep.t_hat);
    NodeP fake_r = ad::detach(sep.r_hat);
    NodeP d_t = gan_d_loss(m.discriminate(Branch::T, t_real, cond ? y : nullptr),
                           m.discriminate(Branch::T, fake_t, cond ? y : nullptr));
    NodeP d_r = gan_d_loss(m.discriminate(Branch::R, r_real, cond ? y : nullptr),
                           m.discriminate(Branch::R, fake_r, cond ? y : nullptr));
    g.term_nodes = {{"d_t", d_t}, {"d_r", d_r}};
    g.term_weights = {1.0, 1.0};
    g.total = ad::add(d_t, d_r);
    return g;
}

namespace {
Tensor batch_field(const std::vector<TrainingPair>& batch, const Image TrainingPair::* field) {
    std::vector<Image> imgs;
    imgs.reserve(batch.size());
    for (const auto& p : batch) imgs.push_back(p.*field);
    return images_to_tensor(imgs);
}
} // namespace

LossReport loss_supervised(const SeparatorModel& m, const std::vector<TrainingPair>& batch,
                           const LossWeights& w) {
    if (batch.empty()) throw std::invalid_argument("loss_supervised: empty batch");
    NodeP y = ad::constant(batch_field(batch, &TrainingPair::y));
    NodeP t = ad::constant(batch_field(batch, &TrainingPair::t));
    NodeP r = ad::constant(batch_field(batch, &TrainingPair::r));
    SepOut sep = m.separate(y);
    return supervised_generator_loss(m, sep, y, t, r, w).report();
}

LossReport loss_weak(const SeparatorModel& m, const Tensor& y_batch, const Tensor& t_pool,
                     const Tensor& r_pool, const LossWeights& w) {
    NodeP y = ad::constant(y_batch);
    SepOut sep = m.separate(y);
    LossGraph g = weak_generator_loss(m, sep, y, w);
    // Discriminator terms consume the unconditional real pools; reported with
    // weight 0 so the total stays the generator objective.
    LossGraph d = discriminator_loss(m, sep, y, ad::constant(t_pool), ad::constant(r_pool));
    LossReport rep = g.report();
    for (std::size_t i = 0; i < d.term_nodes.size(); ++i)
        rep.terms.push_back({d.term_nodes[i].first, d.term_nodes[i].second->value[0], 0.0});
    return rep;
}

} // namespace reflectsep
