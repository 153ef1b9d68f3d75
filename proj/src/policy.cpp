#include "clover/policy.hpp"

#include <algorithm>
#include <cmath>

#include "clover/parallel.hpp"
#include "clover/rng.hpp"

namespace clover {

namespace {

void resize_tensors(PolicyParams& p) {
    const auto& d = p.dims;
    auto V = static_cast<std::size_t>(d.vocab);
    auto D = static_cast<std::size_t>(d.embed);
    auto H = static_cast<std::size_t>(d.hidden);
    auto L = static_cast<std::size_t>(d.max_len);
    auto N = static_cast<std::size_t>(d.horizon);
    p.enc_embed.assign(V * D, 0.0);
    p.enc_proj.assign(D * D, 0.0);
    p.enc_bias.assign(D, 0.0);
    p.dec_embed.assign(V * D, 0.0);
    p.w_prev.assign(H * D, 0.0);
    p.w_ctx.assign(H * D, 0.0);
    p.pos_emb.assign(L * H, 0.0);
    p.hid_bias.assign(H, 0.0);
    p.out_w.assign(N * V * H, 0.0);
    p.out_b.assign(N * V, 0.0);
}

void check_dims(const PolicyDims& d) {
    if (d.vocab < 1 || d.embed < 1 || d.hidden < 1 || d.max_len < 1 || d.horizon < 1)
        throw ConfigError("policy dims must all be positive");
}

struct EncoderOut {
    std::vector<double> qbar;  // d, mean of query content embeddings
    std::vector<double> ctx;   // d
};

EncoderOut encode_full(const PolicyParams& p, const TokenSeq& query) {
    const int D = p.dims.embed;
    EncoderOut out;
    out.qbar.assign(static_cast<std::size_t>(D), 0.0);
    auto content = query.content();
    if (!content.empty()) {
        for (TokenId w : content) {
            const double* row = &p.enc_embed[static_cast<std::size_t>(w) * D];
            for (int k = 0; k < D; ++k) out.qbar[static_cast<std::size_t>(k)] += row[k];
        }
        double inv = 1.0 / static_cast<double>(content.size());
        for (int k = 0; k < D; ++k) out.qbar[static_cast<std::size_t>(k)] *= inv;
    }
    out.ctx.assign(static_cast<std::size_t>(D), 0.0);
    for (int i = 0; i < D; ++i) {
        double acc = p.enc_bias[static_cast<std::size_t>(i)];
        const double* row = &p.enc_proj[static_cast<std::size_t>(i) * D];
        for (int k = 0; k < D; ++k) acc += row[k] * out.qbar[static_cast<std::size_t>(k)];
        out.ctx[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

// hid = tanh(w_prev * dec_embed[prev] + w_ctx * ctx + pos_emb[t] + hid_bias)
void forward_hidden(const PolicyParams& p, std::span<const double> ctx, TokenId prev, int pos,
                    std::vector<double>& hid) {
    const int D = p.dims.embed;
    const int H = p.dims.hidden;
    hid.assign(static_cast<std::size_t>(H), 0.0);
    const double* prev_row = &p.dec_embed[static_cast<std::size_t>(prev) * D];
    for (int i = 0; i < H; ++i) {
        double acc = p.hid_bias[static_cast<std::size_t>(i)] +
                     p.pos_emb[static_cast<std::size_t>(pos) * H + i];
        const double* wp = &p.w_prev[static_cast<std::size_t>(i) * D];
        const double* wc = &p.w_ctx[static_cast<std::size_t>(i) * D];
        for (int k = 0; k < D; ++k) acc += wp[k] * prev_row[k] + wc[k] * ctx[static_cast<std::size_t>(k)];
        hid[static_cast<std::size_t>(i)] = std::tanh(acc);
    }
}

void head_logits(const PolicyParams& p, int head, std::span<const double> hid,
                 std::vector<double>& logits) {
    const int V = p.dims.vocab;
    const int H = p.dims.hidden;
    logits.assign(static_cast<std::size_t>(V), 0.0);
    const double* wbase = &p.out_w[static_cast<std::size_t>(head) * V * H];
    const double* bbase = &p.out_b[static_cast<std::size_t>(head) * V];
    for (int v = 0; v < V; ++v) {
        double acc = bbase[v];
        const double* row = wbase + static_cast<std::size_t>(v) * H;
        for (int i = 0; i < H; ++i) acc += row[i] * hid[static_cast<std::size_t>(i)];
        logits[static_cast<std::size_t>(v)] = acc;
    }
}

// in place logits -> log softmax
void log_softmax(std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - mx);
    double lse = mx + std::log(sum);
    for (double& x : v) x -= lse;
}

void check_prefix(const PolicyParams& p, const TokenSeq& prefix) {
    if (prefix.terminated()) throw ContractError("cannot extend a terminated prefix");
    if (static_cast<int>(prefix.size()) >= p.dims.max_len)
        throw ContractError("prefix length reached max_len");
}

// Gradient work area for one sequence walk; reused across steps.
struct Backprop {
    std::vector<double> hid;
    std::vector<double> logits;
    std::vector<double> d_hid;
    std::vector<double> d_pre;
    std::vector<double> d_ctx;

    void start(const PolicyParams& p) {
        d_ctx.assign(static_cast<std::size_t>(p.dims.embed), 0.0);
    }

    // Accumulate the gradient of sum_v dlogits[v] * logits_head[v] at one
    // decode step into grad (everything below the logits).
    void step(const PolicyParams& p, int head, std::span<const double> dlogits,
              std::span<const double> ctx, TokenId prev, int pos, PolicyParams& grad) {
        const int V = p.dims.vocab;
        const int H = p.dims.hidden;
        const int D = p.dims.embed;

        d_hid.assign(static_cast<std::size_t>(H), 0.0);
        const double* wbase = &p.out_w[static_cast<std::size_t>(head) * V * H];
        double* gw = &grad.out_w[static_cast<std::size_t>(head) * V * H];
        double* gb = &grad.out_b[static_cast<std::size_t>(head) * V];
        for (int v = 0; v < V; ++v) {
            double dv = dlogits[static_cast<std::size_t>(v)];
            if (dv == 0.0) continue;
            const double* row = wbase + static_cast<std::size_t>(v) * H;
            double* grow = gw + static_cast<std::size_t>(v) * H;
            for (int i = 0; i < H; ++i) {
                d_hid[static_cast<std::size_t>(i)] += dv * row[i];
                grow[i] += dv * hid[static_cast<std::size_t>(i)];
            }
            gb[v] += dv;
        }

        d_pre.assign(static_cast<std::size_t>(H), 0.0);
        for (int i = 0; i < H; ++i) {
            double h = hid[static_cast<std::size_t>(i)];
            d_pre[static_cast<std::size_t>(i)] = (1.0 - h * h) * d_hid[static_cast<std::size_t>(i)];
        }

        const double* prev_row = &p.dec_embed[static_cast<std::size_t>(prev) * D];
        double* g_prev_row = &grad.dec_embed[static_cast<std::size_t>(prev) * D];
        for (int i = 0; i < H; ++i) {
            double dp = d_pre[static_cast<std::size_t>(i)];
            if (dp == 0.0) continue;
            grad.pos_emb[static_cast<std::size_t>(pos) * H + i] += dp;
            grad.hid_bias[static_cast<std::size_t>(i)] += dp;
            const double* wp = &p.w_prev[static_cast<std::size_t>(i) * D];
            const double* wc = &p.w_ctx[static_cast<std::size_t>(i) * D];
            double* gwp = &grad.w_prev[static_cast<std::size_t>(i) * D];
            double* gwc = &grad.w_ctx[static_cast<std::size_t>(i) * D];
            for (int k = 0; k < D; ++k) {
                gwp[k] += dp * prev_row[k];
                g_prev_row[k] += dp * wp[k];
                gwc[k] += dp * ctx[static_cast<std::size_t>(k)];
                d_ctx[static_cast<std::size_t>(k)] += dp * wc[k];
            }
        }
    }

    // Push the accumulated context gradient through the encoder.
    void finish(const PolicyParams& p, const EncoderOut& enc, const TokenSeq& query,
                PolicyParams& grad) {
        const int D = p.dims.embed;
        std::vector<double> d_qbar(static_cast<std::size_t>(D), 0.0);
        for (int i = 0; i < D; ++i) {
            double dc = d_ctx[static_cast<std::size_t>(i)];
            if (dc == 0.0) continue;
            grad.enc_bias[static_cast<std::size_t>(i)] += dc;
            const double* row = &p.enc_proj[static_cast<std::size_t>(i) * D];
            double* grow = &grad.enc_proj[static_cast<std::size_t>(i) * D];
            for (int k = 0; k < D; ++k) {
                grow[k] += dc * enc.qbar[static_cast<std::size_t>(k)];
                d_qbar[static_cast<std::size_t>(k)] += dc * row[k];
            }
        }
        auto content = query.content();
        if (content.empty()) return;
        double inv = 1.0 / static_cast<double>(content.size());
        for (TokenId w : content) {
            double* row = &grad.enc_embed[static_cast<std::size_t>(w) * D];
            for (int k = 0; k < D; ++k) row[k] += inv * d_qbar[static_cast<std::size_t>(k)];
        }
    }
};

void check_sequence(const PolicyParams& p, const TokenSeq& seq) {
    if (!seq.terminated() || !seq.well_formed())
        throw ContractError("expected a terminated, well-formed sequence");
    if (static_cast<int>(seq.size()) > p.dims.max_len)
        throw ContractError("sequence longer than max_len");
}

}  // namespace

std::size_t PolicyParams::parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&n](const char*, const std::vector<double>& v) { n += v.size(); });
    return n;
}

bool PolicyParams::all_finite() const { return first_non_finite().empty(); }

std::string PolicyParams::first_non_finite() const {
    std::string bad;
    for_each_tensor([&bad](const char* name, const std::vector<double>& v) {
        if (!bad.empty()) return;
        for (double x : v)
            if (!std::isfinite(x)) {
                bad = name;
                return;
            }
    });
    return bad;
}

PolicyParams zeros_like(const PolicyDims& dims) {
    check_dims(dims);
    PolicyParams p;
    p.dims = dims;
    resize_tensors(p);
    return p;
}

PolicyParams init_params(const PolicyDims& dims, std::uint64_t seed) {
    PolicyParams p = zeros_like(dims);
    Rng rng(mix_seed({seed, hash_str64("policy-init")}));
    double s = 1.0 / std::sqrt(static_cast<double>(dims.embed));
    p.for_each_tensor([&rng, s](const char*, std::vector<double>& v) {
        for (double& x : v) x = rng.uniform(-0.1, 0.1) * s;
    });
    return p;
}

void axpy(double a, const PolicyParams& x, PolicyParams& y) {
    if (!(x.dims == y.dims)) throw ContractError("axpy dims mismatch");
    std::vector<const std::vector<double>*> xs;
    x.for_each_tensor([&xs](const char*, const std::vector<double>& v) { xs.push_back(&v); });
    std::size_t idx = 0;
    y.for_each_tensor([&xs, &idx, a](const char*, std::vector<double>& v) {
        const std::vector<double>& xv = *xs[idx++];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += a * xv[i];
    });
}

void scale(double a, PolicyParams& x) {
    x.for_each_tensor([a](const char*, std::vector<double>& v) {
        for (double& e : v) e *= a;
    });
}

double dot(const PolicyParams& a, const PolicyParams& b) {
    std::vector<double> fa = flatten(a), fb = flatten(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) acc += fa[i] * fb[i];
    return acc;
}

double max_abs(const PolicyParams& a) {
    double m = 0.0;
    a.for_each_tensor([&m](const char*, const std::vector<double>& v) {
        for (double x : v) m = std::max(m, std::abs(x));
    });
    return m;
}

std::vector<double> flatten(const PolicyParams& p) {
    std::vector<double> out;
    out.reserve(p.parameter_count());
    p.for_each_tensor([&out](const char*, const std::vector<double>& v) {
        out.insert(out.end(), v.begin(), v.end());
    });
    return out;
}

void unflatten(std::span<const double> flat, PolicyParams& p) {
    std::size_t at = 0;
    p.for_each_tensor([&flat, &at](const char*, std::vector<double>& v) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
                  flat.begin() + static_cast<std::ptrdiff_t>(at + v.size()), v.begin());
        at += v.size();
    });
    if (at != flat.size()) throw ContractError("unflatten length mismatch");
}

std::vector<double> encode_query(const PolicyParams& params, const TokenSeq& query) {
    return encode_full(params, query).ctx;
}

std::vector<double> next_token_logits(const PolicyParams& params, const TokenSeq& query,
                                      const TokenSeq& prefix) {
    check_prefix(params, prefix);
    EncoderOut enc = encode_full(params, query);
    std::vector<double> hid, logits;
    TokenId prev = prefix.empty() ? kEndToken : prefix.ids.back();
    forward_hidden(params, enc.ctx, prev, static_cast<int>(prefix.size()), hid);
    head_logits(params, 0, hid, logits);
    return logits;
}

std::vector<double> step_log_probs(const PolicyParams& params, std::span<const double> ctx,
                                   std::span<const TokenId> prefix) {
    if (static_cast<int>(prefix.size()) >= params.dims.max_len)
        throw ContractError("prefix length reached max_len");
    std::vector<double> hid, logits;
    TokenId prev = prefix.empty() ? kEndToken : prefix.back();
    forward_hidden(params, ctx, prev, static_cast<int>(prefix.size()), hid);
    head_logits(params, 0, hid, logits);
    log_softmax(logits);
    return logits;
}

double action_log_prob(const PolicyParams& params, const TokenSeq& query,
                       std::span<const TokenId> actions) {
    EncoderOut enc = encode_full(params, query);
    double total = 0.0;
    for (std::size_t t = 0; t < actions.size(); ++t) {
        std::vector<double> lp =
            step_log_probs(params, enc.ctx, std::span<const TokenId>(actions.data(), t));
        total += lp[static_cast<std::size_t>(actions[t])];
    }
    return total;
}

double sequence_log_prob(const PolicyParams& params, const TokenSeq& query, const TokenSeq& seq) {
    check_sequence(params, seq);
    return action_log_prob(params, query, std::span<const TokenId>(seq.ids));
}

void accumulate_log_prob_gradient(const PolicyParams& params, const TokenSeq& query,
                                  std::span<const TokenId> actions, double weight,
                                  PolicyParams& grad) {
    if (!(params.dims == grad.dims)) throw ContractError("gradient dims mismatch");
    const int V = params.dims.vocab;
    EncoderOut enc = encode_full(params, query);
    Backprop bp;
    bp.start(params);
    std::vector<double> dlogits(static_cast<std::size_t>(V));
    for (std::size_t t = 0; t < actions.size(); ++t) {
        TokenId prev = t == 0 ? kEndToken : actions[t - 1];
        int pos = static_cast<int>(t);
        forward_hidden(params, enc.ctx, prev, pos, bp.hid);
        head_logits(params, 0, bp.hid, bp.logits);
        log_softmax(bp.logits);
        // d/dlogits of log p[target] = onehot(target) - softmax
        for (int v = 0; v < V; ++v)
            dlogits[static_cast<std::size_t>(v)] =
                -weight * std::exp(bp.logits[static_cast<std::size_t>(v)]);
        dlogits[static_cast<std::size_t>(actions[t])] += weight;
        bp.step(params, 0, dlogits, enc.ctx, prev, pos, grad);
    }
    bp.finish(params, enc, query, grad);
}

PolicyParams log_prob_gradient(const PolicyParams& params, const TokenSeq& query,
                               const TokenSeq& seq) {
    check_sequence(params, seq);
    PolicyParams grad = zeros_like(params.dims);
    accumulate_log_prob_gradient(params, query, std::span<const TokenId>(seq.ids), 1.0, grad);
    return grad;
}

void SupervisedConfig::validate(const PolicyDims& dims) const {
    if (n < 1) throw ConfigError("supervised horizon n must be >= 1");
    if (n > dims.horizon) throw ConfigError("supervised n exceeds the policy's head count");
    if (static_cast<int>(alpha_weights.size()) != n)
        throw ConfigError("alpha_weights must have n entries");
    double sum = 0.0;
    for (double a : alpha_weights) {
        if (a < 0.0) throw ConfigError("alpha_weights must be nonnegative");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("alpha_weights must sum to 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ConfigError("label_smoothing must be in [0, 1)");
    if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("unknown optimizer");
}

namespace {

// Loss and loss-gradient for one (query, rewrite) pair; dlogit weights are
// folded in as weight * alpha_j. Returns the pair's n-gram loss.
double supervised_pair(const PolicyParams& params, const RewritePair& pair,
                       const SupervisedConfig& cfg, double weight, PolicyParams& grad) {
    const int V = params.dims.vocab;
    check_sequence(params, pair.rewrite);
    const auto& tgt = pair.rewrite.ids;
    const int L = static_cast<int>(tgt.size());
    const double eps = cfg.label_smoothing;

    EncoderOut enc = encode_full(params, pair.query);
    Backprop bp;
    bp.start(params);
    std::vector<double> dlogits(static_cast<std::size_t>(V));
    double loss = 0.0;
    for (int t = 0; t < L; ++t) {
        TokenId prev = t == 0 ? kEndToken : tgt[static_cast<std::size_t>(t - 1)];
        forward_hidden(params, enc.ctx, prev, t, bp.hid);
        for (int j = 0; j < cfg.n; ++j) {
            if (t + j >= L) break;  // positions past the end are skipped
            double alpha = cfg.alpha_weights[static_cast<std::size_t>(j)];
            if (alpha == 0.0) continue;
            TokenId target = tgt[static_cast<std::size_t>(t + j)];
            head_logits(params, j, bp.hid, bp.logits);
            log_softmax(bp.logits);
            // smoothed cross entropy: q = (1-eps) onehot + eps/V
            double ce = -(1.0 - eps) * bp.logits[static_cast<std::size_t>(target)];
            if (eps > 0.0) {
                double mean_lp = 0.0;
                for (int v = 0; v < V; ++v) mean_lp += bp.logits[static_cast<std::size_t>(v)];
                ce -= eps * mean_lp / static_cast<double>(V);
            }
            loss += alpha * ce;
            // d loss / d logits = p - q, scaled
            double w = weight * alpha;
            for (int v = 0; v < V; ++v) {
                double q = eps / static_cast<double>(V);
                dlogits[static_cast<std::size_t>(v)] =
                    w * (std::exp(bp.logits[static_cast<std::size_t>(v)]) - q);
            }
            dlogits[static_cast<std::size_t>(target)] -= w * (1.0 - eps);
            bp.step(params, j, dlogits, enc.ctx, prev, t, grad);
        }
    }
    bp.finish(params, enc, pair.query, grad);
    return loss;
}

}  // namespace

SupervisedBatch supervised_batch(const PolicyParams& params, std::span<const RewritePair> batch,
                                 const SupervisedConfig& config, int threads) {
    config.validate(params.dims);
    if (batch.empty()) throw ContractError("supervised batch must be nonempty");

    const std::size_t n = batch.size();
    std::vector<PolicyParams> grads(n);
    std::vector<double> losses(n, 0.0);
    par::for_index(n, threads, [&](std::size_t i) {
        grads[i] = zeros_like(params.dims);
        losses[i] = supervised_pair(params, batch[i], config, 1.0, grads[i]);
    });

    SupervisedBatch out;
    out.grad = zeros_like(params.dims);
    double inv = 1.0 / static_cast<double>(n);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        loss_sum += losses[i];
        axpy(inv, grads[i], out.grad);
    }
    out.loss = loss_sum * inv;
    return out;
}

SupervisedBatch supervised_batch_reference(const PolicyParams& params,
                                           std::span<const RewritePair> batch,
                                           const SupervisedConfig& config) {
    config.validate(params.dims);
    if (batch.empty()) throw ContractError("supervised batch must be nonempty");
    SupervisedBatch out;
    out.grad = zeros_like(params.dims);
    double inv = 1.0 / static_cast<double>(batch.size());
    double loss_sum = 0.0;
    for (const RewritePair& pair : batch)
        loss_sum += supervised_pair(params, pair, config, inv, out.grad);
    out.loss = loss_sum * inv;
    return out;
}

double supervised_step(PolicyParams& params, std::span<const RewritePair> batch,
                       const SupervisedConfig& config, int threads) {
    SupervisedBatch b = supervised_batch(params, batch, config, threads);
    axpy(-config.learning_rate, b.grad, params);
    return b.loss;
}

namespace {

TokenId sample_from_log_probs(const std::vector<double>& lp, Rng& rng) {
    double u = rng.next_double();
    double cum = 0.0;
    for (std::size_t v = 0; v < lp.size(); ++v) {
        cum += std::exp(lp[v]);
        if (u < cum) return static_cast<TokenId>(v);
    }
    return static_cast<TokenId>(lp.size() - 1);
}

}  // namespace

double policy_entropy(const PolicyParams& params, std::span<const TokenSeq> queries,
                      int num_samples, std::uint64_t seed, int threads) {
    if (num_samples < 1) throw ContractError("policy_entropy needs num_samples >= 1");
    if (queries.empty()) throw ContractError("policy_entropy needs at least one query");

    const std::size_t nq = queries.size();
    const std::size_t S = static_cast<std::size_t>(num_samples);
    std::vector<double> neg_lp(nq * S, 0.0);
    par::for_index(nq, threads, [&](std::size_t qi) {
        EncoderOut enc = encode_full(params, queries[qi]);
        for (std::size_t si = 0; si < S; ++si) {
            Rng rng(mix_seed({seed, hash_str64("entropy"), qi, si}));
            std::vector<TokenId> actions;
            double lp_total = 0.0;
            for (int t = 0; t < params.dims.max_len; ++t) {
                std::vector<double> lp = step_log_probs(
                    params, enc.ctx, std::span<const TokenId>(actions.data(), actions.size()));
                TokenId tok = sample_from_log_probs(lp, rng);
                lp_total += lp[static_cast<std::size_t>(tok)];
                actions.push_back(tok);
                if (tok == kEndToken) break;
            }
            neg_lp[qi * S + si] = -lp_total;
        }
    });

    double sum = 0.0;
    for (double x : neg_lp) sum += x;
    return sum / static_cast<double>(nq * S);
}

}  // namespace clover
