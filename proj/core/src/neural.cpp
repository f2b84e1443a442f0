#include "piiprobe/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "piiprobe/errors.hpp"
#include "piiprobe/rng.hpp"

namespace piiprobe {

using nlohmann::json;

namespace {

constexpr int kV = Tokenizer::kVocabSize;

void fill_uniform(Rng& rng, Eigen::Ref<Matrix> m, double bound) {
    // Explicit row-major fill; the draw order is part of the init contract.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = rng.uniform(-bound, bound);
        }
    }
}

Vector log_softmax(const Vector& logits) {
    double m = logits.maxCoeff();
    double lse = m + std::log((logits.array() - m).exp().sum());
    return logits.array() - lse;
}

} // namespace

TinyNeuralLm TinyNeuralLm::init(const NeuralConfig& cfg) {
    if (cfg.context_window < 1 || cfg.embed_dim < 1 || cfg.hidden_dim < 1) {
        throw Error("neural config dimensions must be >= 1");
    }
    TinyNeuralLm lm;
    lm.cfg_ = cfg;
    lm.model_id_ = "neural-c" + std::to_string(cfg.context_window) + "-d" +
                   std::to_string(cfg.embed_dim) + "-h" + std::to_string(cfg.hidden_dim) + "-s" +
                   std::to_string(cfg.seed);

    const int cd = cfg.context_window * cfg.embed_dim;
    lm.E = Matrix(kV, cfg.embed_dim);
    lm.W1 = Matrix(cfg.hidden_dim, cd);
    lm.b1 = Vector(cfg.hidden_dim);
    lm.W2 = Matrix(kV, cfg.hidden_dim);
    lm.b2 = Vector(kV);

    Rng rng(cfg.seed);
    fill_uniform(rng, lm.E, 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)));
    fill_uniform(rng, lm.W1, 1.0 / std::sqrt(static_cast<double>(cd)));
    fill_uniform(rng, lm.b1, 1.0 / std::sqrt(static_cast<double>(cd)));
    fill_uniform(rng, lm.W2, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)));
    fill_uniform(rng, lm.b2, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)));
    return lm;
}

Vector TinyNeuralLm::forward(const Matrix& context) const {
    if (context.rows() != cfg_.context_window || context.cols() != cfg_.embed_dim) {
        throw DimensionMismatch("context must be C x d = " + std::to_string(cfg_.context_window) +
                                " x " + std::to_string(cfg_.embed_dim));
    }
    const int d = cfg_.embed_dim;
    Vector x(cfg_.context_window * d);
    for (int i = 0; i < cfg_.context_window; ++i) {
        x.segment(i * d, d) = context.row(i).transpose();
    }
    Vector h = (W1 * x + b1).array().tanh();
    return W2 * h + b2;
}

Vector TinyNeuralLm::forward_rows(const Matrix& rows) const {
    const int C = cfg_.context_window;
    const int d = cfg_.embed_dim;
    if (rows.cols() != d) throw DimensionMismatch("row width must equal embed_dim");
    Matrix ctx(C, d);
    Eigen::Index take = std::min<Eigen::Index>(rows.rows(), C);
    Eigen::Index pad = C - take;
    for (Eigen::Index i = 0; i < pad; ++i) ctx.row(i) = E.row(Tokenizer::kBos);
    ctx.bottomRows(take) = rows.bottomRows(take);
    return forward(ctx);
}

std::vector<double> TinyNeuralLm::next_logprobs(std::span<const TokenId> context) const {
    const int C = cfg_.context_window;
    Matrix ctx(C, cfg_.embed_dim);
    std::size_t take = std::min<std::size_t>(context.size(), static_cast<std::size_t>(C));
    std::size_t pad = static_cast<std::size_t>(C) - take;
    for (std::size_t i = 0; i < pad; ++i) ctx.row(static_cast<Eigen::Index>(i)) = E.row(Tokenizer::kBos);
    for (std::size_t i = 0; i < take; ++i) {
        ctx.row(static_cast<Eigen::Index>(pad + i)) =
            E.row(context[context.size() - take + i]);
    }
    Vector lp = log_softmax(forward(ctx));
    return std::vector<double>(lp.data(), lp.data() + lp.size());
}

Matrix TinyNeuralLm::embed(std::span<const TokenId> ids) const {
    Matrix rows(static_cast<Eigen::Index>(ids.size()), cfg_.embed_dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = E.row(ids[i]);
    }
    return rows;
}

std::uint64_t TinyNeuralLm::parameter_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &data[i], sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    };
    mix(E.data(), static_cast<std::size_t>(E.size()));
    mix(W1.data(), static_cast<std::size_t>(W1.size()));
    mix(b1.data(), static_cast<std::size_t>(b1.size()));
    mix(W2.data(), static_cast<std::size_t>(W2.size()));
    mix(b2.data(), static_cast<std::size_t>(b2.size()));
    return h;
}

// ---- serialization ----

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                        const std::string& name) {
    if (static_cast<Eigen::Index>(j.size()) != rows) {
        throw SchemaMismatch("bad row count for " + name);
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw SchemaMismatch("bad column count for " + name);
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    if (!m.allFinite()) throw SchemaMismatch("non-finite values in " + name);
    return m;
}

} // namespace

void TinyNeuralLm::save(const std::string& path) const {
    json doc;
    doc["schema_version"] = 1;
    doc["type"] = "neural";
    doc["context_window"] = cfg_.context_window;
    doc["embed_dim"] = cfg_.embed_dim;
    doc["hidden_dim"] = cfg_.hidden_dim;
    doc["seed"] = cfg_.seed;
    doc["model_id"] = model_id_;
    doc["params"] = {
        {"E", matrix_to_json(E)},   {"W1", matrix_to_json(W1)}, {"b1", matrix_to_json(b1)},
        {"W2", matrix_to_json(W2)}, {"b2", matrix_to_json(b2)},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CorpusIoError("cannot open for writing: " + path);
    out << doc.dump() << "\n";
}

TinyNeuralLm TinyNeuralLm::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusIoError("cannot open model: " + path);
    json doc = json::parse(in);
    if (doc.value("type", "") != "neural") throw SchemaMismatch("not a neural model file");

    TinyNeuralLm lm;
    lm.cfg_.context_window = doc.at("context_window").get<int>();
    lm.cfg_.embed_dim = doc.at("embed_dim").get<int>();
    lm.cfg_.hidden_dim = doc.at("hidden_dim").get<int>();
    lm.cfg_.seed = doc.at("seed").get<std::uint64_t>();
    lm.model_id_ = doc.at("model_id").get<std::string>();

    const auto& p = doc.at("params");
    const int cd = lm.cfg_.context_window * lm.cfg_.embed_dim;
    lm.E = matrix_from_json(p.at("E"), kV, lm.cfg_.embed_dim, "E");
    lm.W1 = matrix_from_json(p.at("W1"), lm.cfg_.hidden_dim, cd, "W1");
    lm.b1 = matrix_from_json(p.at("b1"), lm.cfg_.hidden_dim, 1, "b1");
    lm.W2 = matrix_from_json(p.at("W2"), kV, lm.cfg_.hidden_dim, "W2");
    lm.b2 = matrix_from_json(p.at("b2"), kV, 1, "b2");
    return lm;
}

// ---- training ----

std::vector<TokenSeq> corpus_sequences(const std::vector<Document>& corpus) {
    std::vector<TokenSeq> seqs;
    seqs.reserve(corpus.size());
    for (const auto& doc : corpus) {
        TokenSeq seq = Tokenizer::encode(doc.text);
        seq.push_back(Tokenizer::kEos);
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

std::vector<WindowRef> all_windows(const std::vector<TokenSeq>& seqs) {
    std::vector<WindowRef> windows;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        for (std::size_t pos = 1; pos < seqs[s].size(); ++pos) {
            windows.push_back(WindowRef{s, pos});
        }
    }
    return windows;
}

void NeuralGradients::zero_like(const TinyNeuralLm& model) {
    dE = Matrix::Zero(model.E.rows(), model.E.cols());
    dW1 = Matrix::Zero(model.W1.rows(), model.W1.cols());
    db1 = Vector::Zero(model.b1.size());
    dW2 = Matrix::Zero(model.W2.rows(), model.W2.cols());
    db2 = Vector::Zero(model.b2.size());
}

namespace {

// Assembles the flattened context column for predicting seq[pos].
void fill_context_column(const TinyNeuralLm& model, const TokenSeq& seq, std::size_t pos,
                         Eigen::Ref<Matrix> X, Eigen::Index col,
                         std::vector<TokenId>* tokens_out) {
    const int C = model.context_window();
    const int d = model.embed_dim();
    for (int i = 0; i < C; ++i) {
        // Position C-1 is the most recent token.
        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(pos) - C + i;
        TokenId tok = src >= 0 ? seq[static_cast<std::size_t>(src)] : Tokenizer::kBos;
        X.block(i * d, col, d, 1) = model.E.row(tok).transpose();
        if (tokens_out) (*tokens_out)[static_cast<std::size_t>(col) * static_cast<std::size_t>(C) +
                                      static_cast<std::size_t>(i)] = tok;
    }
}

// Internal chunk size; fixed so the floating-point reduction order is a
// property of the implementation, not of callers.
constexpr std::size_t kChunk = 256;

} // namespace

double neural_loss_and_grad(const TinyNeuralLm& model, const std::vector<TokenSeq>& seqs,
                            std::span<const WindowRef> windows, NeuralGradients* grads) {
    if (windows.empty()) throw EmptyCorpus("no training windows");
    const int C = model.context_window();
    const int d = model.embed_dim();
    const std::size_t n = windows.size();

    if (grads) grads->zero_like(model);

    double loss_sum = 0.0;
    std::vector<TokenId> ctx_tokens;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t b = std::min(kChunk, n - start);
        Matrix X(C * d, static_cast<Eigen::Index>(b));
        if (grads) ctx_tokens.assign(b * static_cast<std::size_t>(C), 0);
        for (std::size_t k = 0; k < b; ++k) {
            const WindowRef& w = windows[start + k];
            fill_context_column(model, seqs[w.seq], w.pos, X, static_cast<Eigen::Index>(k),
                                grads ? &ctx_tokens : nullptr);
        }

        Matrix H = ((model.W1 * X).colwise() + model.b1).array().tanh();
        Matrix logits = (model.W2 * H).colwise() + model.b2;

        Matrix dlogits;
        if (grads) dlogits.resize(logits.rows(), logits.cols());
        for (std::size_t k = 0; k < b; ++k) {
            auto colv = logits.col(static_cast<Eigen::Index>(k));
            double m = colv.maxCoeff();
            double lse = m + std::log((colv.array() - m).exp().sum());
            TokenId target = seqs[windows[start + k].seq][windows[start + k].pos];
            loss_sum += lse - colv(target);
            if (grads) {
                dlogits.col(static_cast<Eigen::Index>(k)) = (colv.array() - lse).exp();
                dlogits(target, static_cast<Eigen::Index>(k)) -= 1.0;
            }
        }

        if (grads) {
            grads->dW2.noalias() += dlogits * H.transpose();
            grads->db2 += dlogits.rowwise().sum();
            Matrix dH = model.W2.transpose() * dlogits;
            Matrix dA = dH.array() * (1.0 - H.array().square());
            grads->dW1.noalias() += dA * X.transpose();
            grads->db1 += dA.rowwise().sum();
            Matrix dX = model.W1.transpose() * dA;
            for (std::size_t k = 0; k < b; ++k) {
                for (int i = 0; i < C; ++i) {
                    TokenId tok = ctx_tokens[k * static_cast<std::size_t>(C) +
                                             static_cast<std::size_t>(i)];
                    grads->dE.row(tok) +=
                        dX.block(i * d, static_cast<Eigen::Index>(k), d, 1).transpose();
                }
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    if (grads) {
        grads->dE *= inv_n;
        grads->dW1 *= inv_n;
        grads->db1 *= inv_n;
        grads->dW2 *= inv_n;
        grads->db2 *= inv_n;
    }
    return loss_sum * inv_n;
}

TinyNeuralLm neural_train(TinyNeuralLm model, const std::vector<Document>& corpus,
                          const TrainConfig& cfg, TrainTrace* trace) {
    if (corpus.empty()) throw EmptyCorpus("neural training needs a corpus");
    auto seqs = corpus_sequences(corpus);
    auto windows = all_windows(seqs);
    if (windows.empty()) throw EmptyCorpus("corpus has no training windows");

    AdamW opt(cfg.adamw);
    Matrix mE = Matrix::Zero(model.E.rows(), model.E.cols());
    Matrix vE = mE;
    Matrix mW1 = Matrix::Zero(model.W1.rows(), model.W1.cols());
    Matrix vW1 = mW1;
    Vector mb1 = Vector::Zero(model.b1.size());
    Vector vb1 = mb1;
    Matrix mW2 = Matrix::Zero(model.W2.rows(), model.W2.cols());
    Matrix vW2 = mW2;
    Vector mb2 = Vector::Zero(model.b2.size());
    Vector vb2 = mb2;

    const std::size_t batch = cfg.batch_size < 1 ? 1 : static_cast<std::size_t>(cfg.batch_size);
    NeuralGradients g;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_weighted = 0.0;
        for (std::size_t start = 0; start < windows.size(); start += batch) {
            std::size_t b = std::min(batch, windows.size() - start);
            double loss = neural_loss_and_grad(
                model, seqs, std::span<const WindowRef>(windows.data() + start, b), &g);
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss("loss diverged at epoch " + std::to_string(epoch));
            }
            loss_weighted += loss * static_cast<double>(b);
            opt.begin_step();
            opt.update(model.E, g.dE, mE, vE);
            opt.update(model.W1, g.dW1, mW1, vW1);
            opt.update(model.b1, g.db1, mb1, vb1);
            opt.update(model.W2, g.dW2, mW2, vW2);
            opt.update(model.b2, g.db2, mb2, vb2);
        }
        if (trace) trace->epoch_loss.push_back(loss_weighted / static_cast<double>(windows.size()));
    }
    return model;
}

// ---- soft prompt machinery ----

namespace {

struct SoftForward {
    Matrix X;        // (C*d) x L_t context columns
    Matrix H;        // H x L_t
    Matrix logits;   // V x L_t
    Vector lse;      // per-column log-sum-exp
    std::vector<TokenId> targets;
    std::vector<Eigen::Index> pad;  // per-column BOS padding length
    double nll = 0.0;
};

SoftForward soft_forward(const TinyNeuralLm& model, const Matrix& soft, const std::string& prompt,
                         const std::string& target) {
    if (target.empty()) throw EmptyContinuation("soft-prompt scoring needs a target");
    const int C = model.context_window();
    const int d = model.embed_dim();
    if (soft.cols() != d) throw DimensionMismatch("soft prompt width must equal embed_dim");

    std::vector<TokenId> prompt_ids = Tokenizer::encode(prompt);
    std::vector<TokenId> target_ids = Tokenizer::encode_raw(target);
    const Eigen::Index Ls = soft.rows();
    const Eigen::Index Lp = static_cast<Eigen::Index>(prompt_ids.size());
    const Eigen::Index Lt = static_cast<Eigen::Index>(target_ids.size());
    if (Ls + Lp + Lt > C) {
        throw ContextOverflow("soft + prompt + target = " + std::to_string(Ls + Lp + Lt) +
                              " exceeds context window " + std::to_string(C));
    }

    // Full embedded sequence: soft rows, then prompt rows, then target rows.
    Matrix rows(Ls + Lp + Lt, d);
    rows.topRows(Ls) = soft;
    for (Eigen::Index i = 0; i < Lp; ++i) {
        rows.row(Ls + i) = model.E.row(prompt_ids[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index i = 0; i < Lt; ++i) {
        rows.row(Ls + Lp + i) = model.E.row(target_ids[static_cast<std::size_t>(i)]);
    }

    SoftForward f;
    f.targets = target_ids;
    f.pad.resize(static_cast<std::size_t>(Lt));
    f.X.resize(C * d, Lt);
    for (Eigen::Index r = 0; r < Lt; ++r) {
        Eigen::Index used = Ls + Lp + r;
        Eigen::Index pad = C - used;
        f.pad[static_cast<std::size_t>(r)] = pad;
        for (Eigen::Index i = 0; i < pad; ++i) {
            f.X.block(i * d, r, d, 1) = model.E.row(Tokenizer::kBos).transpose();
        }
        for (Eigen::Index i = 0; i < used; ++i) {
            f.X.block((pad + i) * d, r, d, 1) = rows.row(i).transpose();
        }
    }

    f.H = ((model.W1 * f.X).colwise() + model.b1).array().tanh();
    f.logits = (model.W2 * f.H).colwise() + model.b2;
    f.lse.resize(Lt);
    for (Eigen::Index r = 0; r < Lt; ++r) {
        auto colv = f.logits.col(r);
        double m = colv.maxCoeff();
        double lse = m + std::log((colv.array() - m).exp().sum());
        f.lse(r) = lse;
        f.nll += lse - colv(target_ids[static_cast<std::size_t>(r)]);
    }
    return f;
}

} // namespace

SoftGradResult grad_wrt_soft(const TinyNeuralLm& model, const Matrix& soft,
                             const std::string& prompt, const std::string& target) {
    SoftForward f = soft_forward(model, soft, prompt, target);
    const int d = model.embed_dim();
    const Eigen::Index Ls = soft.rows();
    const Eigen::Index Lt = f.logits.cols();

    Matrix dlogits(f.logits.rows(), Lt);
    for (Eigen::Index r = 0; r < Lt; ++r) {
        dlogits.col(r) = (f.logits.col(r).array() - f.lse(r)).exp();
        dlogits(f.targets[static_cast<std::size_t>(r)], r) -= 1.0;
    }
    Matrix dH = model.W2.transpose() * dlogits;
    Matrix dA = dH.array() * (1.0 - f.H.array().square());
    Matrix dX = model.W1.transpose() * dA;  // (C*d) x L_t

    SoftGradResult result;
    result.nll = f.nll;
    result.grad = Matrix::Zero(Ls, d);
    for (Eigen::Index r = 0; r < Lt; ++r) {
        Eigen::Index pad = f.pad[static_cast<std::size_t>(r)];
        // Soft row j occupies context position pad + j; everything in front
        // is BOS padding and everything behind is frozen table rows.
        for (Eigen::Index j = 0; j < Ls; ++j) {
            result.grad.row(j) += dX.block((pad + j) * d, r, d, 1).transpose();
        }
    }
    return result;
}

double soft_nll(const TinyNeuralLm& model, const Matrix& soft, const std::string& prompt,
                const std::string& target) {
    return soft_forward(model, soft, prompt, target).nll;
}

std::vector<double> soft_score_tokens(const TinyNeuralLm& model, const Matrix& soft,
                                      const std::string& prompt, const std::string& target) {
    SoftForward f = soft_forward(model, soft, prompt, target);
    std::vector<double> out;
    out.reserve(f.targets.size());
    for (Eigen::Index r = 0; r < f.logits.cols(); ++r) {
        out.push_back(f.logits(f.targets[static_cast<std::size_t>(r)], r) - f.lse(r));
    }
    return out;
}

GenerationResult soft_greedy_decode(const TinyNeuralLm& model, const Matrix& soft,
                                    const std::string& prompt, int max_new_tokens) {
    if (max_new_tokens < 1) throw Error("max_new_tokens must be >= 1");
    const int d = model.embed_dim();
    if (soft.cols() != d) throw DimensionMismatch("soft prompt width must equal embed_dim");

    std::vector<TokenId> prompt_ids = Tokenizer::encode(prompt);
    Matrix rows(soft.rows() + static_cast<Eigen::Index>(prompt_ids.size()), d);
    rows.topRows(soft.rows()) = soft;
    for (std::size_t i = 0; i < prompt_ids.size(); ++i) {
        rows.row(soft.rows() + static_cast<Eigen::Index>(i)) = model.E.row(prompt_ids[i]);
    }

    GenerationResult result;
    for (int step = 0; step < max_new_tokens; ++step) {
        Vector lp = log_softmax(model.forward_rows(rows));
        TokenId best = 0;
        for (TokenId t = 1; t < kV; ++t) {
            if (lp(t) > lp(best)) best = t;  // ties keep the lower id
        }
        if (best == Tokenizer::kEos) {
            result.finish_reason = FinishReason::Stop;
            break;
        }
        result.token_ids.push_back(best);
        result.token_logprobs.push_back(lp(best));
        rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
        rows.row(rows.rows() - 1) = model.E.row(best);
    }
    result.text = Tokenizer::decode(result.token_ids);
    return result;
}

} // namespace piiprobe
