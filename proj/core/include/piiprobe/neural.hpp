#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "piiprobe/backend.hpp"
#include "piiprobe/corpus.hpp"

namespace piiprobe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NeuralConfig {
    int context_window = 96;
    int embed_dim = 32;
    int hidden_dim = 64;
    std::uint64_t seed = 0;
};

// Fixed-window feed-forward next-token model over the character vocabulary:
//
//   h      = tanh(W1 * flatten(context embeddings) + b1)
//   logits = W2 * h + b2
//
// The context is the last C positions' embeddings, left-padded with the BOS
// embedding; positions occupied by soft-prompt vectors bypass the table.
// Every derivative used anywhere in the toolkit is analytic and checked
// against central finite differences in the tests.
class TinyNeuralLm : public ConditionalLm {
public:
    // Parameters drawn uniformly in +-1/sqrt(fan_in) from a splitmix stream;
    // bit-identical for equal configs.
    static TinyNeuralLm init(const NeuralConfig& cfg);

    int context_window() const { return cfg_.context_window; }
    int embed_dim() const { return cfg_.embed_dim; }
    int hidden_dim() const { return cfg_.hidden_dim; }
    std::uint64_t seed() const { return cfg_.seed; }
    std::string model_id() const override { return model_id_; }

    // Raw logits for one already-assembled context (C x d). Throws
    // DimensionMismatch on wrong shape.
    Vector forward(const Matrix& context) const;

    // Logits for the suffix of an embedded row sequence (any length; the
    // last C rows are used, BOS-padded on the left when shorter).
    Vector forward_rows(const Matrix& rows) const;

    std::vector<double> next_logprobs(std::span<const TokenId> context) const override;

    // len x d matrix of table rows for a token sequence.
    Matrix embed(std::span<const TokenId> ids) const;

    const Matrix& embeddings() const { return E; }

    void save(const std::string& path) const;
    static TinyNeuralLm load(const std::string& path);

    // A fingerprint over all parameter bytes, for frozen-model assertions.
    std::uint64_t parameter_checksum() const;

    Matrix E;   // V x d token embeddings
    Matrix W1;  // H x (C*d)
    Vector b1;  // H
    Matrix W2;  // V x H
    Vector b2;  // V

private:
    TinyNeuralLm() = default;
    NeuralConfig cfg_;
    std::string model_id_;
};

// ---- training ----

using TokenSeq = std::vector<TokenId>;

// BOS-prefixed, EOS-suffixed token sequences, one per document.
std::vector<TokenSeq> corpus_sequences(const std::vector<Document>& corpus);

struct WindowRef {
    std::size_t seq = 0;
    std::size_t pos = 0;  // index of the predicted token within the sequence
};

// Every next-token window over the sequences, in (document, position) order.
std::vector<WindowRef> all_windows(const std::vector<TokenSeq>& seqs);

struct NeuralGradients {
    Matrix dE, dW1, dW2;
    Vector db1, db2;
    void zero_like(const TinyNeuralLm& model);
};

// Mean next-token cross-entropy over the given windows; fills `grads` with
// the gradient of that mean when non-null. Windows are processed in fixed
// chunks so the summation order never depends on callers.
double neural_loss_and_grad(const TinyNeuralLm& model, const std::vector<TokenSeq>& seqs,
                            std::span<const WindowRef> windows, NeuralGradients* grads);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled AdamW: p *= (1 - lr*wd), then p -= lr * mhat / (sqrt(vhat)+eps).
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}
    void begin_step() { ++t_; }

    template <typename T>
    void update(T& param, const T& grad, T& m, T& v) const {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
        v = (cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * grad.array().square()).matrix();
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        param *= (1.0 - cfg_.lr * cfg_.weight_decay);
        param.array() -= cfg_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
    }

    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    long t_ = 0;
};

struct TrainConfig {
    int epochs = 1;
    int batch_size = 64;
    AdamWConfig adamw;  // lr 1e-3, wd 0.01 defaults
    bool verbose = false;
};

struct TrainTrace {
    std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Deterministic minibatch AdamW over all windows in corpus order (no
// shuffling). Throws EmptyCorpus / NonFiniteLoss.
TinyNeuralLm neural_train(TinyNeuralLm model, const std::vector<Document>& corpus,
                          const TrainConfig& cfg, TrainTrace* trace = nullptr);

// ---- soft-prompt gradients ----

struct SoftGradResult {
    Matrix grad;  // L_s x d, d(NLL)/d(soft)
    double nll;   // -sum_r log p(target_r | soft ++ prompt ++ target_<r)
};

// Backpropagates only into the soft vectors; the model is const. Requires
// L_s + |prompt tokens| + |target tokens| <= C (ContextOverflow otherwise).
SoftGradResult grad_wrt_soft(const TinyNeuralLm& model, const Matrix& soft,
                             const std::string& prompt, const std::string& target);

// NLL of `target` after [soft ++ prompt], same convention as grad_wrt_soft.
double soft_nll(const TinyNeuralLm& model, const Matrix& soft, const std::string& prompt,
                const std::string& target);

// Per-token logprobs of `target` with the soft prompt prepended.
std::vector<double> soft_score_tokens(const TinyNeuralLm& model, const Matrix& soft,
                                      const std::string& prompt, const std::string& target);

// Greedy decoding with the soft prompt prepended to the embedded prompt.
GenerationResult soft_greedy_decode(const TinyNeuralLm& model, const Matrix& soft,
                                    const std::string& prompt, int max_new_tokens);

} // namespace piiprobe
