#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvi/hashing.hpp"

namespace kvi {

struct ModelConfig {
    int num_layers = 4;
    int num_heads = 4;
    int head_dim = 16;
    int vocab_size = 260;
    int max_positions = 1024;
    std::uint64_t seed = 7;

    int hidden() const noexcept { return num_heads * head_dim; }
    int ffn_dim() const noexcept { return 4 * hidden(); }

    /// Throws ConfigError on non-positive dimensions, an odd head_dim or a
    /// vocabulary too small for the byte tokenizer.
    void validate() const;
};

// Byte-level tokenizer: ids 0..255 are raw bytes, the rest are specials.
namespace token {
inline constexpr int kBos = 256;
inline constexpr int kEot = 257;
inline constexpr int kPad = 258;
inline constexpr int kSep = 259;
inline constexpr int kMinVocab = 260;
}  // namespace token

std::vector<int> tokenize(std::string_view text);
/// Special ids are dropped.
std::string detokenize(std::span<const int> ids);

/// Keys and values of one layer, laid out [head][position][dim].
struct LayerKV {
    int num_heads = 0;
    int head_dim = 0;
    int seq_len = 0;
    int base_position = 0;
    std::vector<float> keys;
    std::vector<float> values;

    static LayerKV empty(int num_heads, int head_dim, int base_position = 0);

    float* key(int head, int pos) { return keys.data() + offset(head, pos); }
    const float* key(int head, int pos) const { return keys.data() + offset(head, pos); }
    float* value(int head, int pos) { return values.data() + offset(head, pos); }
    const float* value(int head, int pos) const { return values.data() + offset(head, pos); }

    /// Appends `other` after the current slots (shapes must agree).
    void append(const LayerKV& other);
    /// Slots [from, from + len) with base_position shifted accordingly.
    LayerKV slice(int from, int len) const;

    bool operator==(const LayerKV&) const = default;

private:
    size_t offset(int head, int pos) const {
        return (static_cast<size_t>(head) * seq_len + pos) * head_dim;
    }
};

/// One LayerKV per layer.
using KvState = std::vector<LayerKV>;

/// Segment id meaning "may attend to every earlier token of this call".
inline constexpr int kGlobalSegment = -1;

using AttentionObserver =
    std::function<void(int layer, int head, int query_index, std::span<const float> weights)>;

struct ForwardOptions {
    /// Optional per-token segment ids. A token attends to every past slot and
    /// to earlier tokens of this call in the same segment; kGlobalSegment
    /// tokens attend to all earlier tokens.
    std::span<const int> segments;
    /// Receives each softmax row (past slots first, then current tokens).
    const AttentionObserver* observer = nullptr;
};

struct ForwardResult {
    int rows = 0;
    int vocab = 0;
    std::vector<float> logits;  // rows x vocab
    KvState new_kv;             // current tokens only

    std::span<const float> row(int i) const {
        return std::span<const float>(logits).subspan(static_cast<size_t>(i) * vocab, vocab);
    }
};

struct GenerationResult {
    std::vector<int> tokens;
    /// Attention memory after decoding: past, then prompt, then generated tokens.
    KvState cache;
};

/// Deterministic decoder-only transformer with rotary positions. Weights are
/// fixed at construction; every method is const and thread-safe.
///
/// Random weights come from SplitMix64 streams seeded with
/// `seed ^ fnv1a64(tensor_name)`, each element `scale * (2u - 1)` with u
/// uniform in [0, 1); norm gains are 1.
class FrozenModel {
public:
    explicit FrozenModel(const ModelConfig& config);

    /// Imports a KVIM weight file. `max_positions` and `seed` are taken from
    /// `runtime`, dimensions from the file.
    static FrozenModel load_weights(const std::string& path, const ModelConfig& runtime = {});
    void save_weights(const std::string& path) const;
    std::vector<std::uint8_t> serialize_weights() const;

    const ModelConfig& config() const noexcept { return config_; }
    /// sha256 of the serialized weight file.
    const Sha256Digest& fingerprint() const noexcept { return fingerprint_; }

    /// Attends over [past ; current] per layer. `past` is empty or has one
    /// entry per layer (entries may have different lengths). Returned keys
    /// are rotary-encoded at positions [position_offset, position_offset + n).
    ForwardResult forward(std::span<const int> tokens, std::span<const LayerKV> past,
                          int position_offset, const ForwardOptions& options = {}) const;

    /// Greedy decoding. Stops after `max_new` tokens or at kEot (not emitted).
    GenerationResult generate(std::span<const int> prompt, std::span<const LayerKV> past,
                              int position_offset, int max_new) const;

    /// Re-encodes keys as if their content had started at `new_base_position`.
    LayerKV rotate_keys(const LayerKV& kv, int new_base_position) const;

private:
    struct LayerWeights {
        std::vector<float> attn_norm, wq, wk, wv, wo, ffn_norm, w_up, w_down;
    };

    FrozenModel() = default;
    void finalize();
    void rotate(float* vec, int position) const;
    void rotate_by(float* vec, double delta) const;

    ModelConfig config_;
    std::vector<float> tok_embedding_;  // vocab x hidden
    std::vector<LayerWeights> layers_;
    std::vector<float> final_norm_;
    std::vector<float> lm_head_;        // vocab x hidden
    std::vector<double> inv_freq_;      // head_dim / 2
    Sha256Digest fingerprint_{};
};

/// Index of the largest logit; lowest index on ties.
int argmax(std::span<const float> logits);

}  // namespace kvi
