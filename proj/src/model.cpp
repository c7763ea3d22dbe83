#include "kvi/model.hpp"

#include <algorithm>
#include <cmath>

#include "kvi/binary_io.hpp"
#include "kvi/errors.hpp"

namespace kvi {

namespace {

constexpr char kWeightMagic[4] = {'K', 'V', 'I', 'M'};
constexpr std::uint32_t kWeightVersion = 1;
constexpr double kRopeBase = 10000.0;
constexpr float kNormEps = 1e-5f;

std::vector<float> random_tensor(std::uint64_t seed, const std::string& name, size_t n, double scale) {
    SplitMix64 rng{seed ^ fnv1a64(name)};
    std::vector<float> out(n);
    for (auto& w : out) w = static_cast<float>(scale * (2.0 * rng.uniform() - 1.0));
    return out;
}

void rms_norm(const float* x, const std::vector<float>& gain, float* out, int n) {
    float ss = 0.0f;
    for (int i = 0; i < n; ++i) ss += x[i] * x[i];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(n) + kNormEps);
    for (int i = 0; i < n; ++i) out[i] = x[i] * inv * gain[i];
}

// y[out] = x[in] * W[in][out]
void matvec(const float* x, const std::vector<float>& w, float* y, int in, int out) {
    std::fill(y, y + out, 0.0f);
    for (int i = 0; i < in; ++i) {
        const float xi = x[i];
        const float* row = w.data() + static_cast<size_t>(i) * out;
        for (int j = 0; j < out; ++j) y[j] += xi * row[j];
    }
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

}  // namespace

void ModelConfig::validate() const {
    if (num_layers < 1 || num_heads < 1 || head_dim < 1 || vocab_size < 1 || max_positions < 1) {
        throw ConfigError("model dimensions must all be >= 1");
    }
    if (head_dim % 2 != 0) throw ConfigError("head_dim must be even for rotary encoding");
    if (vocab_size < token::kMinVocab) {
        throw ConfigError("vocab_size must be >= " + std::to_string(token::kMinVocab));
    }
}

// --- tokenizer ---------------------------------------------------------------

std::vector<int> tokenize(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(c);
    return out;
}

std::string detokenize(std::span<const int> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id >= 0 && id < 256) out += static_cast<char>(static_cast<unsigned char>(id));
    }
    return out;
}

// --- LayerKV -----------------------------------------------------------------

LayerKV LayerKV::empty(int num_heads, int head_dim, int base_position) {
    LayerKV kv;
    kv.num_heads = num_heads;
    kv.head_dim = head_dim;
    kv.base_position = base_position;
    return kv;
}

void LayerKV::append(const LayerKV& other) {
    if (other.num_heads != num_heads || other.head_dim != head_dim) {
        throw ShapeError("cannot append KV with a different head layout");
    }
    if (other.seq_len == 0) return;
    const int total = seq_len + other.seq_len;
    std::vector<float> k(static_cast<size_t>(num_heads) * total * head_dim);
    std::vector<float> v(k.size());
    const size_t mine = static_cast<size_t>(seq_len) * head_dim;
    const size_t theirs = static_cast<size_t>(other.seq_len) * head_dim;
    for (int h = 0; h < num_heads; ++h) {
        float* kd = k.data() + static_cast<size_t>(h) * total * head_dim;
        float* vd = v.data() + static_cast<size_t>(h) * total * head_dim;
        std::copy_n(keys.data() + h * mine, mine, kd);
        std::copy_n(values.data() + h * mine, mine, vd);
        std::copy_n(other.keys.data() + h * theirs, theirs, kd + mine);
        std::copy_n(other.values.data() + h * theirs, theirs, vd + mine);
    }
    keys = std::move(k);
    values = std::move(v);
    seq_len = total;
}

LayerKV LayerKV::slice(int from, int len) const {
    if (from < 0 || len < 0 || from + len > seq_len) throw ShapeError("KV slice out of range");
    LayerKV out = empty(num_heads, head_dim, base_position + from);
    out.seq_len = len;
    out.keys.resize(static_cast<size_t>(num_heads) * len * head_dim);
    out.values.resize(out.keys.size());
    for (int h = 0; h < num_heads; ++h) {
        std::copy_n(key(h, from), static_cast<size_t>(len) * head_dim, out.key(h, 0));
        std::copy_n(value(h, from), static_cast<size_t>(len) * head_dim, out.value(h, 0));
    }
    return out;
}

// --- model -------------------------------------------------------------------

FrozenModel::FrozenModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const int d = config_.hidden();
    const int f = config_.ffn_dim();
    const int v = config_.vocab_size;
    const auto seed = config_.seed;
    const double lin = std::sqrt(3.0 / d);
    tok_embedding_ = random_tensor(seed, "tok_embedding", static_cast<size_t>(v) * d, 1.0);
    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerWeights w;
        w.attn_norm.assign(d, 1.0f);
        w.wq = random_tensor(seed, p + "wq", static_cast<size_t>(d) * d, lin);
        w.wk = random_tensor(seed, p + "wk", static_cast<size_t>(d) * d, lin);
        w.wv = random_tensor(seed, p + "wv", static_cast<size_t>(d) * d, lin);
        w.wo = random_tensor(seed, p + "wo", static_cast<size_t>(d) * d, lin);
        w.ffn_norm.assign(d, 1.0f);
        w.w_up = random_tensor(seed, p + "w_up", static_cast<size_t>(d) * f, lin);
        w.w_down = random_tensor(seed, p + "w_down", static_cast<size_t>(f) * d, std::sqrt(3.0 / f));
        layers_.push_back(std::move(w));
    }
    final_norm_.assign(d, 1.0f);
    lm_head_ = random_tensor(seed, "lm_head", static_cast<size_t>(v) * d, lin);
    finalize();
}

void FrozenModel::finalize() {
    inv_freq_.resize(config_.head_dim / 2);
    for (int i = 0; i < config_.head_dim / 2; ++i) {
        inv_freq_[i] = std::pow(kRopeBase, -2.0 * i / config_.head_dim);
    }
    const auto bytes = serialize_weights();
    fingerprint_ = sha256(bytes);
}

std::vector<std::uint8_t> FrozenModel::serialize_weights() const {
    ByteWriter w;
    w.bytes(kWeightMagic, 4);
    w.u32(kWeightVersion);
    w.u32(static_cast<std::uint32_t>(config_.num_layers));
    w.u32(static_cast<std::uint32_t>(config_.num_heads));
    w.u32(static_cast<std::uint32_t>(config_.head_dim));
    w.u32(static_cast<std::uint32_t>(config_.vocab_size));
    auto block = [&](const std::string& name, const std::vector<float>& t) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.size()));
        w.floats(t);
    };
    block("tok_embedding", tok_embedding_);
    for (size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const auto& L = layers_[l];
        block(p + "attn_norm", L.attn_norm);
        block(p + "wq", L.wq);
        block(p + "wk", L.wk);
        block(p + "wv", L.wv);
        block(p + "wo", L.wo);
        block(p + "ffn_norm", L.ffn_norm);
        block(p + "w_up", L.w_up);
        block(p + "w_down", L.w_down);
    }
    block("final_norm", final_norm_);
    block("lm_head", lm_head_);
    return w.take();
}

void FrozenModel::save_weights(const std::string& path) const {
    write_file_bytes(path, serialize_weights());
}

FrozenModel FrozenModel::load_weights(const std::string& path, const ModelConfig& runtime) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kWeightMagic)) throw FormatError("byte 0", "not a KVIM weight file");
    if (const auto v = r.u32(); v != kWeightVersion) {
        throw FormatError("byte 4", "unsupported weight version " + std::to_string(v));
    }
    FrozenModel m;
    m.config_ = runtime;
    m.config_.num_layers = static_cast<int>(r.u32());
    m.config_.num_heads = static_cast<int>(r.u32());
    m.config_.head_dim = static_cast<int>(r.u32());
    m.config_.vocab_size = static_cast<int>(r.u32());
    m.config_.validate();
    const size_t d = m.config_.hidden();
    const size_t f = m.config_.ffn_dim();
    const size_t v = m.config_.vocab_size;
    auto block = [&](const std::string& name, size_t count) {
        const size_t at = r.offset();
        if (r.str() != name) throw FormatError("byte " + std::to_string(at), "expected tensor " + name);
        if (r.u32() != count) throw FormatError("byte " + std::to_string(at), "wrong size for " + name);
        std::vector<float> t(count);
        r.floats(t);
        return t;
    };
    m.tok_embedding_ = block("tok_embedding", v * d);
    for (int l = 0; l < m.config_.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerWeights w;
        w.attn_norm = block(p + "attn_norm", d);
        w.wq = block(p + "wq", d * d);
        w.wk = block(p + "wk", d * d);
        w.wv = block(p + "wv", d * d);
        w.wo = block(p + "wo", d * d);
        w.ffn_norm = block(p + "ffn_norm", d);
        w.w_up = block(p + "w_up", d * f);
        w.w_down = block(p + "w_down", f * d);
        m.layers_.push_back(std::move(w));
    }
    m.final_norm_ = block("final_norm", d);
    m.lm_head_ = block("lm_head", v * d);
    if (!r.at_end()) throw FormatError("byte " + std::to_string(r.offset()), "trailing data");
    m.finalize();
    return m;
}

// Pairs (i, i + head_dim/2) rotate by position * inv_freq[i].
void FrozenModel::rotate_by(float* vec, double delta) const {
    const int half = config_.head_dim / 2;
    for (int i = 0; i < half; ++i) {
        const double angle = delta * inv_freq_[i];
        const float c = static_cast<float>(std::cos(angle));
        const float s = static_cast<float>(std::sin(angle));
        const float a = vec[i];
        const float b = vec[i + half];
        vec[i] = a * c - b * s;
        vec[i + half] = a * s + b * c;
    }
}

void FrozenModel::rotate(float* vec, int position) const { rotate_by(vec, static_cast<double>(position)); }

LayerKV FrozenModel::rotate_keys(const LayerKV& kv, int new_base_position) const {
    if (kv.num_heads != config_.num_heads || kv.head_dim != config_.head_dim) {
        throw ShapeError("KV head layout does not match the model");
    }
    if (new_base_position < 0 || new_base_position + kv.seq_len > config_.max_positions) {
        throw OverflowError("rotating to base " + std::to_string(new_base_position) + " overflows max_positions");
    }
    LayerKV out = kv;
    out.base_position = new_base_position;
    const int delta = new_base_position - kv.base_position;
    if (delta == 0) return out;
    for (int h = 0; h < kv.num_heads; ++h) {
        for (int p = 0; p < kv.seq_len; ++p) rotate_by(out.key(h, p), static_cast<double>(delta));
    }
    return out;
}

ForwardResult FrozenModel::forward(std::span<const int> tokens, std::span<const LayerKV> past,
                                   int position_offset, const ForwardOptions& options) const {
    const int n = static_cast<int>(tokens.size());
    const int d = config_.hidden();
    const int f = config_.ffn_dim();
    const int H = config_.num_heads;
    const int hd = config_.head_dim;
    const int V = config_.vocab_size;

    if (position_offset < 0 || position_offset + n > config_.max_positions) {
        throw OverflowError("positions [" + std::to_string(position_offset) + ", " +
                            std::to_string(position_offset + n) + ") exceed max_positions " +
                            std::to_string(config_.max_positions));
    }
    if (!past.empty() && static_cast<int>(past.size()) != config_.num_layers) {
        throw ShapeError("past must have one entry per layer");
    }
    for (const auto& p : past) {
        if (p.num_heads != H || p.head_dim != hd ||
            p.keys.size() != static_cast<size_t>(H) * p.seq_len * hd || p.values.size() != p.keys.size()) {
            throw ShapeError("past KV shape does not match the model");
        }
    }
    if (!options.segments.empty() && static_cast<int>(options.segments.size()) != n) {
        throw ShapeError("segments must have one id per token");
    }
    for (int t : tokens) {
        if (t < 0 || t >= V) throw ConfigError("token id " + std::to_string(t) + " outside vocabulary");
    }

    ForwardResult res;
    res.rows = n;
    res.vocab = V;
    res.new_kv.reserve(config_.num_layers);

    std::vector<float> x(static_cast<size_t>(n) * d);
    for (int t = 0; t < n; ++t) {
        std::copy_n(tok_embedding_.data() + static_cast<size_t>(tokens[t]) * d, d, x.data() + static_cast<size_t>(t) * d);
    }

    std::vector<float> h(d), q(static_cast<size_t>(n) * d), attn(d), proj(d), up(f);
    std::vector<float> scores;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    for (int l = 0; l < config_.num_layers; ++l) {
        const auto& W = layers_[l];
        const LayerKV* prev = past.empty() ? nullptr : &past[l];
        const int P = prev ? prev->seq_len : 0;

        LayerKV cur = LayerKV::empty(H, hd, position_offset);
        cur.seq_len = n;
        cur.keys.resize(static_cast<size_t>(H) * n * hd);
        cur.values.resize(cur.keys.size());

        std::vector<float> kbuf(d), vbuf(d);
        for (int t = 0; t < n; ++t) {
            rms_norm(x.data() + static_cast<size_t>(t) * d, W.attn_norm, h.data(), d);
            float* qt = q.data() + static_cast<size_t>(t) * d;
            matvec(h.data(), W.wq, qt, d, d);
            matvec(h.data(), W.wk, kbuf.data(), d, d);
            matvec(h.data(), W.wv, vbuf.data(), d, d);
            for (int hh = 0; hh < H; ++hh) {
                rotate(qt + hh * hd, position_offset + t);
                float* kd = cur.key(hh, t);
                std::copy_n(kbuf.data() + hh * hd, hd, kd);
                rotate(kd, position_offset + t);
                std::copy_n(vbuf.data() + hh * hd, hd, cur.value(hh, t));
            }
        }

        for (int t = 0; t < n; ++t) {
            const float* qt = q.data() + static_cast<size_t>(t) * d;
            for (int hh = 0; hh < H; ++hh) {
                const float* qh = qt + hh * hd;
                scores.assign(static_cast<size_t>(P) + t + 1, 0.0f);
                std::vector<bool> visible(static_cast<size_t>(t) + 1, true);
                if (!options.segments.empty()) {
                    const int seg = options.segments[t];
                    for (int j = 0; j <= t; ++j) {
                        visible[j] = seg == kGlobalSegment || options.segments[j] == seg;
                    }
                }
                float mx = -INFINITY;
                for (int j = 0; j < P; ++j) {
                    const float* kj = prev->key(hh, j);
                    float s = 0.0f;
                    for (int e = 0; e < hd; ++e) s += qh[e] * kj[e];
                    scores[j] = s * scale;
                    mx = std::max(mx, scores[j]);
                }
                for (int j = 0; j <= t; ++j) {
                    if (!visible[j]) continue;
                    const float* kj = cur.key(hh, j);
                    float s = 0.0f;
                    for (int e = 0; e < hd; ++e) s += qh[e] * kj[e];
                    scores[P + j] = s * scale;
                    mx = std::max(mx, scores[P + j]);
                }
                // Denominator in double so every row normalizes to 1 within a few ulp.
                double sum = 0.0;
                for (int j = 0; j < P + t + 1; ++j) {
                    const bool on = j < P || visible[j - P];
                    scores[j] = on ? std::exp(scores[j] - mx) : 0.0f;
                    sum += scores[j];
                }
                const float inv_sum = static_cast<float>(1.0 / sum);
                for (auto& s : scores) s *= inv_sum;
                if (options.observer) (*options.observer)(l, hh, t, scores);

                float* out = attn.data() + hh * hd;
                std::fill(out, out + hd, 0.0f);
                for (int j = 0; j < P; ++j) {
                    const float* vj = prev->value(hh, j);
                    for (int e = 0; e < hd; ++e) out[e] += scores[j] * vj[e];
                }
                for (int j = 0; j <= t; ++j) {
                    if (!visible[j]) continue;
                    const float* vj = cur.value(hh, j);
                    for (int e = 0; e < hd; ++e) out[e] += scores[P + j] * vj[e];
                }
            }
            float* xt = x.data() + static_cast<size_t>(t) * d;
            matvec(attn.data(), W.wo, proj.data(), d, d);
            for (int i = 0; i < d; ++i) xt[i] += proj[i];

            rms_norm(xt, W.ffn_norm, h.data(), d);
            matvec(h.data(), W.w_up, up.data(), d, f);
            for (auto& u : up) u = silu(u);
            matvec(up.data(), W.w_down, proj.data(), f, d);
            for (int i = 0; i < d; ++i) xt[i] += proj[i];
        }
        res.new_kv.push_back(std::move(cur));
    }

    res.logits.assign(static_cast<size_t>(n) * V, 0.0f);
    for (int t = 0; t < n; ++t) {
        rms_norm(x.data() + static_cast<size_t>(t) * d, final_norm_, h.data(), d);
        float* row = res.logits.data() + static_cast<size_t>(t) * V;
        for (int v = 0; v < V; ++v) {
            const float* w = lm_head_.data() + static_cast<size_t>(v) * d;
            float s = 0.0f;
            for (int i = 0; i < d; ++i) s += h[i] * w[i];
            row[v] = s;
        }
    }
    return res;
}

GenerationResult FrozenModel::generate(std::span<const int> prompt, std::span<const LayerKV> past,
                                       int position_offset, int max_new) const {
    if (max_new < 0) throw ConfigError("max_new must be >= 0");
    const long long end = static_cast<long long>(position_offset) + prompt.size() + max_new;
    if (position_offset < 0 || end > config_.max_positions) {
        throw OverflowError("generation would reach position " + std::to_string(end) +
                            " beyond max_positions " + std::to_string(config_.max_positions));
    }
    GenerationResult out;
    if (past.empty()) {
        for (int l = 0; l < config_.num_layers; ++l) out.cache.push_back(LayerKV::empty(config_.num_heads, config_.head_dim));
    } else {
        out.cache.assign(past.begin(), past.end());
    }
    if (max_new == 0 || prompt.empty()) return out;

    auto step = forward(prompt, out.cache, position_offset);
    int pos = position_offset + static_cast<int>(prompt.size());
    while (true) {
        for (int l = 0; l < config_.num_layers; ++l) out.cache[l].append(step.new_kv[l]);
        const int next = argmax(step.row(step.rows - 1));
        if (next == token::kEot) break;
        out.tokens.push_back(next);
        const int one[1] = {next};
        step = forward(one, out.cache, pos);
        ++pos;
        if (static_cast<int>(out.tokens.size()) == max_new) {
            // The last token is fed back only so the cache covers everything emitted.
            for (int l = 0; l < config_.num_layers; ++l) out.cache[l].append(step.new_kv[l]);
            break;
        }
    }
    return out;
}

int argmax(std::span<const float> logits) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

}  // namespace kvi
