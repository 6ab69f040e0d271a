#pragma once

// Small deterministic decoder-only transformer used for desk-scale runs.
//
// Architecture: token embedding (tied with the output head), L pre-norm blocks of
// causal multi-head attention and a GELU MLP, final RMS norm. No biases, no
// positional encoding, parameter-free RMS norms. Linear weights are (C_out x C_in)
// and drawn N(0, 1/C_in); embeddings N(0, 1). Every reduction runs in a fixed
// order, so outputs are a pure function of (config, seed, inputs). Functions with
// a `jobs` argument split work per sequence and combine results in sequence order,
// so the thread count never changes a result.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tplo/allocation.hpp"
#include "tplo/error.hpp"
#include "tplo/importance.hpp"
#include "tplo/matrix.hpp"
#include "tplo/parallel.hpp"
#include "tplo/rng.hpp"
#include "tplo/tensorio.hpp"

namespace tplo {

using TokenSeq = std::vector<std::uint32_t>;

struct ToyModelConfig {
  std::uint32_t num_layers = 12;
  std::uint32_t d_model = 64;
  std::uint32_t heads = 4;
  std::uint32_t ffn_mult = 4;
  std::uint32_t vocab = 512;
  std::uint64_t seed = 0;

  std::uint32_t head_dim() const { return d_model / heads; }
  std::uint32_t ffn_dim() const { return d_model * ffn_mult; }

  void validate() const {
    require(num_layers >= 1, ErrorCode::ConfigError, "num_layers must be >= 1");
    require(d_model >= 1 && heads >= 1 && d_model % heads == 0, ErrorCode::ConfigError, "d_model must be divisible by heads");
    require(ffn_mult >= 1, ErrorCode::ConfigError, "ffn_mult must be >= 1");
    require(vocab >= 2, ErrorCode::ConfigError, "vocab must be >= 2");
  }
};

/// The prunable projections of one block, in a fixed order.
enum class Proj : std::uint8_t { q, k, v, o, up, down };
inline constexpr std::array<Proj, 6> kAllProjections{Proj::q, Proj::k, Proj::v, Proj::o, Proj::up, Proj::down};

inline std::string proj_name(Proj p) {
  static constexpr std::array<const char*, 6> names{"q", "k", "v", "o", "up", "down"};
  return names[static_cast<std::size_t>(p)];
}

struct ToyBlock {
  std::array<MatrixF, 6> w;  // indexed by Proj

  MatrixF& operator[](Proj p) { return w[static_cast<std::size_t>(p)]; }
  const MatrixF& operator[](Proj p) const { return w[static_cast<std::size_t>(p)]; }
};

struct ToyModel {
  ToyModelConfig cfg;
  MatrixF embed;  // vocab x d
  std::vector<ToyBlock> blocks;

  friend bool operator==(const ToyModel& a, const ToyModel& b) {
    if (a.embed != b.embed || a.blocks.size() != b.blocks.size()) return false;
    for (std::size_t l = 0; l < a.blocks.size(); ++l)
      if (a.blocks[l].w != b.blocks[l].w) return false;
    return true;
  }
};

inline std::string weight_tensor_name(std::size_t layer, Proj p) { return "w.layer" + std::to_string(layer) + "." + proj_name(p); }
inline std::string mask_tensor_name(std::size_t layer, Proj p) { return "mask.layer" + std::to_string(layer) + "." + proj_name(p); }

inline ToyModel init_model(const ToyModelConfig& cfg) {
  cfg.validate();
  ToyModel m;
  m.cfg = cfg;
  std::uint64_t stream = 0;
  auto draw = [&](std::size_t rows, std::size_t cols, double stddev) {
    CounterRng rng(cfg.seed, stream++);
    MatrixF out(rows, cols);
    for (auto& v : out.data()) v = static_cast<float>(rng.normal() * stddev);
    return out;
  };
  const std::size_t d = cfg.d_model, f = cfg.ffn_dim();
  m.embed = draw(cfg.vocab, d, 1.0);
  for (std::uint32_t l = 0; l < cfg.num_layers; ++l) {
    ToyBlock b;
    for (Proj p : {Proj::q, Proj::k, Proj::v, Proj::o}) b[p] = draw(d, d, 1.0 / std::sqrt(double(d)));
    b[Proj::up] = draw(f, d, 1.0 / std::sqrt(double(d)));
    b[Proj::down] = draw(d, f, 1.0 / std::sqrt(double(f)));
    m.blocks.push_back(std::move(b));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace detail {

inline constexpr float kNormEps = 1e-6f;

inline void rms_norm(std::span<const float> x, std::span<float> out) {
  float ss = 0.0f;
  for (float v : x) ss += v * v;
  const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + kNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv;
}

/// Dot product with eight fixed partial sums, so the summation order (and the
/// result) does not depend on compiler flags while still vectorizing.
inline float dot8(const float* a, const float* b, std::size_t n) {
  float acc[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
  for (; j < n; ++j) acc[0] += a[j] * b[j];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline void matvec(const MatrixF& w, std::span<const float> x, std::span<float> out) {
  for (std::size_t i = 0; i < w.rows(); ++i) out[i] = dot8(w.row(i).data(), x.data(), w.cols());
}

inline float gelu(float x) {
  constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

}  // namespace detail

/// Column-norm accumulators for every projection input of one block.
struct BlockCapture {
  std::array<ColumnNormAccumulator, 6> inputs;

  explicit BlockCapture(const ToyModelConfig& cfg)
      : inputs{ColumnNormAccumulator(cfg.d_model), ColumnNormAccumulator(cfg.d_model), ColumnNormAccumulator(cfg.d_model),
               ColumnNormAccumulator(cfg.d_model), ColumnNormAccumulator(cfg.d_model), ColumnNormAccumulator(cfg.ffn_dim())} {}

  ColumnNormAccumulator& operator[](Proj p) { return inputs[static_cast<std::size_t>(p)]; }
};

/// Per-block causal state: keys and values of every position seen so far.
struct BlockState {
  std::vector<float> keys, values;  // positions x d, row-major
  std::size_t positions = 0;
};

/// Advances one block by one position, updating the residual `x` in place.
inline void block_step(const ToyModelConfig& cfg, const ToyBlock& b, BlockState& st, std::span<float> x,
                       BlockCapture* cap = nullptr) {
  const std::size_t d = cfg.d_model, hd = cfg.head_dim(), f = cfg.ffn_dim();
  std::vector<float> h(d), q(d), k(d), v(d), attn(d, 0.0f), out(d), u(f);

  detail::rms_norm(x, h);
  detail::matvec(b[Proj::q], h, q);
  detail::matvec(b[Proj::k], h, k);
  detail::matvec(b[Proj::v], h, v);
  st.keys.insert(st.keys.end(), k.begin(), k.end());
  st.values.insert(st.values.end(), v.begin(), v.end());
  const std::size_t n = ++st.positions;

  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<float> w(n);
  for (std::size_t head = 0; head < cfg.heads; ++head) {
    const std::size_t off = head * hd;
    float mx = -INFINITY;
    for (std::size_t t = 0; t < n; ++t) {
      float s = 0.0f;
      for (std::size_t j = 0; j < hd; ++j) s += q[off + j] * st.keys[t * d + off + j];
      w[t] = s * scale;
      mx = std::max(mx, w[t]);
    }
    float z = 0.0f;
    for (std::size_t t = 0; t < n; ++t) z += (w[t] = std::exp(w[t] - mx));
    for (std::size_t t = 0; t < n; ++t) {
      const float a = w[t] / z;
      for (std::size_t j = 0; j < hd; ++j) attn[off + j] += a * st.values[t * d + off + j];
    }
  }
  detail::matvec(b[Proj::o], attn, out);
  for (std::size_t i = 0; i < d; ++i) x[i] += out[i];

  std::vector<float> h2(d);
  detail::rms_norm(x, h2);
  detail::matvec(b[Proj::up], h2, u);
  for (auto& e : u) e = detail::gelu(e);
  detail::matvec(b[Proj::down], u, out);
  for (std::size_t i = 0; i < d; ++i) x[i] += out[i];

  if (cap) {
    (*cap)[Proj::q].add(h);
    (*cap)[Proj::k].add(h);
    (*cap)[Proj::v].add(h);
    (*cap)[Proj::o].add(attn);
    (*cap)[Proj::up].add(h2);
    (*cap)[Proj::down].add(u);
  }
}

/// Incremental decoder over the whole model: feed one token at a time.
class Decoder {
 public:
  explicit Decoder(const ToyModel& m) : m_(&m), states_(m.blocks.size()), x_(m.cfg.d_model) {}

  /// Runs `token` through all blocks; residuals()[l] is the stream after block l.
  void step(std::uint32_t token) {
    require(token < m_->cfg.vocab, ErrorCode::VocabError,
            "token " + std::to_string(token) + " out of range for vocab " + std::to_string(m_->cfg.vocab));
    auto e = m_->embed.row(token);
    std::copy(e.begin(), e.end(), x_.begin());
    residuals_.assign(m_->blocks.size(), {});
    for (std::size_t l = 0; l < m_->blocks.size(); ++l) {
      block_step(m_->cfg, m_->blocks[l], states_[l], x_);
      residuals_[l] = x_;
    }
  }

  /// Raw next-token logits: final RMS norm of the residual against the tied
  /// embedding, scaled by 1/sqrt(d_model).
  std::vector<float> next_logits() const {
    const std::size_t d = m_->cfg.d_model;
    std::vector<float> h(d), logits(m_->cfg.vocab);
    detail::rms_norm(x_, h);
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    for (auto& v : h) v *= scale;
    for (std::size_t t = 0; t < logits.size(); ++t) {
      logits[t] = detail::dot8(h.data(), m_->embed.row(t).data(), d);
    }
    return logits;
  }

  /// Log-probabilities of the next token given everything fed so far.
  std::vector<double> next_log_probs() const {
    const auto logits = next_logits();
    std::vector<double> lp(logits.begin(), logits.end());
    double mx = -INFINITY;
    for (double v : lp) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : lp) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (auto& v : lp) v -= lz;
    return lp;
  }

  const std::vector<std::vector<float>>& residuals() const { return residuals_; }

 private:
  const ToyModel* m_;
  std::vector<BlockState> states_;
  std::vector<float> x_;
  std::vector<std::vector<float>> residuals_;
};

struct ForwardResult {
  MatrixF logits;                          // positions x vocab
  std::vector<std::vector<float>> final_token_residuals;  // per layer, residual after block l at the last position
};

inline ForwardResult forward_capture(const ToyModel& m, std::span<const std::uint32_t> tokens) {
  require(!tokens.empty(), ErrorCode::EmptyInput, "forward needs at least one token");
  for (auto t : tokens)
    require(t < m.cfg.vocab, ErrorCode::VocabError, "token " + std::to_string(t) + " out of range");
  Decoder dec(m);
  ForwardResult r{MatrixF(tokens.size(), m.cfg.vocab), {}};
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    dec.step(tokens[p]);
    const auto logits = dec.next_logits();
    std::copy(logits.begin(), logits.end(), r.logits.row(p).begin());
  }
  r.final_token_residuals = dec.residuals();
  return r;
}

/// Residual activations after every block at the final token, for a batch of statements.
inline std::vector<MatrixF> capture_statement_activations(const ToyModel& m, std::span<const TokenSeq> statements,
                                                          std::size_t jobs = 1) {
  for (const auto& st : statements) require(!st.empty(), ErrorCode::EmptyInput, "empty statement");
  std::vector<MatrixF> layers(m.cfg.num_layers, MatrixF(statements.size(), m.cfg.d_model));
  parallel_for(statements.size(), jobs, [&](std::size_t i) {
    Decoder dec(m);
    for (auto t : statements[i]) dec.step(t);
    for (std::size_t l = 0; l < layers.size(); ++l)
      std::copy(dec.residuals()[l].begin(), dec.residuals()[l].end(), layers[l].row(i).begin());
  });
  return layers;
}

/// exp(mean next-token NLL) under teacher forcing over all sequences.
inline double perplexity(const ToyModel& m, std::span<const TokenSeq> corpus, std::size_t jobs = 1) {
  for (const auto& seq : corpus)
    for (auto t : seq) require(t < m.cfg.vocab, ErrorCode::VocabError, "token out of range");
  std::vector<double> nll(corpus.size(), 0.0);
  std::size_t count = 0;
  for (const auto& seq : corpus) count += seq.size() >= 2 ? seq.size() - 1 : 0;
  require(count > 0, ErrorCode::EmptyInput, "perplexity needs a corpus with at least 2 tokens");
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const auto& seq = corpus[i];
    if (seq.size() < 2) return;
    Decoder dec(m);
    for (std::size_t p = 0; p + 1 < seq.size(); ++p) {
      dec.step(seq[p]);
      nll[i] -= dec.next_log_probs()[seq[p + 1]];
    }
  });
  double total = 0.0;
  for (double v : nll) total += v;
  return std::exp(total / static_cast<double>(count));
}

/// Samples sequences autoregressively from the model. Tokens for which `allowed`
/// returns false are never emitted.
inline std::vector<TokenSeq> sample_sequences(const ToyModel& m, std::size_t count, std::size_t length, std::uint64_t seed,
                                              double temperature = 1.0,
                                              const std::function<bool(std::uint32_t)>& allowed = nullptr) {
  std::vector<std::uint32_t> pool;
  for (std::uint32_t t = 0; t < m.cfg.vocab; ++t)
    if (!allowed || allowed(t)) pool.push_back(t);
  require(!pool.empty(), ErrorCode::ConfigError, "no token is allowed for sampling");
  std::vector<TokenSeq> out;
  for (std::size_t s = 0; s < count; ++s) {
    CounterRng rng(seed, 0x73616d706c65ULL + s);
    TokenSeq seq{pool[rng.below(pool.size())]};
    Decoder dec(m);
    while (seq.size() < length) {
      dec.step(seq.back());
      const auto lp = dec.next_log_probs();
      double mx = -INFINITY;
      for (auto t : pool) mx = std::max(mx, lp[t] / temperature);
      double z = 0.0;
      for (auto t : pool) z += std::exp(lp[t] / temperature - mx);
      double u = rng.uniform() * z;
      std::uint32_t pick = pool.back();
      for (auto t : pool) {
        u -= std::exp(lp[t] / temperature - mx);
        if (u < 0) {
          pick = t;
          break;
        }
      }
      seq.push_back(pick);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pruning

struct PruneReport {
  std::vector<std::array<double, 6>> outlier_ratios;  // per layer, per projection
  std::vector<double> layer_outlier_ratio;            // pooled over the layer's projections
  std::vector<std::array<PruneMask, 6>> masks;
};

namespace detail {

/// Calibration sequences as embedded residual streams, one flat (T x d) buffer each.
inline std::vector<std::vector<float>> embed_streams(const ToyModel& m, std::span<const TokenSeq> calib) {
  require(!calib.empty(), ErrorCode::EmptyInput, "calibration set is empty");
  const std::size_t d = m.cfg.d_model;
  std::vector<std::vector<float>> xs;
  for (const auto& seq : calib) {
    require(!seq.empty(), ErrorCode::EmptyInput, "empty calibration sample");
    std::vector<float> stream(seq.size() * d);
    for (std::size_t p = 0; p < seq.size(); ++p) {
      require(seq[p] < m.cfg.vocab, ErrorCode::VocabError, "calibration token out of range");
      auto e = m.embed.row(seq[p]);
      std::copy(e.begin(), e.end(), stream.begin() + static_cast<std::ptrdiff_t>(p * d));
    }
    xs.push_back(std::move(stream));
  }
  return xs;
}

/// Runs one block over every stream. With `cap`, the block's projection inputs
/// are accumulated per stream and merged in stream order; with `advance`, the
/// streams are overwritten by the block output.
inline void run_block(const ToyModelConfig& cfg, const ToyBlock& block, std::vector<std::vector<float>>& xs,
                      BlockCapture* cap, bool advance, std::size_t jobs) {
  const std::size_t d = cfg.d_model;
  std::vector<BlockCapture> parts(cap ? xs.size() : 0, BlockCapture(cfg));
  parallel_for(xs.size(), jobs, [&](std::size_t i) {
    BlockState st;
    std::vector<float> scratch;
    if (!advance) scratch = xs[i];
    auto& stream = advance ? xs[i] : scratch;
    for (std::size_t p = 0; p < stream.size() / d; ++p)
      block_step(cfg, block, st, std::span<float>(stream).subspan(p * d, d), cap ? &parts[i] : nullptr);
  });
  if (cap)
    for (const auto& part : parts)
      for (std::size_t k = 0; k < cap->inputs.size(); ++k) cap->inputs[k].merge(part.inputs[k]);
}

}  // namespace detail

/// Column norms of every projection input, per layer, on the dense model.
inline std::vector<std::array<std::vector<float>, 6>> calibration_norms(const ToyModel& m, std::span<const TokenSeq> calib,
                                                                        std::size_t jobs = 1) {
  auto xs = detail::embed_streams(m, calib);
  std::vector<std::array<std::vector<float>, 6>> out;
  for (const auto& block : m.blocks) {
    BlockCapture cap(m.cfg);
    detail::run_block(m.cfg, block, xs, &cap, true, jobs);
    std::array<std::vector<float>, 6> norms;
    for (Proj p : kAllProjections) norms[static_cast<std::size_t>(p)] = cap[p].norms();
    out.push_back(std::move(norms));
  }
  return out;
}

/// Layer outlier ratio: fraction of Wanda scores above M times the mean, pooled over
/// all prunable projections of the layer (each compared against its own mean).
inline std::vector<double> layer_outlier_ratios(const ToyModel& m, std::span<const TokenSeq> calib,
                                                double m_factor = kDefaultOutlierFactor, std::size_t jobs = 1) {
  const auto norms = calibration_norms(m, calib, jobs);
  std::vector<double> out;
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    double outliers = 0.0, total = 0.0;
    for (Proj p : kAllProjections) {
      const auto& w = m.blocks[l][p];
      const auto scores = wanda_scores(w, norms[l][static_cast<std::size_t>(p)], static_cast<std::uint32_t>(l));
      outliers += outlier_ratio(scores, m_factor) * static_cast<double>(w.size());
      total += static_cast<double>(w.size());
    }
    out.push_back(outliers / total);
  }
  return out;
}

/// Wanda pruning with a per-layer sparsity profile, one block at a time. Each
/// block's input norms come from the calibration set as it leaves the
/// already-pruned earlier blocks. The input model is not modified.
inline ToyModel prune_model(const ToyModel& model, const SparsityProfile& profile, std::span<const TokenSeq> calib,
                            MaskGroup group = MaskGroup::per_row, PruneReport* report = nullptr, std::size_t jobs = 1) {
  require(profile.layers() == model.cfg.num_layers, ErrorCode::ProfileMismatch,
          "profile has " + std::to_string(profile.layers()) + " layers, model has " + std::to_string(model.cfg.num_layers));
  for (double s : profile.sparsity)
    require(s >= 0.0 && s < 1.0, ErrorCode::InvalidSparsity, "layer sparsity out of range");
  ToyModel out = model;
  auto xs = detail::embed_streams(model, calib);

  for (std::size_t l = 0; l < out.blocks.size(); ++l) {
    const double s = profile.sparsity[l];
    if (s > 0.0 || report) {
      BlockCapture cap(model.cfg);
      detail::run_block(model.cfg, out.blocks[l], xs, &cap, false, jobs);
      std::array<double, 6> ratios{};
      std::array<PruneMask, 6> masks;
      for (Proj p : kAllProjections) {
        const auto idx = static_cast<std::size_t>(p);
        auto& w = out.blocks[l][p];
        const auto scores = wanda_scores(w, cap[p].norms(), static_cast<std::uint32_t>(l));
        if (report) ratios[idx] = outlier_ratio(scores);
        if (s > 0.0) {
          masks[idx] = build_mask(scores, s, group);
          w = apply_mask(w, masks[idx]);
        }
      }
      if (report) {
        double pooled = 0.0, total = 0.0;
        for (Proj p : kAllProjections) {
          const auto n = static_cast<double>(out.blocks[l][p].size());
          pooled += ratios[static_cast<std::size_t>(p)] * n;
          total += n;
        }
        report->layer_outlier_ratio.push_back(pooled / total);
        report->outlier_ratios.push_back(ratios);
        report->masks.push_back(std::move(masks));
      }
    }
    detail::run_block(model.cfg, out.blocks[l], xs, nullptr, true, jobs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Archive I/O

inline Archive model_to_archive(const ToyModel& m, const std::string& model_id = "toy") {
  Archive a;
  a.manifest.model_id = model_id;
  a.manifest.num_layers = m.cfg.num_layers;
  a.records.push_back(make_record("embed", m.embed));
  a.manifest.entries.push_back({"embed", TensorRole::weight, std::nullopt});
  for (std::size_t l = 0; l < m.blocks.size(); ++l)
    for (Proj p : kAllProjections) {
      a.records.push_back(make_record(weight_tensor_name(l, p), m.blocks[l][p]));
      a.manifest.entries.push_back({weight_tensor_name(l, p), TensorRole::weight, static_cast<std::uint32_t>(l)});
    }
  const std::vector<float> cfg{float(m.cfg.num_layers), float(m.cfg.d_model), float(m.cfg.heads), float(m.cfg.ffn_mult),
                               float(m.cfg.vocab)};
  a.records.push_back(make_record("config", cfg));
  a.manifest.entries.push_back({"config", TensorRole::labels_aux, std::nullopt});
  return a;
}

inline ToyModel model_from_archive(const Archive& a) {
  const auto& c = a.at("config").data;
  require(c.size() == 5, ErrorCode::ManifestError, "model config tensor must have 5 entries");
  ToyModel m;
  m.cfg = {static_cast<std::uint32_t>(c[0]), static_cast<std::uint32_t>(c[1]), static_cast<std::uint32_t>(c[2]),
           static_cast<std::uint32_t>(c[3]), static_cast<std::uint32_t>(c[4]), 0};
  m.cfg.validate();
  m.embed = record_matrix(a.at("embed"));
  require(m.embed.rows() == m.cfg.vocab && m.embed.cols() == m.cfg.d_model, ErrorCode::ShapeError, "embedding shape");
  for (std::uint32_t l = 0; l < m.cfg.num_layers; ++l) {
    ToyBlock b;
    for (Proj p : kAllProjections) {
      b[p] = record_matrix(a.at(weight_tensor_name(l, p)));
      const bool ffn_out = p == Proj::up, ffn_in = p == Proj::down;
      require(b[p].rows() == (ffn_out ? m.cfg.ffn_dim() : m.cfg.d_model) &&
                  b[p].cols() == (ffn_in ? m.cfg.ffn_dim() : m.cfg.d_model),
              ErrorCode::ShapeError, "bad shape for " + weight_tensor_name(l, p));
    }
    m.blocks.push_back(std::move(b));
  }
  return m;
}

}  // namespace tplo
