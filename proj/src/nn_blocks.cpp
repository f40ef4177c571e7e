#include "csnet/nn_blocks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csnet/error.hpp"

namespace csnet::nn {

namespace {

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

void add_row_bias(Matrix& m, std::span<const double> bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] += bias[j];
  }
}

void add_column_sums(const Matrix& m, std::span<double> out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j];
  }
}

void add_into(Matrix& dst, const Matrix& src) {
  auto& d = dst.values();
  const auto& s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

void init_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : values) v = dist(rng);
}

// ---------------------------------------------------------------------------

KernelBank::KernelBank(std::size_t n, std::size_t kt, std::size_t ks)
    : n_kernels(n), k_t(kt), k_s(ks), weights(n * kt * ks, 0.0), bias(n, 0.0) {
  require(n >= 1, Errc::ShapeMismatch, "kernel bank needs at least one kernel");
  require(kt % 2 == 1 && ks % 2 == 1, Errc::ShapeMismatch,
          "kernel extents must be odd, got " + std::to_string(kt) + "x" + std::to_string(ks));
}

KernelBank KernelBank::random(std::size_t n, std::size_t kt, std::size_t ks, Rng& rng) {
  KernelBank bank(n, kt, ks);
  init_uniform(bank.weights, kt * ks, n * kt * ks, rng);
  return bank;
}

FeatureMaps conv2d_forward(const Panel& panel, const KernelBank& bank, ConvTape* tape) {
  require(panel.rows() >= 1 && panel.cols() >= 1, Errc::ShapeMismatch, "empty panel");
  require(bank.k_t % 2 == 1 && bank.k_s % 2 == 1, Errc::ShapeMismatch, "kernel extents must be odd");
  require(bank.weights.size() == bank.n_kernels * bank.k_t * bank.k_s &&
              bank.bias.size() == bank.n_kernels,
          Errc::ShapeMismatch, "kernel bank storage does not match its extents");

  const std::size_t rows = panel.rows();
  const std::size_t cols = panel.cols();
  const auto off_t = static_cast<std::ptrdiff_t>(bank.k_t / 2);
  const auto off_s = static_cast<std::ptrdiff_t>(bank.k_s / 2);

  FeatureMaps maps;
  maps.reserve(bank.n_kernels);
  for (std::size_t n = 0; n < bank.n_kernels; ++n) {
    Matrix out(rows, cols, bank.bias[n]);
    for (std::size_t i = 0; i < bank.k_t; ++i) {
      for (std::size_t j = 0; j < bank.k_s; ++j) {
        // Index-reversed tap turns the correlation below into a convolution.
        const double k = bank.w(n, bank.k_t - 1 - i, bank.k_s - 1 - j);
        if (k == 0.0) continue;
        const auto di = static_cast<std::ptrdiff_t>(i) - off_t;
        const auto dj = static_cast<std::ptrdiff_t>(j) - off_s;
        const std::size_t t_lo = di < 0 ? static_cast<std::size_t>(-di) : 0;
        const std::size_t t_hi =
            di > 0 ? (rows > static_cast<std::size_t>(di) ? rows - static_cast<std::size_t>(di) : 0)
                   : rows;
        const std::size_t s_lo = dj < 0 ? static_cast<std::size_t>(-dj) : 0;
        const std::size_t s_hi =
            dj > 0 ? (cols > static_cast<std::size_t>(dj) ? cols - static_cast<std::size_t>(dj) : 0)
                   : cols;
        for (std::size_t t = t_lo; t < t_hi; ++t) {
          auto src = panel.row(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + di));
          auto dst = out.row(t);
          for (std::size_t s = s_lo; s < s_hi; ++s)
            dst[s] += k * src[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + dj)];
        }
      }
    }
    maps.push_back(std::move(out));
  }
  if (tape) {
    tape->input = panel;
    tape->bank = bank;
    tape->recorded = true;
  }
  return maps;
}

ConvGrads conv2d_backward(const ConvTape& tape, const FeatureMaps& upstream) {
  require(tape.recorded, Errc::TapeMismatch, "conv2d_backward without a recorded forward");
  const auto& bank = tape.bank;
  const auto& panel = tape.input;
  require(upstream.size() == bank.n_kernels, Errc::TapeMismatch,
          "upstream has " + std::to_string(upstream.size()) + " maps, forward produced " +
              std::to_string(bank.n_kernels));
  for (const auto& g : upstream) {
    require(g.same_shape(panel), Errc::TapeMismatch, "upstream map shape differs from forward");
  }

  const std::size_t rows = panel.rows();
  const std::size_t cols = panel.cols();
  const auto off_t = static_cast<std::ptrdiff_t>(bank.k_t / 2);
  const auto off_s = static_cast<std::ptrdiff_t>(bank.k_s / 2);

  ConvGrads grads{Panel(rows, cols), KernelBank(bank.n_kernels, bank.k_t, bank.k_s)};
  for (std::size_t n = 0; n < bank.n_kernels; ++n) {
    const auto& g = upstream[n];
    for (double v : g.values()) grads.bank.bias[n] += v;
    for (std::size_t i = 0; i < bank.k_t; ++i) {
      for (std::size_t j = 0; j < bank.k_s; ++j) {
        const std::size_t ki = bank.k_t - 1 - i;
        const std::size_t kj = bank.k_s - 1 - j;
        const double k = bank.w(n, ki, kj);
        const auto di = static_cast<std::ptrdiff_t>(i) - off_t;
        const auto dj = static_cast<std::ptrdiff_t>(j) - off_s;
        // Output rows t and columns s whose tap lands inside the panel.
        const std::size_t t_lo = di < 0 ? static_cast<std::size_t>(-di) : 0;
        const std::size_t t_hi =
            di > 0 ? (rows > static_cast<std::size_t>(di) ? rows - static_cast<std::size_t>(di) : 0)
                   : rows;
        const std::size_t s_lo = dj < 0 ? static_cast<std::size_t>(-dj) : 0;
        const std::size_t s_hi =
            dj > 0 ? (cols > static_cast<std::size_t>(dj) ? cols - static_cast<std::size_t>(dj) : 0)
                   : cols;
        double dk = 0.0;
        for (std::size_t t = t_lo; t < t_hi; ++t) {
          const auto x = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + di);
          const double* src = panel.row(x).data();
          double* dsrc = grads.input.row(x).data();
          const double* gr = g.row(t).data();
          for (std::size_t s = s_lo; s < s_hi; ++s) {
            const auto y = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s) + dj);
            dk += gr[s] * src[y];
            dsrc[y] += gr[s] * k;
          }
        }
        grads.bank.w(n, ki, kj) += dk;
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& params, LayerNormTape* tape) {
  const std::size_t width = x.cols();
  require(params.gamma.size() == width && params.beta.size() == width, Errc::ShapeMismatch,
          "layer norm width " + std::to_string(params.gamma.size()) + " vs input " +
              std::to_string(width));
  Matrix out(x.rows(), width);
  Matrix normalized(x.rows(), width);
  std::vector<double> inv_std(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[i] = inv;
    auto nrow = normalized.row(i);
    auto orow = out.row(i);
    for (std::size_t j = 0; j < width; ++j) {
      nrow[j] = (row[j] - mean) * inv;
      orow[j] = params.gamma[j] * nrow[j] + params.beta[j];
    }
  }
  if (tape) {
    tape->normalized = std::move(normalized);
    tape->inv_std = std::move(inv_std);
    tape->recorded = true;
  }
  return out;
}

Matrix layer_norm_backward(const LayerNormTape& tape, const LayerNormParams& params,
                           const Matrix& upstream, LayerNormParams& grads) {
  require(tape.recorded, Errc::TapeMismatch, "layer_norm_backward without a recorded forward");
  require(upstream.same_shape(tape.normalized), Errc::TapeMismatch,
          "layer norm upstream shape differs from forward");
  const std::size_t width = upstream.cols();
  const double inv_w = 1.0 / static_cast<double>(width);
  Matrix dx(upstream.rows(), width);
  std::vector<double> dxhat(width);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    auto g = upstream.row(i);
    auto xhat = tape.normalized.row(i);
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      grads.gamma[j] += g[j] * xhat[j];
      grads.beta[j] += g[j];
      dxhat[j] = g[j] * params.gamma[j];
      sum_d += dxhat[j];
      sum_dx += dxhat[j] * xhat[j];
    }
    auto out = dx.row(i);
    for (std::size_t j = 0; j < width; ++j) {
      out[j] = tape.inv_std[i] * (dxhat[j] - sum_d * inv_w - xhat[j] * sum_dx * inv_w);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

AttentionParams::AttentionParams(std::size_t d, std::size_t heads)
    : d_model(d),
      n_heads(heads),
      wq(d, d),
      wk(d, d),
      wv(d, d),
      wo(d, d),
      bo(d, 0.0),
      norm(d) {
  require(d >= 1 && heads >= 1 && d % heads == 0, Errc::ShapeMismatch,
          "d_model " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
              " heads");
}

AttentionParams AttentionParams::random(std::size_t d, std::size_t heads, Rng& rng) {
  AttentionParams p(d, heads);
  for (Matrix* m : {&p.wq, &p.wk, &p.wv, &p.wo}) init_uniform(m->values(), d, d, rng);
  return p;
}

void softmax_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
}

namespace {

void check_attention_shapes(const Matrix& tokens, const AttentionParams& p) {
  require(tokens.rows() >= 1, Errc::ShapeMismatch, "attention needs at least one token");
  require(tokens.cols() == p.d_model, Errc::ShapeMismatch,
          "token width " + std::to_string(tokens.cols()) + " vs d_model " +
              std::to_string(p.d_model));
  require(p.n_heads >= 1 && p.d_model % p.n_heads == 0, Errc::ShapeMismatch,
          "d_model must be divisible by n_heads");
  for (const Matrix* m : {&p.wq, &p.wk, &p.wv, &p.wo}) {
    require(m->rows() == p.d_model && m->cols() == p.d_model, Errc::ShapeMismatch,
            "attention projection must be d_model x d_model");
  }
  require(p.bo.size() == p.d_model, Errc::ShapeMismatch, "output bias width");
}

}  // namespace

Matrix attention_core_forward(const Matrix& tokens, const AttentionParams& p, AttentionTape* tape,
                              std::size_t group) {
  check_attention_shapes(tokens, p);
  const std::size_t len = tokens.rows();
  if (group == 0) group = len;
  require(len % group == 0, Errc::ShapeMismatch,
          std::to_string(len) + " tokens do not split into sets of " + std::to_string(group));
  const std::size_t n_groups = len / group;
  const std::size_t dh = p.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix q = matmul(tokens, p.wq);
  Matrix k = matmul(tokens, p.wk);
  Matrix v = matmul(tokens, p.wv);
  Matrix mixed(len, p.d_model);
  std::vector<Matrix> probs;
  probs.reserve(n_groups * p.n_heads);
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::size_t r0 = g * group;
    for (std::size_t h = 0; h < p.n_heads; ++h) {
      const std::size_t c0 = h * dh;
      Matrix scores(group, group);
      for (std::size_t i = 0; i < group; ++i) {
        const double* qi = &q(r0 + i, c0);
        for (std::size_t j = 0; j < group; ++j) {
          const double* kj = &k(r0 + j, c0);
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          scores(i, j) = acc * scale;
        }
      }
      softmax_rows(scores);
      for (std::size_t i = 0; i < group; ++i) {
        double* mi = &mixed(r0 + i, c0);
        for (std::size_t j = 0; j < group; ++j) {
          const double w = scores(i, j);
          const double* vj = &v(r0 + j, c0);
          for (std::size_t c = 0; c < dh; ++c) mi[c] += w * vj[c];
        }
      }
      probs.push_back(std::move(scores));
    }
  }
  Matrix out = matmul(mixed, p.wo);
  add_row_bias(out, p.bo);
  if (tape) {
    tape->x = tokens;
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->probs = std::move(probs);
    tape->group = group;
    tape->mixed = std::move(mixed);
    tape->recorded = true;
  }
  return out;
}

Matrix attention_forward(const Matrix& tokens, const AttentionParams& p, AttentionTape* tape,
                         std::size_t group) {
  Matrix pre = attention_core_forward(tokens, p, tape, group);
  add_into(pre, tokens);
  return layer_norm_forward(pre, p.norm, tape ? &tape->norm : nullptr);
}

AttentionGrads attention_backward(const AttentionTape& tape, const AttentionParams& p,
                                  const Matrix& upstream) {
  require(tape.recorded && tape.norm.recorded, Errc::TapeMismatch,
          "attention_backward without a recorded forward");
  require(upstream.same_shape(tape.x), Errc::TapeMismatch,
          "attention upstream shape differs from forward");
  const std::size_t len = tape.x.rows();
  const std::size_t dh = p.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionGrads grads{Matrix(), zeros_like(p)};
  auto& gp = grads.params;

  const Matrix dpre = layer_norm_backward(tape.norm, p.norm, upstream, gp.norm);

  // Output projection.
  gp.wo = matmul_tn(tape.mixed, dpre);
  add_column_sums(dpre, gp.bo);
  const Matrix dmixed = matmul_nt(dpre, p.wo);

  const std::size_t group = tape.group;
  require(group > 0 && len % group == 0 && tape.probs.size() == (len / group) * p.n_heads,
          Errc::TapeMismatch, "attention tape grouping is inconsistent");
  Matrix dq(len, p.d_model), dk(len, p.d_model), dv(len, p.d_model);
  Matrix dprob(group, group);
  for (std::size_t g = 0; g < len / group; ++g) {
    const std::size_t r0 = g * group;
    for (std::size_t h = 0; h < p.n_heads; ++h) {
      const std::size_t c0 = h * dh;
      const Matrix& prob = tape.probs[g * p.n_heads + h];
      for (std::size_t i = 0; i < group; ++i) {
        const double* dmi = dmixed.row(r0 + i).data() + c0;
        for (std::size_t j = 0; j < group; ++j) {
          const double* vj = tape.v.row(r0 + j).data() + c0;
          double* dvj = &dv(r0 + j, c0);
          const double pij = prob(i, j);
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            acc += dmi[c] * vj[c];
            dvj[c] += pij * dmi[c];
          }
          dprob(i, j) = acc;
        }
      }
      for (std::size_t i = 0; i < group; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < group; ++j) dot += dprob(i, j) * prob(i, j);
        double* dqi = &dq(r0 + i, c0);
        const double* qi = tape.q.row(r0 + i).data() + c0;
        for (std::size_t j = 0; j < group; ++j) {
          const double ds = prob(i, j) * (dprob(i, j) - dot) * scale;
          if (ds == 0.0) continue;
          const double* kj = tape.k.row(r0 + j).data() + c0;
          double* dkj = &dk(r0 + j, c0);
          for (std::size_t c = 0; c < dh; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }
  gp.wq = matmul_tn(tape.x, dq);
  gp.wk = matmul_tn(tape.x, dk);
  gp.wv = matmul_tn(tape.x, dv);

  grads.tokens = dpre;  // residual path
  add_into(grads.tokens, matmul_nt(dq, p.wq));
  add_into(grads.tokens, matmul_nt(dk, p.wk));
  add_into(grads.tokens, matmul_nt(dv, p.wv));
  return grads;
}

// ---------------------------------------------------------------------------

MlpParams::MlpParams(std::span<const std::size_t> widths) {
  require(widths.size() >= 2, Errc::ShapeMismatch, "MLP needs input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    require(widths[l] >= 1 && widths[l + 1] >= 1, Errc::ShapeMismatch, "MLP widths must be >= 1");
    weights.emplace_back(widths[l], widths[l + 1]);
    biases.emplace_back(widths[l + 1], 0.0);
  }
}

MlpParams MlpParams::random(std::span<const std::size_t> widths, Rng& rng) {
  MlpParams p(widths);
  for (auto& w : p.weights) init_uniform(w.values(), w.rows(), w.cols(), rng);
  return p;
}

Matrix mlp_forward(const Matrix& x, const MlpParams& params, MlpTape* tape, double dropout,
                   Mode mode, Rng* rng) {
  require(!params.weights.empty(), Errc::ShapeMismatch, "empty MLP");
  require(x.cols() == params.input_width(), Errc::ShapeMismatch,
          "MLP input width " + std::to_string(x.cols()) + " vs " +
              std::to_string(params.input_width()));
  const bool drop = mode == Mode::Train && dropout > 0.0;
  require(!drop || rng != nullptr, Errc::InvalidRate, "train-mode dropout needs a generator");

  if (tape) {
    tape->layer_inputs.clear();
    tape->pre_activation.clear();
    tape->dropout_masks.clear();
  }
  Matrix h = x;
  const std::size_t last = params.weights.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    require(params.weights[l].rows() == h.cols(), Errc::ShapeMismatch, "MLP layers do not chain");
    Matrix z = matmul(h, params.weights[l]);
    add_row_bias(z, params.biases[l]);
    if (tape) tape->layer_inputs.push_back(std::move(h));
    if (l == last) {
      h = std::move(z);
      break;
    }
    Matrix a = z;
    for (auto& v : a.values()) v = v > 0.0 ? v : 0.0;
    if (drop) {
      std::vector<double> mask;
      a.values() = dropout_apply(a.values(), dropout, mode, *rng, &mask);
      if (tape) tape->dropout_masks.push_back(std::move(mask));
    }
    if (tape) tape->pre_activation.push_back(std::move(z));
    h = std::move(a);
  }
  if (tape) tape->recorded = true;
  return h;
}

MlpGrads mlp_backward(const MlpTape& tape, const MlpParams& params, const Matrix& upstream) {
  require(tape.recorded && tape.layer_inputs.size() == params.weights.size(), Errc::TapeMismatch,
          "mlp_backward without a matching forward");
  require(upstream.rows() == tape.layer_inputs.front().rows() &&
              upstream.cols() == params.output_width(),
          Errc::TapeMismatch, "MLP upstream shape differs from forward");

  MlpGrads grads{Matrix(), zeros_like(params)};
  Matrix g = upstream;
  for (std::size_t l = params.weights.size(); l-- > 0;) {
    grads.params.weights[l] = matmul_tn(tape.layer_inputs[l], g);
    add_column_sums(g, grads.params.biases[l]);
    Matrix gin = matmul_nt(g, params.weights[l]);
    if (l > 0) {
      const auto& z = tape.pre_activation[l - 1].values();
      auto& gv = gin.values();
      const bool masked = tape.dropout_masks.size() == tape.pre_activation.size();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (z[i] <= 0.0) {
          gv[i] = 0.0;
        } else if (masked) {
          gv[i] *= tape.dropout_masks[l - 1][i];
        }
      }
    }
    g = std::move(gin);
  }
  grads.input = std::move(g);
  return grads;
}

// ---------------------------------------------------------------------------

EncoderLayerParams EncoderLayerParams::random(std::size_t d_model, std::size_t n_heads,
                                              std::size_t d_ff, Rng& rng) {
  EncoderLayerParams p;
  p.attention = AttentionParams::random(d_model, n_heads, rng);
  const std::size_t widths[] = {d_model, d_ff, d_model};
  p.ffn = MlpParams::random(widths, rng);
  p.norm = LayerNormParams(d_model);
  return p;
}

Matrix encoder_layer_forward(const Matrix& tokens, const EncoderLayerParams& params,
                             EncoderLayerTape* tape, std::size_t group) {
  Matrix a = attention_forward(tokens, params.attention, tape ? &tape->attention : nullptr, group);
  Matrix f = mlp_forward(a, params.ffn, tape ? &tape->ffn : nullptr);
  add_into(f, a);
  Matrix out = layer_norm_forward(f, params.norm, tape ? &tape->norm : nullptr);
  if (tape) tape->recorded = true;
  return out;
}

EncoderLayerGrads encoder_layer_backward(const EncoderLayerTape& tape,
                                         const EncoderLayerParams& params, const Matrix& upstream) {
  require(tape.recorded, Errc::TapeMismatch, "encoder_layer_backward without a recorded forward");
  EncoderLayerGrads grads{Matrix(), zeros_like(params)};
  const Matrix dsum = layer_norm_backward(tape.norm, params.norm, upstream, grads.params.norm);
  MlpGrads ffn = mlp_backward(tape.ffn, params.ffn, dsum);
  grads.params.ffn = std::move(ffn.params);
  Matrix da = dsum;
  add_into(da, ffn.input);
  AttentionGrads attn = attention_backward(tape.attention, params.attention, da);
  grads.params.attention = std::move(attn.params);
  grads.tokens = std::move(attn.tokens);
  return grads;
}

// ---------------------------------------------------------------------------

std::vector<double> dropout_apply(std::span<const double> values, double rate, Mode mode, Rng& rng,
                                  std::vector<double>* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(Errc::InvalidRate, "dropout rate " + std::to_string(rate) + " outside [0, 1)");
  }
  std::vector<double> out(values.begin(), values.end());
  if (mask) mask->assign(values.size(), 1.0);
  if (mode == Mode::Eval || rate == 0.0) return out;

  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution dropped(rate);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = dropped(rng) ? 0.0 : keep_scale;
    out[i] *= m;
    if (mask) (*mask)[i] = m;
  }
  return out;
}

// ---------------------------------------------------------------------------

GradCheckResult finite_difference_check(const std::function<double(std::span<const double>)>& loss,
                                        std::span<const double> point,
                                        std::span<const double> analytic, double step,
                                        double tolerance) {
  require(step > 0.0, Errc::InvalidConfig, "finite-difference step must be positive");
  require(analytic.size() == point.size(), Errc::ShapeMismatch,
          "analytic gradient length differs from the point");
  GradCheckResult result;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = loss(x);
    x[i] = saved - step;
    const double down = loss(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    if (err > result.max_rel_error || !std::isfinite(err)) {
      result.max_rel_error = std::isfinite(err) ? err : INFINITY;
      result.worst_index = i;
    }
    ++result.checked;
  }
  result.passed = result.max_rel_error < tolerance;
  return result;
}

std::string_view block_name(Block block) {
  switch (block) {
    case Block::Conv2d: return "conv2d";
    case Block::Attention: return "attention";
    case Block::EncoderLayer: return "encoder_layer";
    case Block::Mlp: return "mlp";
  }
  return "unknown";
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = gauss(rng);
  return m;
}

double weighted_sum(const Matrix& g, const Matrix& out) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) acc += g.values()[i] * out.values()[i];
  return acc;
}

// Packs (input, params) into one flat vector and checks sum(G * forward).
template <class P, class Forward, class Backward>
GradCheckResult check_packed(const Matrix& input, const P& params, Forward forward,
                             Backward backward, double step, double tolerance) {
  std::vector<double> point = input.values();
  const auto pflat = flatten(params);
  point.insert(point.end(), pflat.begin(), pflat.end());

  auto loss = [&](std::span<const double> flat) {
    Matrix x(input.rows(), input.cols(),
             std::vector<double>(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(input.size())));
    P p = params;
    unflatten(p, flat.subspan(input.size()));
    return forward(x, p);
  };
  auto [dinput, dparams] = backward(input, params);
  std::vector<double> analytic = dinput.values();
  const auto gflat = flatten(dparams);
  analytic.insert(analytic.end(), gflat.begin(), gflat.end());
  return finite_difference_check(loss, point, analytic, step, tolerance);
}

}  // namespace

GradCheckResult check_block_gradients(Block block, std::uint64_t seed, double step,
                                      double tolerance) {
  Rng rng(seed);
  switch (block) {
    case Block::Conv2d: {
      const Matrix panel = random_matrix(4, 3, rng);
      KernelBank bank = KernelBank::random(2, 3, 3, rng);
      for (auto& b : bank.bias) b = std::normal_distribution<double>(0.0, 0.5)(rng);
      std::vector<Matrix> g;
      for (std::size_t n = 0; n < bank.n_kernels; ++n) g.push_back(random_matrix(4, 3, rng));
      auto forward = [&](const Matrix& x, const KernelBank& kb) {
        auto maps = conv2d_forward(x, kb);
        double acc = 0.0;
        for (std::size_t n = 0; n < maps.size(); ++n) acc += weighted_sum(g[n], maps[n]);
        return acc;
      };
      auto backward = [&](const Matrix& x, const KernelBank& kb) {
        ConvTape tape;
        conv2d_forward(x, kb, &tape);
        auto grads = conv2d_backward(tape, g);
        return std::pair{grads.input, grads.bank};
      };
      return check_packed(panel, bank, forward, backward, step, tolerance);
    }
    case Block::Attention: {
      const Matrix tokens = random_matrix(3, 4, rng);
      AttentionParams params = AttentionParams::random(4, 2, rng);
      for (auto& v : params.bo) v = std::normal_distribution<double>(0.0, 0.5)(rng);
      for (auto& v : params.norm.gamma) v = 1.0 + std::normal_distribution<double>(0.0, 0.2)(rng);
      for (auto& v : params.norm.beta) v = std::normal_distribution<double>(0.0, 0.2)(rng);
      const Matrix g = random_matrix(3, 4, rng);
      auto forward = [&](const Matrix& x, const AttentionParams& p) {
        return weighted_sum(g, attention_forward(x, p));
      };
      auto backward = [&](const Matrix& x, const AttentionParams& p) {
        AttentionTape tape;
        attention_forward(x, p, &tape);
        auto grads = attention_backward(tape, p, g);
        return std::pair{grads.tokens, grads.params};
      };
      return check_packed(tokens, params, forward, backward, step, tolerance);
    }
    case Block::EncoderLayer: {
      const Matrix tokens = random_matrix(3, 4, rng);
      EncoderLayerParams params = EncoderLayerParams::random(4, 2, 8, rng);
      for (auto& b : params.ffn.biases)
        for (auto& v : b) v = std::normal_distribution<double>(0.0, 0.3)(rng);
      const Matrix g = random_matrix(3, 4, rng);
      auto forward = [&](const Matrix& x, const EncoderLayerParams& p) {
        return weighted_sum(g, encoder_layer_forward(x, p));
      };
      auto backward = [&](const Matrix& x, const EncoderLayerParams& p) {
        EncoderLayerTape tape;
        encoder_layer_forward(x, p, &tape);
        auto grads = encoder_layer_backward(tape, p, g);
        return std::pair{grads.tokens, grads.params};
      };
      return check_packed(tokens, params, forward, backward, step, tolerance);
    }
    case Block::Mlp: {
      const std::size_t widths[] = {6, 8, 3};
      const Matrix x0 = random_matrix(1, 6, rng);
      MlpParams params = MlpParams::random(widths, rng);
      for (auto& b : params.biases)
        for (auto& v : b) v = std::normal_distribution<double>(0.0, 0.3)(rng);
      const Matrix g = random_matrix(1, 3, rng);
      auto forward = [&](const Matrix& x, const MlpParams& p) {
        return weighted_sum(g, mlp_forward(x, p));
      };
      auto backward = [&](const Matrix& x, const MlpParams& p) {
        MlpTape tape;
        mlp_forward(x, p, &tape);
        auto grads = mlp_backward(tape, p, g);
        return std::pair{grads.input, grads.params};
      };
      return check_packed(x0, params, forward, backward, step, tolerance);
    }
  }
  throw Error(Errc::InvalidConfig, "unknown block");
}

}  // namespace csnet::nn
