#include "astws/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "astws/window_sum.hpp"
#include "parallel_errors.hpp"

namespace astws {
namespace {

constexpr double kLayerNormEps = 1e-5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> gate_values(const std::vector<double>& logits, bool unit) {
  std::vector<double> g(logits.size(), 1.0);
  if (!unit) {
    std::transform(logits.begin(), logits.end(), g.begin(), sigmoid);
  }
  return g;
}

// z <- W in + b for one row; W is [m x n].
void affine(std::span<const double> w, std::span<const double> b,
            std::span<const double> in, std::span<double> z) {
  const size_t n = in.size();
  for (size_t i = 0; i < z.size(); ++i) {
    double s = b[i];
    const double* wi = w.data() + i * n;
    for (size_t j = 0; j < n; ++j) s += wi[j] * in[j];
    z[i] = s;
  }
}

// Layer norm over one feature vector. Writes the normalized vector and
// returns 1 / sqrt(var + eps).
double layer_norm(std::span<const double> z, std::span<double> normed) {
  const double n = static_cast<double>(z.size());
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= n;
  const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
  for (size_t i = 0; i < z.size(); ++i) normed[i] = (z[i] - mean) * rstd;
  return rstd;
}

// dz from dnormed for layer norm.
void layer_norm_backward(std::span<const double> normed, double rstd,
                         std::span<const double> dnormed, std::span<double> dz) {
  const double n = static_cast<double>(normed.size());
  double mean_d = 0.0;
  double mean_dn = 0.0;
  for (size_t i = 0; i < normed.size(); ++i) {
    mean_d += dnormed[i];
    mean_dn += dnormed[i] * normed[i];
  }
  mean_d /= n;
  mean_dn /= n;
  for (size_t i = 0; i < normed.size(); ++i) {
    dz[i] = rstd * (dnormed[i] - mean_d - normed[i] * mean_dn);
  }
}

// Forward intermediates of one bin.
struct BinCache {
  int frames = 0;
  int taps = 0;
  size_t width = 0;
  int span = 0;  // stride of the attention weight rows

  // Q path, [frames x m] unless noted.
  std::vector<double> q_in, q_normed, q_out;
  std::vector<double> q_rstd;  // [frames]
  // K path.
  std::vector<double> k_feat;  // [frames]
  std::vector<double> k_in, k_normed, k_out;
  std::vector<double> k_rstd;
  // Attention.
  std::vector<int> lo;         // first attended frame of each query
  std::vector<double> weight;  // [frames x span], softmax over lo..t
  std::vector<double> mixed;   // [frames x width], sum_tau a V (ungated)
  std::vector<double> summed;  // [frames x width], window sums of mixed
};

void run_projection(std::span<const double> inputs, int taps,
                    const std::vector<double>& w, const std::vector<double>& b,
                    const std::vector<double>& scale,
                    const std::vector<double>& shift,
                    const std::vector<double>& gate, std::vector<double>& normed,
                    std::vector<double>& rstd, std::vector<double>& out) {
  const int frames = static_cast<int>(rstd.size());
  std::vector<double> z(taps);
  for (int t = 0; t < frames; ++t) {
    affine(w, b, inputs.subspan(static_cast<size_t>(t) * taps, taps), z);
    std::span<double> nt(normed.data() + static_cast<size_t>(t) * taps, taps);
    rstd[t] = layer_norm(z, nt);
    for (int i = 0; i < taps; ++i) {
      out[static_cast<size_t>(t) * taps + i] = (scale[i] * nt[i] + shift[i]) * gate[i];
    }
  }
}

void forward_cache(const AttentionParams& p, const AttentionOptions& opt,
                   std::span<const Complex> far, std::span<const Complex> mic,
                   std::span<const double> v, BinCache& c) {
  const int frames = static_cast<int>(far.size());
  const int m = p.taps;
  const size_t width = StatsLayout{m}.width();
  c.frames = frames;
  c.taps = m;
  c.width = width;
  const size_t tm = static_cast<size_t>(frames) * m;

  const std::vector<double> gq = gate_values(p.q_gate, opt.unit_gates);
  const std::vector<double> gk = gate_values(p.k_gate, opt.unit_gates);

  // Q: unfolded compressed far-end magnitudes.
  c.q_in.assign(tm, 0.0);
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < m && k <= t; ++k) {
      c.q_in[static_cast<size_t>(t) * m + k] =
          std::pow(std::abs(far[t - k]), opt.compression);
    }
  }
  c.q_normed.assign(tm, 0.0);
  c.q_out.assign(tm, 0.0);
  c.q_rstd.assign(frames, 0.0);
  run_projection(c.q_in, m, p.w_q, p.b_q, p.ln_q_scale, p.ln_q_shift, gq,
                 c.q_normed, c.q_rstd, c.q_out);

  // K: compressed mic magnitude expanded to m channels.
  c.k_feat.assign(frames, 0.0);
  c.k_in.assign(tm, 0.0);
  for (int t = 0; t < frames; ++t) {
    c.k_feat[t] = std::pow(std::abs(mic[t]), opt.compression);
    for (int i = 0; i < m; ++i) {
      c.k_in[static_cast<size_t>(t) * m + i] =
          p.conv_k_weight[i] * c.k_feat[t] + p.conv_k_bias[i];
    }
  }
  c.k_normed.assign(tm, 0.0);
  c.k_out.assign(tm, 0.0);
  c.k_rstd.assign(frames, 0.0);
  run_projection(c.k_in, m, p.w_k, p.b_k, p.ln_k_scale, p.ln_k_shift, gk,
                 c.k_normed, c.k_rstd, c.k_out);

  // Causal softmax over tau in [lo(t), t].
  c.span = opt.self_only ? 1
           : opt.context_frames > 0 ? std::min(opt.context_frames, frames)
                                    : frames;
  c.lo.assign(frames, 0);
  c.weight.assign(static_cast<size_t>(frames) * c.span, 0.0);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  for (int t = 0; t < frames; ++t) {
    const int lo = std::max(0, t - c.span + 1);
    c.lo[t] = lo;
    double* w = c.weight.data() + static_cast<size_t>(t) * c.span;
    const double* q = c.q_out.data() + static_cast<size_t>(t) * m;
    double peak = -INFINITY;
    for (int tau = lo; tau <= t; ++tau) {
      const double* k = c.k_out.data() + static_cast<size_t>(tau) * m;
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += q[i] * k[i];
      w[tau - lo] = s * inv_sqrt_m;
      peak = std::max(peak, w[tau - lo]);
    }
    double total = 0.0;
    for (int tau = lo; tau <= t; ++tau) {
      w[tau - lo] = std::exp(w[tau - lo] - peak);
      total += w[tau - lo];
    }
    for (int tau = lo; tau <= t; ++tau) w[tau - lo] /= total;
  }

  // A (before the value gate) and its window sums.
  c.mixed.assign(static_cast<size_t>(frames) * width, 0.0);
  for (int t = 0; t < frames; ++t) {
    double* out = c.mixed.data() + static_cast<size_t>(t) * width;
    const double* w = c.weight.data() + static_cast<size_t>(t) * c.span;
    for (int tau = c.lo[t]; tau <= t; ++tau) {
      const double a = w[tau - c.lo[t]];
      const double* vt = v.data() + static_cast<size_t>(tau) * width;
      for (size_t j = 0; j < width; ++j) out[j] += a * vt[j];
    }
  }
  c.summed = windowed_sums(c.mixed, width, opt.window_frames);
}

void check_bin_shapes(const AttentionParams& p, std::span<const Complex> far,
                      std::span<const Complex> mic, std::span<const double> v) {
  require_input(far.size() == mic.size(), "attention: far/mic length mismatch");
  require_input(v.size() == far.size() * StatsLayout{p.taps}.width(),
                "attention: value features have the wrong shape");
}

void check_spectrograms(const AttentionParams& params, const Spectrogram& far,
                        const Spectrogram& mic, const StatsFeature& v_feat) {
  require_input(far.frames() == mic.frames() && far.bins() == mic.bins(),
                "attention: far and mic spectrogram shapes differ");
  require_input(v_feat.bins == far.bins() && v_feat.frames == far.frames() &&
                    v_feat.taps == params.taps &&
                    v_feat.data.size() == static_cast<size_t>(v_feat.bins) *
                                              v_feat.frames * v_feat.width(),
                "attention: value features disagree with spectrogram shape");
}

}  // namespace

AttentionParams AttentionParams::zeros(int taps) {
  require_config(taps >= 1, "attention: taps must be >= 1");
  AttentionParams p;
  p.taps = taps;
  p.for_each([&](std::string_view name, std::vector<double>& t) {
    t.assign(p.expected_size(name), 0.0);
  });
  return p;
}

AttentionParams AttentionParams::initialize(int taps, std::uint64_t seed) {
  AttentionParams p = zeros(taps);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(taps));
  std::uniform_real_distribution<double> proj(-bound, bound);
  for (auto* t : {&p.w_q, &p.b_q, &p.w_k, &p.b_k}) {
    for (double& x : *t) x = proj(rng);
  }
  // Fan-in of the pointwise conv is one channel.
  std::uniform_real_distribution<double> conv(-1.0, 1.0);
  for (auto* t : {&p.conv_k_weight, &p.conv_k_bias}) {
    for (double& x : *t) x = conv(rng);
  }
  std::fill(p.ln_q_scale.begin(), p.ln_q_scale.end(), 1.0);
  std::fill(p.ln_k_scale.begin(), p.ln_k_scale.end(), 1.0);
  return p;
}

size_t AttentionParams::expected_size(std::string_view name) const {
  const size_t m = static_cast<size_t>(taps);
  if (name == "v_gate") return StatsLayout{taps}.width();
  if (name == "w_q" || name == "w_k") return m * m;
  return m;
}

void AttentionParams::add(const AttentionParams& other, double scale) {
  require_input(other.taps == taps, "attention: adding tensors of different m");
  std::vector<const std::vector<double>*> src;
  other.for_each(
      [&](std::string_view, const std::vector<double>& t) { src.push_back(&t); });
  size_t i = 0;
  for_each([&](std::string_view, std::vector<double>& t) {
    const std::vector<double>& o = *src[i++];
    for (size_t j = 0; j < t.size(); ++j) t[j] += scale * o[j];
  });
}

size_t AttentionParams::num_values() const {
  size_t n = 0;
  for_each([&](std::string_view, const std::vector<double>& t) { n += t.size(); });
  return n;
}

void AttentionParams::validate() const {
  require_config(taps >= 1, "attention: taps must be >= 1");
  for_each([&](std::string_view name, const std::vector<double>& t) {
    if (t.size() != expected_size(name)) {
      throw ConfigError("attention: tensor '" + std::string(name) +
                        "' has " + std::to_string(t.size()) +
                        " values, expected " +
                        std::to_string(expected_size(name)));
    }
  });
  for_each([&](std::string_view name, const std::vector<double>& t) {
    for (double x : t) {
      if (!std::isfinite(x)) {
        throw DataError("attention: tensor '" + std::string(name) +
                        "' contains non-finite values");
      }
    }
  });
}

void AttentionOptions::validate() const {
  require_config(window_frames >= 1, "attention: window_frames must be >= 1");
  require_config(context_frames >= 0, "attention: context_frames must be >= 0");
  require_config(compression > 0.0, "attention: compression must be > 0");
}

StatsFeature pack_stats(const UnfoldedFarEnd& x_unf, const Spectrogram& d) {
  require_input(x_unf.bins() == d.bins() && x_unf.frames() == d.frames(),
                "pack_stats: far-end and mic shapes disagree");
  StatsFeature out{d.bins(), d.frames(), x_unf.taps(), {}};
  out.data.assign(static_cast<size_t>(out.bins) * out.frames * out.width(), 0.0);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < out.bins; ++f) {
    for (int t = 0; t < out.frames; ++t) {
      pack_instantaneous(x_unf.taps_at(f, t), d(t, f), out.row(f, t));
    }
  }
  return out;
}

namespace attention_kernel {

void forward_bin(const AttentionParams& params, const AttentionOptions& options,
                 std::span<const Complex> far, std::span<const Complex> mic,
                 std::span<const double> v, std::span<double> out) {
  check_bin_shapes(params, far, mic, v);
  require_input(out.size() == v.size(), "attention: output has the wrong shape");
  BinCache cache;
  forward_cache(params, options, far, mic, v, cache);
  const std::vector<double> gv = gate_values(params.v_gate, options.unit_gates);
  const size_t width = cache.width;
  for (int t = 0; t < cache.frames; ++t) {
    const double* s = cache.summed.data() + static_cast<size_t>(t) * width;
    double* o = out.data() + static_cast<size_t>(t) * width;
    for (size_t j = 0; j < width; ++j) o[j] = gv[j] * s[j];
  }
}

}  // namespace attention_kernel

namespace {

void backward_from_cache(const AttentionParams& p, const AttentionOptions& opt,
                         const BinCache& c, std::span<const double> v,
                         std::span<const double> upstream, AttentionParams& g) {
  const int frames = c.frames;
  const int m = c.taps;
  const size_t width = c.width;
  const std::vector<double> gv = gate_values(p.v_gate, opt.unit_gates);
  const std::vector<double> gq = gate_values(p.q_gate, opt.unit_gates);
  const std::vector<double> gk = gate_values(p.k_gate, opt.unit_gates);

  // Value gate.
  if (!opt.unit_gates) {
    for (int t = 0; t < frames; ++t) {
      const double* u = upstream.data() + static_cast<size_t>(t) * width;
      const double* s = c.summed.data() + static_cast<size_t>(t) * width;
      for (size_t j = 0; j < width; ++j) {
        g.v_gate[j] += u[j] * s[j] * gv[j] * (1.0 - gv[j]);
      }
    }
  }

  // d mixed[t'] = gv * sum_{t = t'}^{t' + L - 1} upstream[t]: a causal
  // window sum over the time-reversed sequence.
  std::vector<double> d_mixed(static_cast<size_t>(frames) * width);
  {
    WindowedRowSum acc(width, opt.window_frames);
    std::vector<double> row(width);
    for (int t = frames - 1; t >= 0; --t) {
      const auto u = upstream.subspan(static_cast<size_t>(t) * width, width);
      std::span<double> out(d_mixed.data() + static_cast<size_t>(t) * width, width);
      acc.push(u, out);
      for (size_t j = 0; j < width; ++j) out[j] *= gv[j];
    }
  }

  // Through the softmax into Q1, K1.
  std::vector<double> dq_out(static_cast<size_t>(frames) * m, 0.0);
  std::vector<double> dk_out(static_cast<size_t>(frames) * m, 0.0);
  std::vector<double> da(c.span);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  for (int t = 0; t < frames; ++t) {
    const int lo = c.lo[t];
    const double* w = c.weight.data() + static_cast<size_t>(t) * c.span;
    const double* dm = d_mixed.data() + static_cast<size_t>(t) * width;
    double dot = 0.0;
    for (int tau = lo; tau <= t; ++tau) {
      const double* vt = v.data() + static_cast<size_t>(tau) * width;
      double s = 0.0;
      for (size_t j = 0; j < width; ++j) s += dm[j] * vt[j];
      da[tau - lo] = s;
      dot += w[tau - lo] * s;
    }
    const double* q = c.q_out.data() + static_cast<size_t>(t) * m;
    double* dq = dq_out.data() + static_cast<size_t>(t) * m;
    for (int tau = lo; tau <= t; ++tau) {
      const double ds = w[tau - lo] * (da[tau - lo] - dot) * inv_sqrt_m;
      const double* k = c.k_out.data() + static_cast<size_t>(tau) * m;
      double* dk = dk_out.data() + static_cast<size_t>(tau) * m;
      for (int i = 0; i < m; ++i) {
        dq[i] += ds * k[i];
        dk[i] += ds * q[i];
      }
    }
  }

  // Gate, layer norm and affine map of one path. Returns d(affine input).
  auto project_backward = [&](const std::vector<double>& d_out,
                              const std::vector<double>& normed,
                              const std::vector<double>& rstd,
                              const std::vector<double>& inputs,
                              const std::vector<double>& gate,
                              const std::vector<double>& scale,
                              const std::vector<double>& shift,
                              const std::vector<double>& w,
                              std::vector<double>& d_gate,
                              std::vector<double>& d_scale,
                              std::vector<double>& d_shift,
                              std::vector<double>& d_w, std::vector<double>& d_b) {
    std::vector<double> d_in(static_cast<size_t>(frames) * m, 0.0);
    std::vector<double> dy(m), dn(m), dz(m);
    for (int t = 0; t < frames; ++t) {
      const size_t o = static_cast<size_t>(t) * m;
      for (int i = 0; i < m; ++i) {
        const double y = scale[i] * normed[o + i] + shift[i];
        if (!opt.unit_gates) {
          d_gate[i] += d_out[o + i] * y * gate[i] * (1.0 - gate[i]);
        }
        dy[i] = d_out[o + i] * gate[i];
        d_scale[i] += dy[i] * normed[o + i];
        d_shift[i] += dy[i];
        dn[i] = dy[i] * scale[i];
      }
      layer_norm_backward(std::span<const double>(normed).subspan(o, m), rstd[t],
                          dn, dz);
      for (int i = 0; i < m; ++i) {
        d_b[i] += dz[i];
        for (int j = 0; j < m; ++j) {
          d_w[static_cast<size_t>(i) * m + j] += dz[i] * inputs[o + j];
          d_in[o + j] += w[static_cast<size_t>(i) * m + j] * dz[i];
        }
      }
    }
    return d_in;
  };

  project_backward(dq_out, c.q_normed, c.q_rstd, c.q_in, gq,
                   p.ln_q_scale, p.ln_q_shift, p.w_q, g.q_gate, g.ln_q_scale,
                   g.ln_q_shift, g.w_q, g.b_q);
  const std::vector<double> dk_in =
      project_backward(dk_out, c.k_normed, c.k_rstd, c.k_in, gk,
                       p.ln_k_scale, p.ln_k_shift, p.w_k, g.k_gate,
                       g.ln_k_scale, g.ln_k_shift, g.w_k, g.b_k);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < m; ++i) {
      const double d = dk_in[static_cast<size_t>(t) * m + i];
      g.conv_k_weight[i] += d * c.k_feat[t];
      g.conv_k_bias[i] += d;
    }
  }
}

}  // namespace

namespace attention_kernel {

void backward_bin(const AttentionParams& params, const AttentionOptions& options,
                  std::span<const Complex> far, std::span<const Complex> mic,
                  std::span<const double> v, std::span<const double> upstream,
                  AttentionParams& grads) {
  check_bin_shapes(params, far, mic, v);
  require_input(upstream.size() == v.size(),
                "attention: upstream gradient has the wrong shape");
  BinCache cache;
  forward_cache(params, options, far, mic, v, cache);
  backward_from_cache(params, options, cache, v, upstream, grads);
}

double squared_error_bin(const AttentionParams& params,
                         const AttentionOptions& options,
                         std::span<const Complex> far, std::span<const Complex> mic,
                         std::span<const double> v, std::span<const double> target,
                         double grad_scale, AttentionParams* grads) {
  check_bin_shapes(params, far, mic, v);
  require_input(target.size() == v.size(), "attention: target has the wrong shape");
  BinCache cache;
  forward_cache(params, options, far, mic, v, cache);
  const std::vector<double> gv = gate_values(params.v_gate, options.unit_gates);
  const size_t width = cache.width;
  std::vector<double> upstream(grads != nullptr ? v.size() : 0);
  double loss = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const double diff = gv[i % width] * cache.summed[i] - target[i];
    loss += diff * diff;
    if (grads != nullptr) upstream[i] = 2.0 * grad_scale * diff;
  }
  if (grads != nullptr) {
    backward_from_cache(params, options, cache, v, upstream, *grads);
  }
  return loss;
}

}  // namespace attention_kernel

StatsFeature attention_forward_packed(const AttentionParams& params,
                                      const AttentionOptions& options,
                                      const Spectrogram& far,
                                      const Spectrogram& mic,
                                      const StatsFeature& v_feat) {
  params.validate();
  options.validate();
  check_spectrograms(params, far, mic, v_feat);
  StatsFeature out{v_feat.bins, v_feat.frames, v_feat.taps, {}};
  out.data.assign(v_feat.data.size(), 0.0);
  internal::ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < far.bins(); ++f) {
    try {
      const std::vector<Complex> x = far.bin(f);
      const std::vector<Complex> d = mic.bin(f);
      attention_kernel::forward_bin(params, options, x, d, v_feat.bin(f), out.bin(f));
    } catch (...) {
      errors.capture(f);
    }
  }
  errors.rethrow();
  return out;
}

WienerStats attention_forward(const AttentionParams& params,
                              const AttentionOptions& options,
                              const Spectrogram& far, const Spectrogram& mic,
                              const StatsFeature& v_feat) {
  const StatsFeature packed =
      attention_forward_packed(params, options, far, mic, v_feat);
  WienerStats stats(packed.bins, packed.frames, packed.taps,
                    options.window_frames);
  for (int f = 0; f < packed.bins; ++f) {
    for (int t = 0; t < packed.frames; ++t) stats.set_packed(f, t, packed.row(f, t));
  }
  return stats;
}

AttentionParams attention_backward(const AttentionParams& params,
                                   const AttentionOptions& options,
                                   const Spectrogram& far,
                                   const Spectrogram& mic,
                                   const StatsFeature& v_feat,
                                   const StatsFeature& upstream) {
  params.validate();
  options.validate();
  check_spectrograms(params, far, mic, v_feat);
  require_input(upstream.bins == v_feat.bins && upstream.frames == v_feat.frames &&
                    upstream.taps == v_feat.taps &&
                    upstream.data.size() == v_feat.data.size(),
                "attention_backward: upstream gradient has the wrong shape");
  // Per-bin gradients reduced in bin order for a schedule-independent sum.
  std::vector<AttentionParams> per_bin(far.bins(), AttentionParams::zeros(params.taps));
  internal::ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < far.bins(); ++f) {
    try {
      const std::vector<Complex> x = far.bin(f);
      const std::vector<Complex> d = mic.bin(f);
      attention_kernel::backward_bin(params, options, x, d, v_feat.bin(f),
                                     upstream.bin(f), per_bin[f]);
    } catch (...) {
      errors.capture(f);
    }
  }
  errors.rethrow();
  AttentionParams total = AttentionParams::zeros(params.taps);
  for (const auto& g : per_bin) total.add(g);
  return total;
}

AttentionStatsSource::AttentionStatsSource(AttentionParams params,
                                           AttentionOptions options)
    : params_(std::move(params)), options_(options) {
  params_.validate();
  options_.validate();
}

void AttentionStatsSource::windowed_stats(const BinView& bin,
                                          std::span<double> out) const {
  require_input(bin.taps == params_.taps,
                "attention: checkpoint tap count differs from pipeline m");
  require_input(bin.window_frames == options_.window_frames,
                "attention: window length differs from pipeline L");
  const size_t width = StatsLayout{bin.taps}.width();
  std::vector<double> v(static_cast<size_t>(bin.frames()) * width);
  std::vector<Complex> x(bin.taps);
  for (int t = 0; t < bin.frames(); ++t) {
    bin.tap_vector(t, x);
    pack_instantaneous(x, bin.mic[t],
                       std::span<double>(v).subspan(static_cast<size_t>(t) * width, width));
  }
  attention_kernel::forward_bin(params_, options_, bin.far, bin.mic, v, out);
}

}  // namespace astws
