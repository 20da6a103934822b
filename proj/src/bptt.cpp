#include <algorithm>
#include <cmath>

#include "qsnn/error.hpp"
#include "qsnn/trainer.hpp"

namespace qsnn {

std::size_t argmax_row(const RealTensor& logits, std::size_t row) {
  const std::size_t classes = logits.shape()[1];
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (logits.at(row, c) > logits.at(row, best)) best = c;
  }
  return best;
}

namespace {

// Softmax probabilities of one row, numerically shifted.
void softmax_row(const RealTensor& logits, std::size_t row, std::vector<Real>& p) {
  const std::size_t classes = logits.shape()[1];
  p.resize(classes);
  Real top = logits.at(row, 0);
  for (std::size_t c = 1; c < classes; ++c) top = std::max(top, logits.at(row, c));
  Real z = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    p[c] = std::exp(logits.at(row, c) - top);
    z += p[c];
  }
  for (Real& v : p) v /= z;
}

void check_labels(const RealTensor& logits, std::span<const int> labels) {
  if (logits.shape().rank() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeError("logits " + logits.shape().to_string() + " do not match " + std::to_string(labels.size()) +
                     " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.shape()[1]) {
      throw RangeError("label " + std::to_string(y) + " outside the network's classes");
    }
  }
}

}  // namespace

Real cross_entropy(const RealTensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  std::vector<Real> p;
  Real loss = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    softmax_row(logits, b, p);
    loss -= std::log(std::max(p[static_cast<std::size_t>(labels[b])], 1e-300));
  }
  return loss / static_cast<Real>(labels.size());
}

LossAndGradients compute_gradients(const NetworkSpec& net, const StepInputs& inputs, std::span<const int> labels,
                                   const BackwardOptions& opts) {
  ForwardCache cache;
  ForwardOptions fo;
  fo.smooth_spikes = opts.smooth_spikes;
  fo.cache = &cache;
  const ForwardResult fr = forward(net, inputs, fo);
  check_labels(fr.logits, labels);

  const std::size_t batch = cache.batch;
  const std::size_t classes = fr.logits.shape()[1];
  const std::size_t n_layers = net.layers.size();
  const std::size_t steps = cache.steps.size();

  LossAndGradients out;
  out.loss = cross_entropy(fr.logits, labels);
  std::vector<Real> dlogits(batch * classes);
  {
    std::vector<Real> p;
    for (std::size_t b = 0; b < batch; ++b) {
      softmax_row(fr.logits, b, p);
      for (std::size_t c = 0; c < classes; ++c) {
        const Real target = static_cast<int>(c) == labels[b] ? 1.0 : 0.0;
        dlogits[b * classes + c] = (p[c] - target) / static_cast<Real>(batch);
      }
      if (static_cast<int>(argmax_row(fr.logits, b)) == labels[b]) ++out.correct;
    }
  }

  out.weight_grads.resize(n_layers);
  std::size_t first_weighted = n_layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (net.layers[i].is_weighted_kind()) {
      out.weight_grads[i] = RealTensor(net.layers[i].weight.shape());
      first_weighted = std::min(first_weighted, i);
    }
  }

  // Gradient w.r.t. the post-reset membrane of each spiking layer, carried
  // from step t+1 back to step t.
  std::vector<std::vector<Real>> d_v(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (net.layers[i].neuron) d_v[i].assign(batch * net.layers[i].out_shape.numel(), 0.0);
  }

  std::vector<Real> scratch;
  for (std::size_t t = steps; t-- > 0;) {
    // Gradient w.r.t. the current layer's output, walking down the stack.
    std::vector<Real> d_out(batch * classes, 0.0);
    for (std::size_t li = n_layers; li-- > 0;) {
      const LayerSpec& l = net.layers[li];
      const LayerStepCache& c = cache.steps[t][li];
      const std::size_t in_n = l.in_shape.numel(), out_n = l.out_shape.numel();
      const bool last = li + 1 == n_layers;

      std::vector<Real> d_z(batch * out_n, 0.0);
      if (l.neuron) {
        const NeuronParams& p = *l.neuron;
        const Real leak = p.leak();
        std::vector<Real>& dv = d_v[li];
        for (std::size_t i = 0; i < d_z.size(); ++i) {
          const Real h = c.membrane[i];
          Real d_level = last ? 0.0 : d_out[i] * p.v_th;
          if (last && net.decoder == Decoder::spike_count) d_level += dlogits[i];
          const Real sg = neuron_math::graded_surrogate(h, p);
          Real dv_dh;
          if (p.reset_mode == ResetMode::hard) {
            const Real g = opts.smooth_spikes ? neuron_math::ramp(h, p.v_th, p.surrogate_width)
                                              : (neuron_math::fire_level(h, p) > 0 ? 1.0 : 0.0);
            dv_dh = 1.0 - g;
            if (!opts.detach_reset) dv_dh += (p.v_rst - h) * neuron_math::window(h, p.v_th, p.surrogate_width);
          } else {
            dv_dh = opts.detach_reset ? 1.0 : 1.0 - p.v_th * sg;
          }
          const Real d_h = d_level * sg + dv[i] * dv_dh;
          d_z[i] = d_h;
          dv[i] = leak * d_h;
        }
      } else if (!last) {
        d_z = d_out;
      }
      if (last && net.decoder == Decoder::membrane_sum) {
        for (std::size_t i = 0; i < d_z.size(); ++i) d_z[i] += dlogits[i];
      }

      const bool need_dx = li > first_weighted;
      std::vector<Real> d_x;
      switch (l.kind) {
        case LayerKind::dense: {
          scratch.assign(in_n * out_n, 0.0);
          kernels::gemm_tn(c.input, d_z, scratch, in_n, batch, out_n);
          auto g = out.weight_grads[li].data();
          for (std::size_t i = 0; i < scratch.size(); ++i) g[i] += scratch[i];
          if (need_dx) {
            d_x.assign(batch * in_n, 0.0);
            kernels::gemm_nt(d_z, l.quantized.values.data(), d_x, batch, out_n, in_n);
          }
          break;
        }
        case LayerKind::conv2d: {
          const Shape& ks = l.weight.shape();
          const std::size_t kvol = ks[1] * ks[2] * ks[3];
          const std::size_t pixels = l.out_shape[1] * l.out_shape[2];
          std::vector<Real> cols(kvol * pixels), dcols(kvol * pixels);
          scratch.assign(ks[0] * kvol, 0.0);
          auto g = out.weight_grads[li].data();
          if (need_dx) d_x.assign(batch * in_n, 0.0);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::span<const Real> dzb = std::span<const Real>(d_z).subspan(b * out_n, out_n);
            kernels::im2col(std::span<const Real>(c.input).subspan(b * in_n, in_n), l.in_shape[0], l.in_shape[1],
                            l.in_shape[2], ks[2], ks[3], l.geometry, cols);
            kernels::gemm_nt(dzb, cols, scratch, ks[0], pixels, kvol);
            for (std::size_t i = 0; i < scratch.size(); ++i) g[i] += scratch[i];
            if (need_dx) {
              kernels::gemm_tn(l.quantized.values.data(), dzb, dcols, kvol, ks[0], pixels);
              kernels::col2im(dcols, l.in_shape[0], l.in_shape[1], l.in_shape[2], ks[2], ks[3], l.geometry,
                              std::span<Real>(d_x).subspan(b * in_n, in_n));
            }
          }
          break;
        }
        case LayerKind::pooling:
          if (need_dx) {
            d_x.assign(batch * in_n, 0.0);
            for (std::size_t b = 0; b < batch; ++b) {
              for (std::size_t o = 0; o < out_n; ++o) d_x[b * in_n + c.argmax[b * out_n + o]] += d_z[b * out_n + o];
            }
          }
          break;
        case LayerKind::flatten:
          d_x = std::move(d_z);
          break;
      }
      if (li == 0 || !need_dx) break;
      d_out = std::move(d_x);
    }
  }
  return out;
}

}  // namespace qsnn
