#include "spidernet/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spidernet/errors.hpp"

namespace spidernet {

namespace {

struct KindInfo {
  PrimitiveKind kind;
  std::string_view name;
};

constexpr std::array<KindInfo, 14> kKindNames = {{
    {PrimitiveKind::kIdentity, "identity"},
    {PrimitiveKind::kMaxPool3x3, "max_pool_3x3"},
    {PrimitiveKind::kAvgPool3x3, "avg_pool_3x3"},
    {PrimitiveKind::kSepConv3x3, "sep_conv_3x3"},
    {PrimitiveKind::kSepConv5x5, "sep_conv_5x5"},
    {PrimitiveKind::kDilConv3x3, "dil_conv_3x3"},
    {PrimitiveKind::kDilConv5x5, "dil_conv_5x5"},
    {PrimitiveKind::kConv1x1, "conv_1x1"},
    {PrimitiveKind::kFactorizedReduce, "factorized_reduce"},
    {PrimitiveKind::kBatchNorm, "batch_norm"},
    {PrimitiveKind::kReLU, "relu"},
    {PrimitiveKind::kGlobalAvgPool, "global_avg_pool"},
    {PrimitiveKind::kLinearClassifier, "linear"},
    {PrimitiveKind::kStemConv3x3, "stem_conv_3x3"},
}};

[[noreturn]] void shape_error(std::string_view what, const Shape& a, const Shape& b) {
  throw StructuralError(std::string(what) + ": shapes " + a.str() + " and " + b.str());
}

int conv_out_extent(int in, int k, const ops::ConvSpec& s) {
  const int span = s.dilation * (k - 1) + 1;
  const int avail = in + 2 * s.pad - s.offset - span;
  if (avail < 0) return 0;
  return avail / s.stride + 1;
}

Shape bn_param_shape(int c) { return Shape{1, c, 1, 1}; }

}  // namespace

bool is_searchable(PrimitiveKind kind) {
  return static_cast<int>(kind) <= static_cast<int>(PrimitiveKind::kDilConv5x5);
}

std::string_view kind_name(PrimitiveKind kind) {
  for (const auto& info : kKindNames) {
    if (info.kind == kind) return info.name;
  }
  return "unknown";
}

std::optional<PrimitiveKind> kind_from_name(std::string_view name) {
  for (const auto& info : kKindNames) {
    if (info.name == name) return info.kind;
  }
  return std::nullopt;
}

void BatchNormStats::reset() {
  std::fill(mean.begin(), mean.end(), 0.0);
  std::fill(var.begin(), var.end(), 1.0);
}

namespace ops {

Var conv2d(Tape& tape, Var xv, Var wv, const ConvSpec& spec) {
  const Tensor& x = tape.value(xv);
  const Tensor& w = tape.value(wv);
  const Shape xs = x.shape;
  const Shape ws = w.shape;
  const int groups = spec.groups;
  if (groups < 1 || xs.c % groups != 0 || ws.n % groups != 0 || ws.c != xs.c / groups ||
      ws.h != ws.w) {
    shape_error("conv2d input/weight mismatch", xs, ws);
  }
  const int k = ws.h;
  const int oh = conv_out_extent(xs.h, k, spec);
  const int ow = conv_out_extent(xs.w, k, spec);
  if (oh <= 0 || ow <= 0) shape_error("conv2d input smaller than kernel", xs, ws);
  const int cin_g = xs.c / groups;
  const int cout_g = ws.n / groups;

  Tensor out(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n) {
    for (int oc = 0; oc < ws.n; ++oc) {
      const int g = oc / cout_g;
      double* dst = &out.at(n, oc, 0, 0);
      for (int icg = 0; icg < cin_g; ++icg) {
        const int ic = g * cin_g + icg;
        const double* src = &x.data[x.index(n, ic, 0, 0)];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wk = w.at(oc, icg, ky, kx);
            if (wk == 0.0) continue;
            const int dy = spec.offset + ky * spec.dilation - spec.pad;
            const int dx = spec.offset + kx * spec.dilation - spec.pad;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * spec.stride + dy;
              if (iy < 0 || iy >= xs.h) continue;
              const double* row = src + static_cast<std::size_t>(iy) * xs.w;
              double* orow = dst + static_cast<std::size_t>(oy) * ow;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * spec.stride + dx;
                if (ix < 0 || ix >= xs.w) continue;
                orow[ox] += wk * row[ix];
              }
            }
          }
        }
      }
    }
  }

  return tape.record(std::move(out), [xv, wv, spec, k, oh, ow, cin_g, cout_g](Tape& t,
                                                                            std::uint32_t self) {
    const Tensor& x = t.value(xv);
    const Tensor& w = t.value(wv);
    const Tensor& gout = t.grad(self);
    const Shape xs = x.shape;
    Tensor& gx = t.grad(xv);
    Tensor& gw = t.grad(wv);
    for (int n = 0; n < xs.n; ++n) {
      for (int oc = 0; oc < w.shape.n; ++oc) {
        const int g = oc / cout_g;
        const double* go = &gout.data[gout.index(n, oc, 0, 0)];
        for (int icg = 0; icg < cin_g; ++icg) {
          const int ic = g * cin_g + icg;
          const std::size_t base = x.index(n, ic, 0, 0);
          const double* src = &x.data[base];
          double* gsrc = &gx.data[base];
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const double wk = w.at(oc, icg, ky, kx);
              const int dy = spec.offset + ky * spec.dilation - spec.pad;
              const int dx = spec.offset + kx * spec.dilation - spec.pad;
              double acc = 0.0;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * spec.stride + dy;
                if (iy < 0 || iy >= xs.h) continue;
                const std::size_t roff = static_cast<std::size_t>(iy) * xs.w;
                const double* grow = go + static_cast<std::size_t>(oy) * ow;
                for (int ox = 0; ox < ow; ++ox) {
                  const int ix = ox * spec.stride + dx;
                  if (ix < 0 || ix >= xs.w) continue;
                  acc += grow[ox] * src[roff + ix];
                  gsrc[roff + ix] += wk * grow[ox];
                }
              }
              gw.at(oc, icg, ky, kx) += acc;
            }
          }
        }
      }
    }
  });
}

Var batch_norm(Tape& tape, Var xv, Var gv, Var bv, BatchNormStats& stats) {
  const Tensor& x = tape.value(xv);
  const Tensor& gamma = tape.value(gv);
  const Tensor& beta = tape.value(bv);
  const Shape xs = x.shape;
  if (gamma.shape != bn_param_shape(xs.c) || beta.shape != gamma.shape ||
      stats.mean.size() != static_cast<std::size_t>(xs.c)) {
    shape_error("batch_norm channel mismatch", xs, gamma.shape);
  }
  const std::size_t plane = xs.plane();
  const double count = static_cast<double>(xs.n) * plane;

  std::vector<double> mean(xs.c), inv_std(xs.c);
  const bool batch_stats = tape.mode() == Mode::kTrain;
  for (int c = 0; c < xs.c; ++c) {
    if (batch_stats) {
      double s = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const double* p = &x.data[x.index(n, c, 0, 0)];
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / count;
      double ss = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const double* p = &x.data[x.index(n, c, 0, 0)];
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = ss / count;
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
      if (tape.update_running_stats) {
        const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
        stats.mean[c] = (1.0 - kBatchNormMomentum) * stats.mean[c] + kBatchNormMomentum * m;
        stats.var[c] = (1.0 - kBatchNormMomentum) * stats.var[c] + kBatchNormMomentum * unbiased;
      }
    } else {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + kBatchNormEps);
    }
  }

  Tensor out(xs);
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      const double a = gamma.data[c] * inv_std[c];
      const double b = beta.data[c] - a * mean[c];
      for (std::size_t i = 0; i < plane; ++i) out.data[base + i] = a * x.data[base + i] + b;
    }
  }

  return tape.record(std::move(out), [xv, gv, bv, mean, inv_std, batch_stats, count,
                                      plane](Tape& t, std::uint32_t self) {
    const Tensor& x = t.value(xv);
    const Tensor& gamma = t.value(gv);
    const Tensor& gout = t.grad(self);
    const Shape xs = x.shape;
    Tensor& gx = t.grad(xv);
    Tensor& gg = t.grad(gv);
    Tensor& gb = t.grad(bv);
    for (int c = 0; c < xs.c; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t base = x.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double xhat = (x.data[base + i] - mean[c]) * inv_std[c];
          sum_dy += gout.data[base + i];
          sum_dy_xhat += gout.data[base + i] * xhat;
        }
      }
      gg.data[c] += sum_dy_xhat;
      gb.data[c] += sum_dy;
      const double gscale = gamma.data[c] * inv_std[c];
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t base = x.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          if (batch_stats) {
            const double xhat = (x.data[base + i] - mean[c]) * inv_std[c];
            gx.data[base + i] +=
                gscale * (gout.data[base + i] - sum_dy / count - xhat * sum_dy_xhat / count);
          } else {
            gx.data[base + i] += gscale * gout.data[base + i];
          }
        }
      }
    }
  });
}

Var relu(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  Var result = tape.record(std::move(out), [xv](Tape& t, std::uint32_t self) {
    const Tensor& x = t.value(xv);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x.data[i] > 0.0) gx.data[i] += g.data[i];
    }
  });
  if (tape.capturing_relu_outputs()) tape.note_relu_output(result);
  return result;
}

Var max_pool3x3(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  const Shape s = x.shape;
  Tensor out(s);
  std::vector<std::uint32_t> argmax(x.size());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          double best = -std::numeric_limits<double>::infinity();
          std::uint32_t best_i = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            const int iy = y + dy;
            if (iy < 0 || iy >= s.h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int ix = xx + dx;
              if (ix < 0 || ix >= s.w) continue;
              const std::size_t j = base + static_cast<std::size_t>(iy) * s.w + ix;
              if (x.data[j] > best) {
                best = x.data[j];
                best_i = static_cast<std::uint32_t>(j);
              }
            }
          }
          const std::size_t o = base + static_cast<std::size_t>(y) * s.w + xx;
          out.data[o] = best;
          argmax[o] = best_i;
        }
      }
    }
  }
  return tape.record(std::move(out), [xv, argmax = std::move(argmax)](Tape& t,
                                                                      std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (std::size_t o = 0; o < g.size(); ++o) gx.data[argmax[o]] += g.data[o];
  });
}

Var avg_pool3x3(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  const Shape s = x.shape;
  Tensor out(s);
  auto window_count = [s](int y, int xx) {
    const int ny = std::min(y + 1, s.h - 1) - std::max(y - 1, 0) + 1;
    const int nx = std::min(xx + 1, s.w - 1) - std::max(xx - 1, 0) + 1;
    return ny * nx;
  };
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          double acc = 0.0;
          for (int iy = std::max(y - 1, 0); iy <= std::min(y + 1, s.h - 1); ++iy) {
            for (int ix = std::max(xx - 1, 0); ix <= std::min(xx + 1, s.w - 1); ++ix) {
              acc += x.data[base + static_cast<std::size_t>(iy) * s.w + ix];
            }
          }
          out.data[base + static_cast<std::size_t>(y) * s.w + xx] = acc / window_count(y, xx);
        }
      }
    }
  }
  return tape.record(std::move(out), [xv, window_count](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xv);
    const Shape s = g.shape;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = g.index(n, c, 0, 0);
        for (int y = 0; y < s.h; ++y) {
          for (int xx = 0; xx < s.w; ++xx) {
            const double share =
                g.data[base + static_cast<std::size_t>(y) * s.w + xx] / window_count(y, xx);
            for (int iy = std::max(y - 1, 0); iy <= std::min(y + 1, s.h - 1); ++iy) {
              for (int ix = std::max(xx - 1, 0); ix <= std::min(xx + 1, s.w - 1); ++ix) {
                gx.data[base + static_cast<std::size_t>(iy) * s.w + ix] += share;
              }
            }
          }
        }
      }
    }
  });
}

Var add(Tape& tape, std::span<const Var> xs) {
  if (xs.empty()) throw StructuralError("add: no operands");
  if (xs.size() == 1) return xs.front();
  Tensor out = tape.value(xs.front());
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& x = tape.value(xs[k]);
    if (x.shape != out.shape) shape_error("node summation", out.shape, x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] += x.data[i];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.record(std::move(out), [inputs = std::move(inputs)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    for (Var v : inputs) {
      Tensor& gx = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    }
  });
}

Var scale(Tape& tape, Var xv, double factor) {
  Tensor out = tape.value(xv);
  for (double& v : out.data) v *= factor;
  return tape.record(std::move(out), [xv, factor](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += factor * g.data[i];
  });
}

Var concat_channels(Tape& tape, Var av, Var bv) {
  const Tensor& a = tape.value(av);
  const Tensor& b = tape.value(bv);
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w) {
    shape_error("concat_channels", a.shape, b.shape);
  }
  const Shape s{a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w};
  Tensor out(s);
  const std::size_t pa = a.shape.c * a.shape.plane();
  const std::size_t pb = b.shape.c * b.shape.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(&a.data[n * pa], pa, &out.data[n * (pa + pb)]);
    std::copy_n(&b.data[n * pb], pb, &out.data[n * (pa + pb) + pa]);
  }
  return tape.record(std::move(out), [av, bv, pa, pb](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(av);
    for (int n = 0; n < g.shape.n; ++n) {
      for (std::size_t i = 0; i < pa; ++i) ga.data[n * pa + i] += g.data[n * (pa + pb) + i];
    }
    Tensor& gb = t.grad(bv);
    for (int n = 0; n < g.shape.n; ++n) {
      for (std::size_t i = 0; i < pb; ++i) gb.data[n * pb + i] += g.data[n * (pa + pb) + pa + i];
    }
  });
}

Var global_avg_pool(Tape& tape, Var xv) {
  const Tensor& x = tape.value(xv);
  const Shape s = x.shape;
  const std::size_t plane = s.plane();
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = &x.data[x.index(n, c, 0, 0)];
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out.data[static_cast<std::size_t>(n) * s.c + c] = acc / static_cast<double>(plane);
    }
  }
  return tape.record(std::move(out), [xv, plane](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double share = g.data[k] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx.data[k * plane + i] += share;
    }
  });
}

Var dropout(Tape& tape, Var xv, double rate) {
  if (tape.mode() != Mode::kTrain || tape.dropout_rng == nullptr || rate <= 0.0) return xv;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  const Tensor& x = tape.value(xv);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.size());
  const double inv = 1.0 / (1.0 - rate);
  for (double& m : mask) m = keep(*tape.dropout_rng) ? inv : 0.0;
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * mask[i];
  return tape.record(std::move(out), [xv, mask = std::move(mask)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xv);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += mask[i] * g.data[i];
  });
}

Var linear(Tape& tape, Var xv, Var wv, Var bv) {
  const Tensor& x = tape.value(xv);
  const Tensor& w = tape.value(wv);
  const Tensor& b = tape.value(bv);
  const int batch = x.shape.n;
  const std::size_t features = x.size() / std::max(batch, 1);
  const int classes = w.shape.n;
  if (static_cast<std::size_t>(w.shape.c) * w.shape.h * w.shape.w != features ||
      b.shape != Shape{1, classes, 1, 1}) {
    shape_error("linear input/weight mismatch", x.shape, w.shape);
  }
  Tensor out(Shape{batch, classes, 1, 1});
  for (int n = 0; n < batch; ++n) {
    const double* xr = &x.data[n * features];
    for (int k = 0; k < classes; ++k) {
      const double* wr = &w.data[k * features];
      double acc = b.data[k];
      for (std::size_t f = 0; f < features; ++f) acc += wr[f] * xr[f];
      out.data[static_cast<std::size_t>(n) * classes + k] = acc;
    }
  }
  return tape.record(std::move(out), [xv, wv, bv, features](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(xv);
    const Tensor& w = t.value(wv);
    Tensor& gx = t.grad(xv);
    Tensor& gw = t.grad(wv);
    Tensor& gb = t.grad(bv);
    const int batch = g.shape.n;
    const int classes = g.shape.c;
    for (int n = 0; n < batch; ++n) {
      for (int k = 0; k < classes; ++k) {
        const double d = g.data[static_cast<std::size_t>(n) * classes + k];
        if (d == 0.0) continue;
        gb.data[k] += d;
        for (std::size_t f = 0; f < features; ++f) {
          gw.data[k * features + f] += d * x.data[n * features + f];
          gx.data[n * features + f] += d * w.data[k * features + f];
        }
      }
    }
  });
}

Var softmax_cross_entropy(Tape& tape, Var lv, std::span<const int> labels) {
  const Tensor& logits = tape.value(lv);
  const int batch = logits.shape.n;
  const int classes = logits.shape.c;
  if (logits.shape.h != 1 || logits.shape.w != 1) {
    shape_error("softmax_cross_entropy expects (batch, classes, 1, 1)", logits.shape,
                Shape{batch, classes, 1, 1});
  }
  if (labels.size() != static_cast<std::size_t>(batch)) {
    throw InputError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }
  for (int label : labels) {
    if (label < 0 || label >= classes) {
      throw InputError("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (int n = 0; n < batch; ++n) {
    const double* row = &logits.data[static_cast<std::size_t>(n) * classes];
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(row[k] - mx);
    const double log_z = mx + std::log(z);
    for (int k = 0; k < classes; ++k) {
      probs[static_cast<std::size_t>(n) * classes + k] = std::exp(row[k] - log_z);
    }
    loss += log_z - row[labels[n]];
  }
  loss /= batch;
  Tensor out(Shape{1, 1, 1, 1}, loss);
  std::vector<int> lab(labels.begin(), labels.end());
  return tape.record(std::move(out), [lv, probs = std::move(probs), lab = std::move(lab),
                                      classes](Tape& t, std::uint32_t self) {
    const double g = t.grad(self).data[0];
    Tensor& gl = t.grad(lv);
    const int batch = static_cast<int>(lab.size());
    for (int n = 0; n < batch; ++n) {
      for (int k = 0; k < classes; ++k) {
        const std::size_t i = static_cast<std::size_t>(n) * classes + k;
        gl.data[i] += g * (probs[i] - (k == lab[n] ? 1.0 : 0.0)) / batch;
      }
    }
  });
}

}  // namespace ops

namespace {

int kernel_size(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::kSepConv3x3:
    case PrimitiveKind::kDilConv3x3:
    case PrimitiveKind::kStemConv3x3:
      return 3;
    case PrimitiveKind::kSepConv5x5:
    case PrimitiveKind::kDilConv5x5:
      return 5;
    default:
      return 1;
  }
}

void init_uniform(Param& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value.data) v = dist(rng);
}

// He-uniform bound for a weight whose trailing three extents form the fan-in.
double he_bound(const Shape& s) { return std::sqrt(6.0 / (static_cast<double>(s.c) * s.h * s.w)); }

void add_bn(PrimitiveBlock& b, int channels, const std::string& suffix) {
  b.params.emplace_back("gamma" + suffix, bn_param_shape(channels));
  b.params.emplace_back("beta" + suffix, bn_param_shape(channels));
  b.bn.emplace_back(channels);
}

void require_channels(const PrimitiveBlock& b, const Shape& in) {
  if (in.c != b.in_channels) {
    throw StructuralError(std::string(kind_name(b.kind)) + ": expected " +
                          std::to_string(b.in_channels) + " input channels, got shape " +
                          in.str());
  }
}

Var bn_apply(Tape& tape, Var x, PrimitiveBlock& b, std::size_t param_index, std::size_t stat) {
  Var g = tape.param(b.params[param_index]);
  Var beta = tape.param(b.params[param_index + 1]);
  return ops::batch_norm(tape, x, g, beta, b.bn[stat]);
}

int fr_channels_a(int out) { return (out + 1) / 2; }
int fr_channels_b(int out) { return out / 2; }

}  // namespace

PrimitiveBlock make_block(PrimitiveKind kind, int in_channels, int out_channels,
                          std::mt19937_64& rng) {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError(std::string(kind_name(kind)) + ": channel counts must be positive");
  }
  PrimitiveBlock b;
  b.kind = kind;
  b.in_channels = in_channels;
  b.out_channels = out_channels;
  const int c = in_channels;
  const int k = kernel_size(kind);
  switch (kind) {
    case PrimitiveKind::kIdentity:
    case PrimitiveKind::kMaxPool3x3:
    case PrimitiveKind::kAvgPool3x3:
    case PrimitiveKind::kReLU:
    case PrimitiveKind::kGlobalAvgPool:
      if (in_channels != out_channels) {
        throw ConfigError(std::string(kind_name(kind)) + " cannot change channel count");
      }
      break;
    case PrimitiveKind::kSepConv3x3:
    case PrimitiveKind::kSepConv5x5:
      if (in_channels != out_channels) throw ConfigError("sep_conv must preserve channels");
      for (const char* stage : {"1", "2"}) {
        b.params.emplace_back(std::string("dw") + stage, Shape{c, 1, k, k});
        b.params.emplace_back(std::string("pw") + stage, Shape{c, c, 1, 1});
        add_bn(b, c, stage);
      }
      break;
    case PrimitiveKind::kDilConv3x3:
    case PrimitiveKind::kDilConv5x5:
      if (in_channels != out_channels) throw ConfigError("dil_conv must preserve channels");
      b.params.emplace_back("dw", Shape{c, 1, k, k});
      b.params.emplace_back("pw", Shape{c, c, 1, 1});
      add_bn(b, c, "");
      break;
    case PrimitiveKind::kConv1x1:
      b.params.emplace_back("w", Shape{out_channels, in_channels, 1, 1});
      add_bn(b, out_channels, "");
      break;
    case PrimitiveKind::kFactorizedReduce:
      b.params.emplace_back("w_a", Shape{fr_channels_a(out_channels), in_channels, 1, 1});
      if (fr_channels_b(out_channels) > 0) {
        b.params.emplace_back("w_b", Shape{fr_channels_b(out_channels), in_channels, 1, 1});
      }
      add_bn(b, out_channels, "");
      break;
    case PrimitiveKind::kBatchNorm:
      if (in_channels != out_channels) throw ConfigError("batch_norm cannot change channels");
      add_bn(b, c, "");
      break;
    case PrimitiveKind::kLinearClassifier:
      b.params.emplace_back("weight", Shape{out_channels, in_channels, 1, 1});
      b.params.emplace_back("bias", Shape{1, out_channels, 1, 1});
      break;
    case PrimitiveKind::kStemConv3x3:
      b.params.emplace_back("w", Shape{out_channels, in_channels, 3, 3});
      break;
  }
  reinitialize(b, rng);
  return b;
}

void reinitialize(PrimitiveBlock& b, std::mt19937_64& rng) {
  for (Param& p : b.params) {
    if (p.name.starts_with("gamma")) {
      p.value.fill(1.0);
    } else if (p.name.starts_with("beta")) {
      p.value.fill(0.0);
    } else if (b.kind == PrimitiveKind::kLinearClassifier) {
      init_uniform(p, 1.0 / std::sqrt(static_cast<double>(b.in_channels)), rng);
    } else {
      init_uniform(p, he_bound(p.value.shape), rng);
    }
    p.zero_grad();
  }
  for (BatchNormStats& s : b.bn) s.reset();
}

Var apply_primitive(Tape& tape, Var x, PrimitiveBlock& b) {
  const Shape in = tape.value(x).shape;
  require_channels(b, in);
  const int k = kernel_size(b.kind);
  switch (b.kind) {
    case PrimitiveKind::kIdentity:
      return x;
    case PrimitiveKind::kMaxPool3x3:
      return ops::max_pool3x3(tape, x);
    case PrimitiveKind::kAvgPool3x3:
      return ops::avg_pool3x3(tape, x);
    case PrimitiveKind::kSepConv3x3:
    case PrimitiveKind::kSepConv5x5: {
      Var h = x;
      for (std::size_t stage = 0; stage < 2; ++stage) {
        const std::size_t base = stage * 4;
        h = ops::relu(tape, h);
        h = ops::conv2d(tape, h, tape.param(b.params[base]),
                        {.stride = 1, .pad = k / 2, .dilation = 1, .groups = in.c});
        h = ops::conv2d(tape, h, tape.param(b.params[base + 1]), {});
        h = bn_apply(tape, h, b, base + 2, stage);
      }
      return h;
    }
    case PrimitiveKind::kDilConv3x3:
    case PrimitiveKind::kDilConv5x5: {
      Var h = ops::relu(tape, x);
      h = ops::conv2d(tape, h, tape.param(b.params[0]),
                      {.stride = 1, .pad = k - 1, .dilation = 2, .groups = in.c});
      h = ops::conv2d(tape, h, tape.param(b.params[1]), {});
      return bn_apply(tape, h, b, 2, 0);
    }
    case PrimitiveKind::kConv1x1: {
      Var h = ops::conv2d(tape, x, tape.param(b.params[0]), {});
      return bn_apply(tape, h, b, 1, 0);
    }
    case PrimitiveKind::kFactorizedReduce: {
      if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw StructuralError("factorized_reduce needs even spatial extent, got " + in.str());
      }
      Var h = ops::relu(tape, x);
      Var a = ops::conv2d(tape, h, tape.param(b.params[0]), {.stride = 2});
      std::size_t next = 1;
      if (fr_channels_b(b.out_channels) > 0) {
        Var c = ops::conv2d(tape, h, tape.param(b.params[1]), {.stride = 2, .offset = 1});
        a = ops::concat_channels(tape, a, c);
        next = 2;
      }
      return bn_apply(tape, a, b, next, 0);
    }
    case PrimitiveKind::kBatchNorm:
      return bn_apply(tape, x, b, 0, 0);
    case PrimitiveKind::kReLU:
      return ops::relu(tape, x);
    case PrimitiveKind::kGlobalAvgPool:
      return ops::global_avg_pool(tape, x);
    case PrimitiveKind::kLinearClassifier:
      return ops::linear(tape, x, tape.param(b.params[0]), tape.param(b.params[1]));
    case PrimitiveKind::kStemConv3x3:
      return ops::conv2d(tape, x, tape.param(b.params[0]), {.stride = 1, .pad = 1});
  }
  throw StructuralError("unknown primitive kind");
}

std::size_t parameter_count(const PrimitiveBlock& b) {
  std::size_t n = 0;
  for (const Param& p : b.params) n += p.size();
  return n;
}

std::size_t buffer_count(const PrimitiveBlock& b) {
  std::size_t n = 0;
  for (const BatchNormStats& s : b.bn) n += s.mean.size() + s.var.size();
  return n;
}

Shape output_shape(const PrimitiveBlock& b, Shape in) {
  switch (b.kind) {
    case PrimitiveKind::kFactorizedReduce:
      return Shape{in.n, b.out_channels, in.h / 2, in.w / 2};
    case PrimitiveKind::kGlobalAvgPool:
      return Shape{in.n, in.c, 1, 1};
    case PrimitiveKind::kLinearClassifier:
      return Shape{in.n, b.out_channels, 1, 1};
    default:
      return Shape{in.n, b.out_channels, in.h, in.w};
  }
}

std::size_t activation_elements(const PrimitiveBlock& b, Shape in) {
  in.n = 1;
  const std::size_t same = static_cast<std::size_t>(b.out_channels) * in.plane();
  switch (b.kind) {
    case PrimitiveKind::kIdentity:
      return 0;
    case PrimitiveKind::kMaxPool3x3:
    case PrimitiveKind::kAvgPool3x3:
    case PrimitiveKind::kBatchNorm:
    case PrimitiveKind::kReLU:
    case PrimitiveKind::kStemConv3x3:
      return same;
    case PrimitiveKind::kSepConv3x3:
    case PrimitiveKind::kSepConv5x5:
      return 8 * same;
    case PrimitiveKind::kDilConv3x3:
    case PrimitiveKind::kDilConv5x5:
      return 4 * same;
    case PrimitiveKind::kConv1x1:
      return 2 * same;
    case PrimitiveKind::kFactorizedReduce: {
      const std::size_t half_plane = static_cast<std::size_t>(in.h / 2) * (in.w / 2);
      // relu at input resolution, the strided path(s), concat when split, BatchNorm.
      const std::size_t reduced = static_cast<std::size_t>(b.out_channels) * half_plane;
      const std::size_t split = fr_channels_b(b.out_channels) > 0 ? 2 : 0;
      return static_cast<std::size_t>(in.c) * in.plane() + (2 + split) * reduced;
    }
    case PrimitiveKind::kGlobalAvgPool:
      return static_cast<std::size_t>(in.c);
    case PrimitiveKind::kLinearClassifier:
      return static_cast<std::size_t>(b.out_channels);
  }
  return 0;
}

}  // namespace spidernet
