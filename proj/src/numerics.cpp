#include "gate/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gate {

Array Array::scalar(double v) {
  Array a(1, 1);
  a.data[0] = v;
  return a;
}

Array Array::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  Array a(rows.size(), rows.begin()->size());
  size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != a.cols) throw NumericError("ragged row list");
    size_t j = 0;
    for (double v : row) a.at(i, j++) = v;
    ++i;
  }
  return a;
}

std::string Array::shape_string() const {
  std::ostringstream out;
  out << rows << "x" << cols;
  return out.str();
}

bool all_finite(const Array& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

// out += a * b
void add_matmul(const Array& a, const Array& b, Array& out) {
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (size_t k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a * b^T
void add_matmul_nt(const Array& a, const Array& b, Array& out) {
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double sum = 0.0;
      for (size_t k = 0; k < a.cols; ++k) sum += arow[k] * brow[k];
      orow[j] += sum;
    }
  }
}

// out += a^T * b
void add_matmul_tn(const Array& a, const Array& b, Array& out) {
  for (size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (size_t i = 0; i < a.cols; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.data.data() + i * out.cols;
      for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var Tape::push(Array value, std::function<void(Tape&)> back, const char* op) {
  if (!all_finite(value))
    throw NumericError(std::string("non-finite value produced by ") + op);
  nodes_.push_back(Node{std::move(value), std::move(back)});
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Array value) { return push(std::move(value), {}, "leaf"); }

const Array& Tape::grad(Var v) const {
  if (!ran_backward_) throw Error("gradients requested before backward pass");
  return grads_.at(v.id);
}

Var Tape::matmul(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  if (av.cols != bv.rows)
    throw NumericError("matmul shape mismatch: " + av.shape_string() + " * " +
                       bv.shape_string());
  Array out(av.rows, bv.cols);
  add_matmul(av, bv, out);
  return push(std::move(out),
              [a, b, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                add_matmul_nt(g, t.nodes_[b.id].value, t.grads_[a.id]);
                add_matmul_tn(t.nodes_[a.id].value, g, t.grads_[b.id]);
              },
              "matmul");
}

Var Tape::add(Var a, Var b) {
  const Array& av = value(a);
  const Array& bv = value(b);
  if (!av.same_shape(bv))
    throw NumericError("add shape mismatch: " + av.shape_string() + " vs " +
                       bv.shape_string());
  Array out = av;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return push(std::move(out),
              [a, b, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& ga = t.grads_[a.id];
                Array& gb = t.grads_[b.id];
                for (size_t i = 0; i < g.size(); ++i) {
                  ga.data[i] += g.data[i];
                  gb.data[i] += g.data[i];
                }
              },
              "add");
}

Var Tape::scale(Var a, double factor) {
  Array out = value(a);
  for (double& v : out.data) v *= factor;
  return push(std::move(out),
              [a, factor, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& ga = t.grads_[a.id];
                for (size_t i = 0; i < g.size(); ++i)
                  ga.data[i] += factor * g.data[i];
              },
              "scale");
}

Var Tape::transpose(Var a) {
  const Array& av = value(a);
  Array out(av.cols, av.rows);
  for (size_t i = 0; i < av.rows; ++i)
    for (size_t j = 0; j < av.cols; ++j) out.at(j, i) = av.at(i, j);
  return push(std::move(out),
              [a, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& ga = t.grads_[a.id];
                for (size_t i = 0; i < g.rows; ++i)
                  for (size_t j = 0; j < g.cols; ++j)
                    ga.at(j, i) += g.at(i, j);
              },
              "transpose");
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw NumericError("concat of zero parts");
  if (axis != 0 && axis != 1) throw NumericError("concat axis must be 0 or 1");
  size_t rows = value(parts[0]).rows;
  size_t cols = value(parts[0]).cols;
  for (size_t p = 1; p < parts.size(); ++p) {
    const Array& v = value(parts[p]);
    if (axis == 0) {
      if (v.cols != cols) throw NumericError("concat column mismatch");
      rows += v.rows;
    } else {
      if (v.rows != rows) throw NumericError("concat row mismatch");
      cols += v.cols;
    }
  }
  Array out(rows, cols);
  size_t offset = 0;
  for (Var p : parts) {
    const Array& v = value(p);
    if (axis == 0) {
      std::copy(v.data.begin(), v.data.end(),
                out.data.begin() + offset * out.cols);
      offset += v.rows;
    } else {
      for (size_t i = 0; i < v.rows; ++i)
        std::copy(v.data.begin() + i * v.cols,
                  v.data.begin() + (i + 1) * v.cols,
                  out.data.begin() + i * out.cols + offset);
      offset += v.cols;
    }
  }
  return push(std::move(out),
              [parts, axis, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                size_t offset = 0;
                for (Var p : parts) {
                  Array& gp = t.grads_[p.id];
                  if (axis == 0) {
                    for (size_t i = 0; i < gp.size(); ++i)
                      gp.data[i] += g.data[offset * g.cols + i];
                    offset += gp.rows;
                  } else {
                    for (size_t i = 0; i < gp.rows; ++i)
                      for (size_t j = 0; j < gp.cols; ++j)
                        gp.at(i, j) += g.at(i, offset + j);
                    offset += gp.cols;
                  }
                }
              },
              "concat");
}

Var Tape::add_rowvec(Var m, Var row) {
  const Array& mv = value(m);
  const Array& rv = value(row);
  if (rv.rows != 1 || rv.cols != mv.cols)
    throw NumericError("add_rowvec shape mismatch: " + mv.shape_string() +
                       " + " + rv.shape_string());
  Array out = mv;
  for (size_t i = 0; i < mv.rows; ++i)
    for (size_t j = 0; j < mv.cols; ++j) out.at(i, j) += rv.data[j];
  return push(std::move(out),
              [m, row, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& gm = t.grads_[m.id];
                Array& gr = t.grads_[row.id];
                for (size_t i = 0; i < g.rows; ++i)
                  for (size_t j = 0; j < g.cols; ++j) {
                    gm.at(i, j) += g.at(i, j);
                    gr.data[j] += g.at(i, j);
                  }
              },
              "add_rowvec");
}

Var Tape::gather_rows(Var table, std::vector<size_t> indices) {
  const Array& tv = value(table);
  Array out(indices.size(), tv.cols);
  for (size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= tv.rows)
      throw NumericError("gather_rows index out of range");
    std::copy(tv.data.begin() + indices[k] * tv.cols,
              tv.data.begin() + (indices[k] + 1) * tv.cols,
              out.data.begin() + k * out.cols);
  }
  return push(std::move(out),
              [table, idx = std::move(indices), self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& gt = t.grads_[table.id];
                for (size_t k = 0; k < idx.size(); ++k)
                  for (size_t j = 0; j < g.cols; ++j)
                    gt.at(idx[k], j) += g.at(k, j);
              },
              "gather_rows");
}

Var Tape::slice_rows(Var a, size_t begin, size_t end) {
  const Array& av = value(a);
  if (begin >= end || end > av.rows)
    throw NumericError("slice_rows range [" + std::to_string(begin) + ", " +
                       std::to_string(end) + ") out of bounds for " +
                       av.shape_string());
  Array out(end - begin, av.cols);
  std::copy(av.data.begin() + begin * av.cols, av.data.begin() + end * av.cols,
            out.data.begin());
  return push(std::move(out),
              [a, begin, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& ga = t.grads_[a.id];
                for (size_t i = 0; i < g.size(); ++i)
                  ga.data[begin * ga.cols + i] += g.data[i];
              },
              "slice_rows");
}

Var Tape::relu(Var a) {
  Array out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(out),
              [a, self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                const Array& x = t.nodes_[a.id].value;
                Array& ga = t.grads_[a.id];
                for (size_t i = 0; i < g.size(); ++i)
                  if (x.data[i] > 0.0) ga.data[i] += g.data[i];
              },
              "relu");
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Array& xv = value(x);
  const Array& gv = value(gain);
  const Array& bv = value(bias);
  if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
    throw NumericError("layer_norm gain/bias must be 1 x " +
                       std::to_string(xv.cols));
  const size_t d = xv.cols;
  Array out(xv.rows, d);
  for (size_t i = 0; i < xv.rows; ++i) {
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) {
      double c = xv.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j)
      out.at(i, j) = (xv.at(i, j) - mean) * inv * gv.data[j] + bv.data[j];
  }
  return push(
      std::move(out),
      [x, gain, bias, eps, self = nodes_.size()](Tape& t) {
        const Array& g = t.grads_[self];
        const Array& xv = t.nodes_[x.id].value;
        const Array& gv = t.nodes_[gain.id].value;
        Array& gx = t.grads_[x.id];
        Array& ggain = t.grads_[gain.id];
        Array& gbias = t.grads_[bias.id];
        const size_t d = xv.cols;
        std::vector<double> xhat(d), u(d);
        for (size_t i = 0; i < xv.rows; ++i) {
          double mean = 0.0;
          for (size_t j = 0; j < d; ++j) mean += xv.at(i, j);
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (size_t j = 0; j < d; ++j) {
            double c = xv.at(i, j) - mean;
            var += c * c;
          }
          var /= static_cast<double>(d);
          double inv = 1.0 / std::sqrt(var + eps);
          double mean_u = 0.0, mean_ux = 0.0;
          for (size_t j = 0; j < d; ++j) {
            xhat[j] = (xv.at(i, j) - mean) * inv;
            u[j] = g.at(i, j) * gv.data[j];
            mean_u += u[j];
            mean_ux += u[j] * xhat[j];
          }
          mean_u /= static_cast<double>(d);
          mean_ux /= static_cast<double>(d);
          for (size_t j = 0; j < d; ++j) {
            gx.at(i, j) += inv * (u[j] - mean_u - xhat[j] * mean_ux);
            ggain.data[j] += g.at(i, j) * xhat[j];
            gbias.data[j] += g.at(i, j);
          }
        }
      },
      "layer_norm");
}

Var Tape::dropout(Var x, double rate, std::mt19937_64& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0)
    throw NumericError("dropout rate must be in [0, 1), got " +
                       std::to_string(rate));
  if (!train || rate == 0.0) return x;
  const Array& xv = value(x);
  std::vector<uint8_t> keep(xv.size());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double inv_keep = 1.0 / (1.0 - rate);
  Array out = xv;
  for (size_t i = 0; i < xv.size(); ++i) {
    keep[i] = uniform(rng) >= rate ? 1 : 0;
    out.data[i] = keep[i] ? xv.data[i] * inv_keep : 0.0;
  }
  return push(std::move(out),
              [x, keep = std::move(keep), inv_keep,
               self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& gx = t.grads_[x.id];
                for (size_t i = 0; i < g.size(); ++i)
                  if (keep[i]) gx.data[i] += g.data[i] * inv_keep;
              },
              "dropout");
}

Var Tape::masked_softmax(Var scores, const AttentionMask& mask) {
  const Array& sv = value(scores);
  if (sv.rows != mask.n || sv.cols != mask.n)
    throw NumericError("masked_softmax expects " + std::to_string(mask.n) +
                       "x" + std::to_string(mask.n) + " scores, got " +
                       sv.shape_string());
  Array out(sv.rows, sv.cols);
  for (size_t i = 0; i < sv.rows; ++i) {
    double max = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < sv.cols; ++j)
      if (mask.allowed(i, j)) max = std::max(max, sv.at(i, j));
    if (!std::isfinite(max))
      throw NumericError("masked_softmax row " + std::to_string(i) +
                         " has no allowed entries");
    double total = 0.0;
    for (size_t j = 0; j < sv.cols; ++j) {
      if (mask.allowed(i, j)) {
        out.at(i, j) = std::exp(sv.at(i, j) - max);
        total += out.at(i, j);
      }
    }
    for (size_t j = 0; j < sv.cols; ++j)
      if (mask.allowed(i, j)) out.at(i, j) /= total;
  }
  return push(std::move(out),
              [scores, allow = mask.allow, n = mask.n,
               self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                const Array& p = t.nodes_[self].value;
                Array& gs = t.grads_[scores.id];
                for (size_t i = 0; i < n; ++i) {
                  double dot = 0.0;
                  for (size_t j = 0; j < n; ++j)
                    if (allow[i * n + j]) dot += g.at(i, j) * p.at(i, j);
                  for (size_t j = 0; j < n; ++j)
                    if (allow[i * n + j])
                      gs.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
                }
              },
              "masked_softmax");
}

Var Tape::distance_renorm(Var p, const DistanceMatrix& dist,
                          const AttentionMask& mask) {
  const Array& pv = value(p);
  if (pv.rows != dist.n || pv.cols != dist.n || mask.n != dist.n)
    throw NumericError("distance_renorm shape mismatch");
  const size_t n = dist.n;
  Array out(n, n);
  std::vector<double> z(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j)
      if (mask.allowed(i, j))
        z[i] += pv.at(i, j) / static_cast<double>(dist.at(i, j));
    if (!(z[i] > 0.0))
      throw NumericError("distance renormalization factor vanished in row " +
                         std::to_string(i));
    for (size_t j = 0; j < n; ++j)
      if (mask.allowed(i, j))
        out.at(i, j) =
            pv.at(i, j) / (static_cast<double>(dist.at(i, j)) * z[i]);
  }
  return push(std::move(out),
              [p, d = dist.d, allow = mask.allow, z = std::move(z), n,
               self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                const Array& f = t.nodes_[self].value;
                Array& gp = t.grads_[p.id];
                for (size_t i = 0; i < n; ++i) {
                  double dot = 0.0;
                  for (size_t j = 0; j < n; ++j)
                    if (allow[i * n + j]) dot += g.at(i, j) * f.at(i, j);
                  for (size_t k = 0; k < n; ++k)
                    if (allow[i * n + k])
                      gp.at(i, k) += (g.at(i, k) - dot) /
                                     (static_cast<double>(d[i * n + k]) * z[i]);
                }
              },
              "distance_renorm");
}

Var Tape::max_pool_rows(Var x) {
  const Array& xv = value(x);
  if (xv.rows == 0) throw NumericError("max_pool_rows over zero rows");
  Array out(1, xv.cols);
  std::vector<size_t> argmax(xv.cols, 0);
  for (size_t j = 0; j < xv.cols; ++j) {
    double best = xv.at(0, j);
    for (size_t i = 1; i < xv.rows; ++i) {
      if (xv.at(i, j) > best) {  // first row wins ties
        best = xv.at(i, j);
        argmax[j] = i;
      }
    }
    out.at(0, j) = best;
  }
  return push(std::move(out),
              [x, argmax = std::move(argmax), self = nodes_.size()](Tape& t) {
                const Array& g = t.grads_[self];
                Array& gx = t.grads_[x.id];
                for (size_t j = 0; j < g.cols; ++j)
                  gx.at(argmax[j], j) += g.at(0, j);
              },
              "max_pool_rows");
}

Var Tape::cross_entropy(Var logits, size_t target) {
  const Array& lv = value(logits);
  const size_t c = lv.size();
  if (target >= c)
    throw NumericError("cross_entropy target " + std::to_string(target) +
                       " out of range for " + std::to_string(c) + " classes");
  double max = *std::max_element(lv.data.begin(), lv.data.end());
  double total = 0.0;
  for (double v : lv.data) total += std::exp(v - max);
  double loss = max + std::log(total) - lv.data[target];
  return push(Array::scalar(loss),
              [logits, target, self = nodes_.size()](Tape& t) {
                const double g = t.grads_[self].data[0];
                const Array& lv = t.nodes_[logits.id].value;
                Array& gl = t.grads_[logits.id];
                double max = *std::max_element(lv.data.begin(), lv.data.end());
                double total = 0.0;
                for (double v : lv.data) total += std::exp(v - max);
                for (size_t j = 0; j < lv.size(); ++j) {
                  double p = std::exp(lv.data[j] - max) / total;
                  gl.data[j] += g * (p - (j == target ? 1.0 : 0.0));
                }
              },
              "cross_entropy");
}

Var Tape::weighted_sum(Var x, Array weights) {
  const Array& xv = value(x);
  if (!xv.same_shape(weights))
    throw NumericError("weighted_sum shape mismatch");
  double total = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) total += xv.data[i] * weights.data[i];
  return push(Array::scalar(total),
              [x, w = std::move(weights), self = nodes_.size()](Tape& t) {
                const double g = t.grads_[self].data[0];
                Array& gx = t.grads_[x.id];
                for (size_t i = 0; i < gx.size(); ++i)
                  gx.data[i] += g * w.data[i];
              },
              "weighted_sum");
}

void Tape::backward(Var loss) {
  const Array& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1)
    throw NumericError("backward requires a 1x1 scalar loss, got " +
                       lv.shape_string());
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& node : nodes_)
    grads_.emplace_back(node.value.rows, node.value.cols);
  grads_[loss.id].data[0] = 1.0;
  ran_backward_ = true;
  for (size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back(*this);
}

Array softmax_row(const Array& logits) {
  Array out(1, logits.size());
  double max = *std::max_element(logits.data.begin(), logits.data.end());
  double total = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) {
    out.data[j] = std::exp(logits.data[j] - max);
    total += out.data[j];
  }
  for (double& v : out.data) v /= total;
  return out;
}

double finite_diff_check(const std::function<double()>& loss,
                         const std::vector<Array*>& params,
                         const std::vector<Array>& analytic, double eps) {
  if (params.size() != analytic.size())
    throw Error("finite_diff_check: gradient count mismatch");
  double max_rel = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Array& param = *params[p];
    if (!param.same_shape(analytic[p]))
      throw Error("finite_diff_check: gradient shape mismatch");
    for (size_t i = 0; i < param.size(); ++i) {
      const double orig = param.data[i];
      param.data[i] = orig + eps;
      const double up = loss();
      param.data[i] = orig - eps;
      const double down = loss();
      param.data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].data[i];
      const double rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace gate
