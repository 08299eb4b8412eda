#include "secad/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace secad {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskValue = -1e30;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

// y = gamma .* xhat + beta, row-wise stats
void layernorm_forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                       const Eigen::MatrixXd& beta, Eigen::MatrixXd& y,
                       Eigen::MatrixXd& xhat, Eigen::VectorXd& rstd) {
  const Eigen::Index t = x.rows(), d = x.cols();
  y.resize(t, d);
  xhat.resize(t, d);
  rstd.resize(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mu = x.row(i).mean();
    const Eigen::RowVectorXd centered = x.row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = centered * rstd(i);
    y.row(i) =
        (xhat.row(i).array() * gamma.row(0).array() + beta.row(0).array());
  }
}

void layernorm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& xhat,
                        const Eigen::VectorXd& rstd,
                        const Eigen::MatrixXd& gamma, Eigen::MatrixXd& dgamma,
                        Eigen::MatrixXd& dbeta, Eigen::MatrixXd& dx) {
  const Eigen::Index t = dy.rows(), d = dy.cols();
  dx.resize(t, d);
  dgamma.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  for (Eigen::Index i = 0; i < t; ++i) {
    const Eigen::ArrayXd dxhat =
        dy.row(i).array().transpose() * gamma.row(0).array().transpose();
    const Eigen::ArrayXd xh = xhat.row(i).array().transpose();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xh).mean();
    dx.row(i) = ((dxhat - m1 - xh * m2) * rstd(i)).matrix().transpose();
  }
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::RowVectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& in, size_t& at) {
  if (at + 4 > in.size())
    throw std::invalid_argument("checkpoint: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at++]) << (8 * i);
  return v;
}

}  // namespace

Decoder::Decoder(const DecoderConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config_.dim % config_.heads != 0)
    throw std::invalid_argument("Decoder: dim must divide by heads");
  Rng rng(seed);
  const int d = config_.dim;
  const double init = 0.02;
  const double resid = init / std::sqrt(2.0 * config_.layers);

  auto add = [&](const std::string& name, int rows, int cols, double scale) {
    Param p;
    p.name = name;
    p.value.resize(rows, cols);
    if (scale == 0.0) {
      p.value.setZero();
    } else {
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = rng.gaussian() * scale;
    }
    p.grad = Eigen::MatrixXd::Zero(rows, cols);
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  };
  auto add_ones = [&](const std::string& name, int cols) {
    Param p;
    p.name = name;
    p.value = Eigen::MatrixXd::Ones(1, cols);
    p.grad = Eigen::MatrixXd::Zero(1, cols);
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  };

  idx_.embed = add("embed", config_.vocab, d, init);
  idx_.pos = add("pos", config_.max_seq, d, init);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string base = "layer" + std::to_string(l) + ".";
    idx_.layer_base.push_back(static_cast<int>(params_.size()));
    add_ones(base + "ln1.g", d);
    add(base + "ln1.b", 1, d, 0.0);
    add(base + "attn.wq", d, d, init);
    add(base + "attn.bq", 1, d, 0.0);
    add(base + "attn.wk", d, d, init);
    add(base + "attn.bk", 1, d, 0.0);
    add(base + "attn.wv", d, d, init);
    add(base + "attn.bv", 1, d, 0.0);
    add(base + "attn.wo", d, d, resid);
    add(base + "attn.bo", 1, d, 0.0);
    add_ones(base + "ln2.g", d);
    add(base + "ln2.b", 1, d, 0.0);
    add(base + "mlp.w1", d, 4 * d, init);
    add(base + "mlp.b1", 1, 4 * d, 0.0);
    add(base + "mlp.w2", 4 * d, d, resid);
    add(base + "mlp.b2", 1, d, 0.0);
  }
  idx_.lnf_g = add_ones("lnf.g", d);
  idx_.lnf_b = add("lnf.b", 1, d, 0.0);
  idx_.lm_w = add("lm.w", d, config_.vocab, init);
  idx_.lm_b = add("lm.b", 1, config_.vocab, 0.0);
}

std::int64_t Decoder::parameter_count() const {
  std::int64_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

void Decoder::zero_grad() {
  for (Param& p : params_) p.grad.setZero();
}

Eigen::MatrixXd Decoder::forward(const std::vector<int>& ids,
                                 Tape* tape) const {
  const int t = static_cast<int>(ids.size());
  if (t == 0) throw std::invalid_argument("Decoder::forward: empty sequence");
  if (t > config_.max_seq)
    throw ContextOverflow("sequence of " + std::to_string(t) +
                          " tokens exceeds context " +
                          std::to_string(config_.max_seq));
  const int d = config_.dim;
  const int h = config_.heads;
  const int dh = d / h;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Eigen::MatrixXd x(t, d);
  for (int i = 0; i < t; ++i) {
    if (ids[static_cast<size_t>(i)] < 0 ||
        ids[static_cast<size_t>(i)] >= config_.vocab)
      throw std::invalid_argument("Decoder::forward: id out of vocabulary");
    x.row(i) = p(idx_.embed).row(ids[static_cast<size_t>(i)]) +
               p(idx_.pos).row(i);
  }

  if (tape) {
    tape->ids = ids;
    tape->layers.assign(static_cast<size_t>(config_.layers), {});
  }

  for (int l = 0; l < config_.layers; ++l) {
    const int b = idx_.layer_base[static_cast<size_t>(l)];
    Tape::LayerTape* lt = tape ? &tape->layers[static_cast<size_t>(l)] : nullptr;
    if (lt) lt->x_in = x;

    Eigen::MatrixXd u, xhat1;
    Eigen::VectorXd rstd1;
    layernorm_forward(x, p(b + 0), p(b + 1), u, xhat1, rstd1);

    Eigen::MatrixXd q = (u * p(b + 2)).rowwise() + p(b + 3).row(0);
    Eigen::MatrixXd k = (u * p(b + 4)).rowwise() + p(b + 5).row(0);
    Eigen::MatrixXd v = (u * p(b + 6)).rowwise() + p(b + 7).row(0);

    Eigen::MatrixXd concat(t, d);
    std::vector<Eigen::MatrixXd> probs;
    if (lt) probs.reserve(static_cast<size_t>(h));
    for (int head = 0; head < h; ++head) {
      const auto qh = q.middleCols(head * dh, dh);
      const auto kh = k.middleCols(head * dh, dh);
      const auto vh = v.middleCols(head * dh, dh);
      Eigen::MatrixXd s = qh * kh.transpose() * inv_sqrt_dh;
      for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) s(i, j) = kMaskValue;
      Eigen::MatrixXd pr(t, t);
      for (int i = 0; i < t; ++i) pr.row(i) = softmax_row(s.row(i));
      concat.middleCols(head * dh, dh) = pr * vh;
      if (lt) probs.push_back(std::move(pr));
    }
    if (lt) {
      lt->xhat1 = std::move(xhat1);
      lt->rstd1 = std::move(rstd1);
      lt->q = std::move(q);
      lt->k = std::move(k);
      lt->v = std::move(v);
      lt->p = std::move(probs);
      lt->attn_concat = concat;
    }

    x += (concat * p(b + 8)).rowwise() + p(b + 9).row(0);
    if (lt) lt->x_mid = x;

    Eigen::MatrixXd u2, xhat2;
    Eigen::VectorXd rstd2;
    layernorm_forward(x, p(b + 10), p(b + 11), u2, xhat2, rstd2);
    Eigen::MatrixXd h1 = (u2 * p(b + 12)).rowwise() + p(b + 13).row(0);
    Eigen::MatrixXd gact = h1.unaryExpr([](double z) { return gelu(z); });
    if (lt) {
      lt->xhat2 = std::move(xhat2);
      lt->rstd2 = std::move(rstd2);
      lt->h1 = h1;
      lt->g = gact;
    }
    x += (gact * p(b + 14)).rowwise() + p(b + 15).row(0);
  }

  if (tape) tape->x_final = x;
  Eigen::MatrixXd xn, xhatf;
  Eigen::VectorXd rstdf;
  layernorm_forward(x, p(idx_.lnf_g), p(idx_.lnf_b), xn, xhatf, rstdf);
  if (tape) {
    tape->xhatf = std::move(xhatf);
    tape->rstdf = std::move(rstdf);
  }
  Eigen::MatrixXd logits = (xn * p(idx_.lm_w)).rowwise() + p(idx_.lm_b).row(0);
  if (tape) tape->logits = logits;
  return logits;
}

void Decoder::backward(const Tape& tape, const Eigen::MatrixXd& dlogits) {
  const int t = static_cast<int>(tape.ids.size());
  const int d = config_.dim;
  const int h = config_.heads;
  const int dh = d / h;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  // final projection
  Eigen::MatrixXd xn(t, d);
  for (int i = 0; i < t; ++i)
    xn.row(i) = tape.xhatf.row(i).array() * p(idx_.lnf_g).row(0).array() +
                p(idx_.lnf_b).row(0).array();
  g(idx_.lm_w) += xn.transpose() * dlogits;
  g(idx_.lm_b).row(0) += dlogits.colwise().sum();
  Eigen::MatrixXd dxn = dlogits * p(idx_.lm_w).transpose();

  Eigen::MatrixXd dx;
  layernorm_backward(dxn, tape.xhatf, tape.rstdf, p(idx_.lnf_g), g(idx_.lnf_g),
                     g(idx_.lnf_b), dx);

  for (int l = config_.layers - 1; l >= 0; --l) {
    const int b = idx_.layer_base[static_cast<size_t>(l)];
    const Tape::LayerTape& lt = tape.layers[static_cast<size_t>(l)];

    // MLP branch
    Eigen::MatrixXd u2(t, d);
    for (int i = 0; i < t; ++i)
      u2.row(i) = lt.xhat2.row(i).array() * p(b + 10).row(0).array() +
                  p(b + 11).row(0).array();
    Eigen::MatrixXd dg = dx * p(b + 14).transpose();
    g(b + 14) += lt.g.transpose() * dx;
    g(b + 15).row(0) += dx.colwise().sum();
    Eigen::MatrixXd dh1 =
        dg.array() * lt.h1.unaryExpr([](double z) { return gelu_grad(z); }).array();
    g(b + 12) += u2.transpose() * dh1;
    g(b + 13).row(0) += dh1.colwise().sum();
    Eigen::MatrixXd du2 = dh1 * p(b + 12).transpose();
    Eigen::MatrixXd dx_mid_ln;
    layernorm_backward(du2, lt.xhat2, lt.rstd2, p(b + 10), g(b + 10), g(b + 11),
                       dx_mid_ln);
    Eigen::MatrixXd dx_mid = dx + dx_mid_ln;

    // attention branch
    Eigen::MatrixXd dattn_out = dx_mid;  // gradient of concat*Wo + bo
    g(b + 8) += lt.attn_concat.transpose() * dattn_out;
    g(b + 9).row(0) += dattn_out.colwise().sum();
    Eigen::MatrixXd dconcat = dattn_out * p(b + 8).transpose();

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(t, d);
    Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(t, d);
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(t, d);
    for (int head = 0; head < h; ++head) {
      const auto qh = lt.q.middleCols(head * dh, dh);
      const auto kh = lt.k.middleCols(head * dh, dh);
      const auto vh = lt.v.middleCols(head * dh, dh);
      const Eigen::MatrixXd& pr = lt.p[static_cast<size_t>(head)];
      const auto dah = dconcat.middleCols(head * dh, dh);

      Eigen::MatrixXd dpr = dah * vh.transpose();
      dv.middleCols(head * dh, dh) += pr.transpose() * dah;
      // softmax backward, row-wise
      Eigen::MatrixXd ds(t, t);
      for (int i = 0; i < t; ++i) {
        const double dot = dpr.row(i).cwiseProduct(pr.row(i)).sum();
        ds.row(i) = (dpr.row(i).array() - dot) * pr.row(i).array();
      }
      dq.middleCols(head * dh, dh) += ds * kh * inv_sqrt_dh;
      dk.middleCols(head * dh, dh) += ds.transpose() * qh * inv_sqrt_dh;
    }

    Eigen::MatrixXd u(t, d);
    for (int i = 0; i < t; ++i)
      u.row(i) = lt.xhat1.row(i).array() * p(b + 0).row(0).array() +
                 p(b + 1).row(0).array();
    g(b + 2) += u.transpose() * dq;
    g(b + 3).row(0) += dq.colwise().sum();
    g(b + 4) += u.transpose() * dk;
    g(b + 5).row(0) += dk.colwise().sum();
    g(b + 6) += u.transpose() * dv;
    g(b + 7).row(0) += dv.colwise().sum();
    Eigen::MatrixXd du =
        dq * p(b + 2).transpose() + dk * p(b + 4).transpose() +
        dv * p(b + 6).transpose();
    Eigen::MatrixXd dx_in_ln;
    layernorm_backward(du, lt.xhat1, lt.rstd1, p(b + 0), g(b + 0), g(b + 1),
                       dx_in_ln);
    dx = dx_mid + dx_in_ln;
  }

  for (int i = 0; i < t; ++i) {
    g(idx_.embed).row(tape.ids[static_cast<size_t>(i)]) += dx.row(i);
    g(idx_.pos).row(i) += dx.row(i);
  }
}

Eigen::VectorXd Decoder::step(KvCache& cache, int id) const {
  const int d = config_.dim;
  const int h = config_.heads;
  const int dh = d / h;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const int t = cache.length;
  if (t >= config_.max_seq)
    throw ContextOverflow("KV cache full at " + std::to_string(t));
  if (cache.k.empty()) {
    cache.k.assign(static_cast<size_t>(config_.layers),
                   Eigen::MatrixXd(config_.max_seq, d));
    cache.v.assign(static_cast<size_t>(config_.layers),
                   Eigen::MatrixXd(config_.max_seq, d));
  }

  Eigen::MatrixXd x = p(idx_.embed).row(id) + p(idx_.pos).row(t);
  for (int l = 0; l < config_.layers; ++l) {
    const int b = idx_.layer_base[static_cast<size_t>(l)];
    Eigen::MatrixXd u, xhat;
    Eigen::VectorXd rstd;
    layernorm_forward(x, p(b + 0), p(b + 1), u, xhat, rstd);
    Eigen::RowVectorXd q = u.row(0) * p(b + 2) + p(b + 3).row(0);
    cache.k[static_cast<size_t>(l)].row(t) = u.row(0) * p(b + 4) + p(b + 5).row(0);
    cache.v[static_cast<size_t>(l)].row(t) = u.row(0) * p(b + 6) + p(b + 7).row(0);

    Eigen::RowVectorXd concat(d);
    for (int head = 0; head < h; ++head) {
      const auto kh = cache.k[static_cast<size_t>(l)].topRows(t + 1).middleCols(
          head * dh, dh);
      const auto vh = cache.v[static_cast<size_t>(l)].topRows(t + 1).middleCols(
          head * dh, dh);
      const Eigen::RowVectorXd s =
          q.middleCols(head * dh, dh) * kh.transpose() * inv_sqrt_dh;
      concat.middleCols(head * dh, dh) = softmax_row(s) * vh;
    }
    x.row(0) += concat * p(b + 8) + p(b + 9).row(0);

    Eigen::MatrixXd u2, xhat2;
    Eigen::VectorXd rstd2;
    layernorm_forward(x, p(b + 10), p(b + 11), u2, xhat2, rstd2);
    Eigen::RowVectorXd h1 = u2.row(0) * p(b + 12) + p(b + 13).row(0);
    x.row(0) +=
        h1.unaryExpr([](double z) { return gelu(z); }) * p(b + 14) +
        p(b + 15).row(0);
  }
  Eigen::MatrixXd xn, xhatf;
  Eigen::VectorXd rstdf;
  layernorm_forward(x, p(idx_.lnf_g), p(idx_.lnf_b), xn, xhatf, rstdf);
  cache.length = t + 1;
  return (xn.row(0) * p(idx_.lm_w) + p(idx_.lm_b).row(0)).transpose();
}

std::vector<int> Decoder::sample(const std::vector<int>& prompt, int eos_id,
                                 const SampleConfig& config, Rng& rng) const {
  if (prompt.empty())
    throw std::invalid_argument("Decoder::sample: empty prompt");
  std::vector<int> ids = prompt;
  KvCache cache;
  Eigen::VectorXd logits;
  for (int id : prompt) logits = step(cache, id);

  for (int produced = 0; produced < config.max_tokens; ++produced) {
    if (cache.length >= config_.max_seq) break;

    Eigen::VectorXd z = logits;
    int next;
    if (config.temperature <= 1e-12) {
      Eigen::Index arg = 0;
      z.maxCoeff(&arg);
      next = static_cast<int>(arg);
    } else {
      z /= config.temperature;
      std::vector<std::pair<double, int>> order(static_cast<size_t>(z.size()));
      for (Eigen::Index i = 0; i < z.size(); ++i)
        order[static_cast<size_t>(i)] = {z(i), static_cast<int>(i)};
      std::sort(order.begin(), order.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
      size_t keep = order.size();
      if (config.top_k > 0)
        keep = std::min(keep, static_cast<size_t>(config.top_k));
      // softmax over the kept prefix
      std::vector<double> prob(keep);
      const double m = order[0].first;
      double total = 0.0;
      for (size_t i = 0; i < keep; ++i) {
        prob[i] = std::exp(order[i].first - m);
        total += prob[i];
      }
      for (double& q : prob) q /= total;
      if (config.top_p < 1.0) {
        double acc = 0.0;
        size_t cut = keep;
        for (size_t i = 0; i < keep; ++i) {
          acc += prob[i];
          if (acc >= config.top_p) {
            cut = i + 1;
            break;
          }
        }
        keep = cut;
      }
      double norm = 0.0;
      for (size_t i = 0; i < keep; ++i) norm += prob[i];
      double draw = rng.uniform() * norm;
      size_t pick = keep - 1;
      for (size_t i = 0; i < keep; ++i) {
        draw -= prob[i];
        if (draw <= 0.0) {
          pick = i;
          break;
        }
      }
      next = order[pick].second;
    }

    ids.push_back(next);
    if (next == eos_id) break;
    logits = step(cache, next);
  }
  return ids;
}

Decoder snapshot_reference(const Decoder& model) { return model; }

// --- checkpoints -------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const Decoder& model) {
  std::vector<std::uint8_t> out;
  const char magic[8] = {'S', 'E', 'C', 'K', 'P', 'T', '0', '1'};
  out.insert(out.end(), magic, magic + 8);
  const DecoderConfig& c = model.config();
  for (int v : {c.vocab, c.dim, c.layers, c.heads, c.max_seq})
    push_u32(out, static_cast<std::uint32_t>(v));
  push_u32(out, static_cast<std::uint32_t>(model.params().size()));
  for (const Param& p : model.params()) {
    push_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    push_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    push_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.value.data());
    out.insert(out.end(), bytes,
               bytes + sizeof(double) * static_cast<size_t>(p.value.size()));
  }
  return out;
}

Decoder decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  size_t at = 0;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "SECKPT01", 8) != 0)
    throw std::invalid_argument("checkpoint: bad magic");
  at = 8;
  DecoderConfig c;
  c.vocab = static_cast<int>(read_u32(bytes, at));
  c.dim = static_cast<int>(read_u32(bytes, at));
  c.layers = static_cast<int>(read_u32(bytes, at));
  c.heads = static_cast<int>(read_u32(bytes, at));
  c.max_seq = static_cast<int>(read_u32(bytes, at));
  Decoder model(c, 0);
  const std::uint32_t n = read_u32(bytes, at);
  if (n != model.params().size())
    throw std::invalid_argument("checkpoint: parameter count mismatch");
  for (Param& p : model.params()) {
    const std::uint32_t name_len = read_u32(bytes, at);
    if (at + name_len > bytes.size())
      throw std::invalid_argument("checkpoint: truncated");
    const std::string name(bytes.begin() + static_cast<long>(at),
                           bytes.begin() + static_cast<long>(at + name_len));
    at += name_len;
    if (name != p.name)
      throw std::invalid_argument("checkpoint: unexpected tensor " + name);
    const std::uint32_t rows = read_u32(bytes, at);
    const std::uint32_t cols = read_u32(bytes, at);
    if (rows != static_cast<std::uint32_t>(p.value.rows()) ||
        cols != static_cast<std::uint32_t>(p.value.cols()))
      throw std::invalid_argument("checkpoint: shape mismatch for " + name);
    const size_t count = sizeof(double) * static_cast<size_t>(p.value.size());
    if (at + count > bytes.size())
      throw std::invalid_argument("checkpoint: truncated");
    std::memcpy(p.value.data(), bytes.data() + at, count);
    at += count;
  }
  if (at != bytes.size())
    throw std::invalid_argument("checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(const Decoder& model, const std::string& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Decoder load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// --- losses ------------------------------------------------------------------

namespace {

// Positions t in [start-1, T-2] predict ids[t+1].
void check_example(const SupervisedExample& ex) {
  if (ex.target_start < 1 ||
      ex.target_start >= static_cast<int>(ex.ids.size()))
    throw std::invalid_argument("target_start out of range");
}

}  // namespace

double sl_loss(Decoder& model, const std::vector<SupervisedExample>& batch,
               bool with_grad) {
  if (batch.empty()) throw std::invalid_argument("sl_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const SupervisedExample& ex : batch) {
    check_example(ex);
    Tape tape;
    const Eigen::MatrixXd logits =
        model.forward(ex.ids, with_grad ? &tape : nullptr);
    const int t = static_cast<int>(ex.ids.size());
    const int count = t - ex.target_start;
    Eigen::MatrixXd dlogits;
    if (with_grad) dlogits = Eigen::MatrixXd::Zero(t, logits.cols());
    double seq_loss = 0.0;
    for (int pos = ex.target_start - 1; pos < t - 1; ++pos) {
      const int target = ex.ids[static_cast<size_t>(pos) + 1];
      const Eigen::RowVectorXd probs = softmax_row(logits.row(pos));
      seq_loss -= std::log(std::max(probs(target), 1e-300));
      if (with_grad) {
        dlogits.row(pos) = probs * (inv_b / count);
        dlogits(pos, target) -= inv_b / count;
      }
    }
    total += seq_loss / count;
    if (with_grad) model.backward(tape, dlogits);
  }
  return total * inv_b;
}

double sequence_logprob(const Decoder& model, const SupervisedExample& ex,
                        Tape* tape) {
  check_example(ex);
  const Eigen::MatrixXd logits = model.forward(ex.ids, tape);
  const int t = static_cast<int>(ex.ids.size());
  double lp = 0.0;
  for (int pos = ex.target_start - 1; pos < t - 1; ++pos) {
    const int target = ex.ids[static_cast<size_t>(pos) + 1];
    const Eigen::RowVectorXd probs = softmax_row(logits.row(pos));
    lp += std::log(std::max(probs(target), 1e-300));
  }
  return lp;
}

void sequence_logprob_backward(Decoder& model, const Tape& tape,
                               const SupervisedExample& ex, double coef) {
  const int t = static_cast<int>(ex.ids.size());
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(t, tape.logits.cols());
  for (int pos = ex.target_start - 1; pos < t - 1; ++pos) {
    const int target = ex.ids[static_cast<size_t>(pos) + 1];
    const Eigen::RowVectorXd probs = softmax_row(tape.logits.row(pos));
    dlogits.row(pos) = -coef * probs;
    dlogits(pos, target) += coef;
  }
  model.backward(tape, dlogits);
}

double dpo_pair_loss(double delta, double beta) {
  return softplus(-beta * delta);
}

DpoStats dpo_loss(Decoder& policy, const Decoder& reference,
                  const std::vector<PreferenceExample>& batch, double beta,
                  bool with_grad) {
  if (batch.empty()) throw std::invalid_argument("dpo_loss: empty batch");
  if (!(reference.config() == policy.config()))
    throw std::invalid_argument("dpo_loss: reference/policy config mismatch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  DpoStats stats;
  for (const PreferenceExample& pair : batch) {
    Tape tape_w, tape_l;
    const double lp_w =
        sequence_logprob(policy, pair.chosen, with_grad ? &tape_w : nullptr);
    const double lp_l =
        sequence_logprob(policy, pair.rejected, with_grad ? &tape_l : nullptr);
    const double ref_w = sequence_logprob(reference, pair.chosen);
    const double ref_l = sequence_logprob(reference, pair.rejected);
    const double delta = (lp_w - ref_w) - (lp_l - ref_l);
    stats.loss += dpo_pair_loss(delta, beta) * inv_b;
    stats.mean_margin += delta * inv_b;
    if (with_grad) {
      const double dloss_ddelta = beta * (sigmoid(beta * delta) - 1.0);
      sequence_logprob_backward(policy, tape_w, pair.chosen,
                                dloss_ddelta * inv_b);
      sequence_logprob_backward(policy, tape_l, pair.rejected,
                                -dloss_ddelta * inv_b);
    }
  }
  return stats;
}

// --- optimizer ---------------------------------------------------------------

AdamW::AdamW(std::vector<Param>& params, double lr, double beta1, double beta2,
             double eps, double weight_decay)
    : params_(&params),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      wd_(weight_decay) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Param& p : params) {
    m_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step() {
  t_ += 1;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params_->size(); ++i) {
    Param& p = (*params_)[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i].array().matrix() +
            (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const Eigen::ArrayXXd mhat = m_[i].array() / bc1;
    const Eigen::ArrayXXd vhat = v_[i].array() / bc2;
    p.value.array() -=
        lr_ * (mhat / (vhat.sqrt() + eps_) + wd_ * p.value.array());
  }
}

}  // namespace secad
