#include <cmath>
#include <limits>

#include "ensmooth/error.hpp"
#include "ensmooth/neural.hpp"

namespace ensmooth::neural {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

}  // namespace

NetworkSpec NetworkSpec::residual_stack(int input_dim, int output_dim,
                                        const std::vector<int>& widths,
                                        int preserving_per_stage) {
  NetworkSpec s;
  s.input_dim = input_dim;
  s.output_dim = output_dim;
  int current = input_dim;
  for (int w : widths) {
    if (w != current || s.blocks.empty()) s.blocks.push_back({BlockKind::reducing, w});
    for (int k = 0; k < preserving_per_stage; ++k)
      s.blocks.push_back({BlockKind::preserving, w});
    current = w;
  }
  return s;
}

void NetworkSpec::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw InvalidInput("network input/output dims must be positive");
  int current = input_dim;
  for (const BlockSpec& b : blocks) {
    if (b.width < 1) throw InvalidInput("block widths must be positive");
    if (b.kind == BlockKind::preserving && b.width != current)
      throw InvalidInput("a width-preserving block must keep the incoming width");
    current = b.width;
  }
}

Network::DenseRef Network::add_dense(const std::string& name, int in, int out,
                                     bool bias) {
  DenseRef d;
  d.in = in;
  d.out = out;
  std::size_t offset = slots_.empty() ? 0 : slots_.back().offset +
                                                 static_cast<std::size_t>(slots_.back().rows) *
                                                     slots_.back().cols;
  slots_.push_back({name + ".weight", out, in, offset});
  d.w = offset;
  offset += static_cast<std::size_t>(out) * in;
  d.b = kNone;
  if (bias) {
    slots_.push_back({name + ".bias", out, 1, offset});
    d.b = offset;
  }
  return d;
}

Network::NormRef Network::add_norm(const std::string& name, int dim) {
  NormRef n;
  n.dim = dim;
  n.active = spec_.batchnorm;
  if (!n.active) return n;
  const std::size_t offset = slots_.empty() ? 0 : slots_.back().offset +
                                                       static_cast<std::size_t>(slots_.back().rows) *
                                                           slots_.back().cols;
  slots_.push_back({name + ".gamma", dim, 1, offset});
  slots_.push_back({name + ".beta", dim, 1, offset + dim});
  n.gamma = offset;
  n.beta = offset + dim;
  n.running = static_cast<std::size_t>(running_.size());
  running_.conservativeResize(running_.size() + 2 * dim);
  running_.segment(static_cast<Eigen::Index>(n.running), dim).setZero();
  running_.segment(static_cast<Eigen::Index>(n.running) + dim, dim).setOnes();
  return n;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const bool bn = spec_.batchnorm;
  int current = spec_.input_dim;
  for (std::size_t k = 0; k < spec_.blocks.size(); ++k) {
    const BlockSpec& bs = spec_.blocks[k];
    const std::string p = "block" + std::to_string(k);
    Block b{bs.kind, {}, {}, {}, {}, {}, {}};
    // Biases feeding a batchnorm are redundant (the mean is removed).
    b.dense1 = add_dense(p + ".dense1", current, bs.width, !bn);
    b.norm1 = add_norm(p + ".norm1", bs.width);
    b.dense2 = add_dense(p + ".dense2", bs.width, bs.width, !bn);
    b.norm2 = add_norm(p + ".norm2", bs.width);
    if (bs.kind == BlockKind::reducing) {
      b.proj = add_dense(p + ".proj", current, bs.width, !bn);
      b.norm_proj = add_norm(p + ".norm_proj", bs.width);
    }
    blocks_.push_back(b);
    current = bs.width;
  }
  head_ = add_dense("head", current, spec_.output_dim, true);
  const auto& last = slots_.back();
  params_ = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(last.offset + static_cast<std::size_t>(last.rows) * last.cols));
  for (const Block& b : blocks_)
    for (const NormRef* n : {&b.norm1, &b.norm2, &b.norm_proj})
      if (n->active && n->dim > 0)
        params_.segment(static_cast<Eigen::Index>(n->gamma), n->dim).setOnes();
}

void Network::initialize(RngStream& rng) {
  params_.setZero();
  for (const ParamSlot& s : slots_) {
    auto t = tensor(s);
    const auto ends = [&](const char* suffix) {
      return s.name.size() >= std::char_traits<char>::length(suffix) &&
             s.name.compare(s.name.size() - std::char_traits<char>::length(suffix),
                            std::string::npos, suffix) == 0;
    };
    if (ends(".weight")) {
      const double gain = s.name.rfind("head", 0) == 0 ? 1.0 : 2.0;
      const double sd = std::sqrt(gain / s.cols);
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = sd * rng.normal();
    } else if (ends(".gamma")) {
      t.setOnes();
    }
  }
  for (const Block& b : blocks_)
    for (const NormRef* n : {&b.norm1, &b.norm2, &b.norm_proj})
      if (n->active && n->dim > 0) {
        running_.segment(static_cast<Eigen::Index>(n->running), n->dim).setZero();
        running_.segment(static_cast<Eigen::Index>(n->running) + n->dim, n->dim).setOnes();
      }
}

const ParamSlot& Network::slot(const std::string& name) const {
  for (const ParamSlot& s : slots_)
    if (s.name == name) return s;
  throw InvalidInput("no parameter tensor named " + name);
}

Eigen::Map<Eigen::MatrixXd> Network::tensor(const ParamSlot& s) {
  return Eigen::Map<Eigen::MatrixXd>(params_.data() + s.offset, s.rows, s.cols);
}

// Shared forward implementation. Kept as a struct with access to Network's
// internals so backprop can reuse the same layout helpers.
struct Backprop {
  using CMap = Eigen::Map<const Eigen::MatrixXd>;
  using CVec = Eigen::Map<const Eigen::VectorXd>;

  static CMap weight(const Network& n, const Network::DenseRef& d) {
    return CMap(n.params_.data() + d.w, d.out, d.in);
  }
  static CVec vec(const Network& n, std::size_t offset, int dim) {
    return CVec(n.params_.data() + offset, dim);
  }

  static Eigen::MatrixXd dense(const Network& n, const Network::DenseRef& d,
                               const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z(d.out, x.cols());
    z.noalias() = weight(n, d) * x;
    if (d.b != kNone) z.colwise() += vec(n, d.b, d.out);
    return z;
  }

  static Eigen::MatrixXd norm(const Network& n, const Network::NormRef& r,
                              Eigen::MatrixXd z, Mode mode, NormCache* cache) {
    if (!r.active) return z;
    const auto gamma = vec(n, r.gamma, r.dim);
    const auto beta = vec(n, r.beta, r.dim);
    Eigen::VectorXd mean, var;
    if (mode == Mode::train) {
      mean = z.rowwise().mean();
      z.colwise() -= mean;
      var = z.rowwise().squaredNorm() / static_cast<double>(z.cols());
    } else {
      mean = n.running_.segment(static_cast<Eigen::Index>(r.running), r.dim);
      var = n.running_.segment(static_cast<Eigen::Index>(r.running) + r.dim, r.dim);
      z.colwise() -= mean;
    }
    const Eigen::VectorXd inv_std = (var.array() + kNormEpsilon).rsqrt().matrix();
    z = inv_std.asDiagonal() * z;
    if (cache) {
      cache->xhat = z;
      cache->inv_std = inv_std;
      cache->mean = mean;
      cache->var = var;
    }
    z = gamma.asDiagonal() * z;
    z.colwise() += beta;
    return z;
  }

  static Eigen::MatrixXd forward(const Network& n, const Eigen::MatrixXd& x,
                                 Mode mode, ForwardCache* cache) {
    if (x.rows() != n.spec_.input_dim)
      throw InvalidInput("network input has the wrong dimension");
    if (x.cols() == 0) throw InvalidInput("empty batch");
    if (cache) cache->blocks.assign(n.blocks_.size(), BlockCache{});
    Eigen::MatrixXd h = x;
    for (std::size_t k = 0; k < n.blocks_.size(); ++k) {
      const Network::Block& b = n.blocks_[k];
      BlockCache* bc = cache ? &cache->blocks[k] : nullptr;
      Eigen::MatrixXd a1 =
          norm(n, b.norm1, dense(n, b.dense1, h), mode, bc ? &bc->norm1 : nullptr);
      Eigen::MatrixXd hidden = relu(a1);
      Eigen::MatrixXd sum =
          norm(n, b.norm2, dense(n, b.dense2, hidden), mode, bc ? &bc->norm2 : nullptr);
      if (b.kind == BlockKind::reducing)
        sum += norm(n, b.norm_proj, dense(n, b.proj, h), mode,
                    bc ? &bc->norm_proj : nullptr);
      else
        sum += h;
      if (bc) {
        bc->input = std::move(h);
        bc->hidden = std::move(hidden);
        bc->sum = sum;
      }
      h = relu(sum);
    }
    Eigen::MatrixXd y = dense(n, n.head_, h);
    if (n.spec_.output_activation == OutputActivation::tanh) y = y.array().tanh().matrix();
    if (cache) {
      cache->head_input = std::move(h);
      cache->output = y;
    }
    return y;
  }

  // dL/dz for a batchnorm layer given dL/d(output); accumulates gamma/beta grads.
  static Eigen::MatrixXd norm_backward(const Network& n, const Network::NormRef& r,
                                       const NormCache& c, const Eigen::MatrixXd& dy,
                                       Eigen::VectorXd& grad) {
    if (!r.active) return dy;
    const auto gamma = vec(n, r.gamma, r.dim);
    const double batch = static_cast<double>(dy.cols());
    grad.segment(static_cast<Eigen::Index>(r.gamma), r.dim) +=
        dy.cwiseProduct(c.xhat).rowwise().sum();
    grad.segment(static_cast<Eigen::Index>(r.beta), r.dim) += dy.rowwise().sum();
    const Eigen::MatrixXd dxhat = gamma.asDiagonal() * dy;
    const Eigen::VectorXd sum_d = dxhat.rowwise().sum();
    const Eigen::VectorXd sum_dx = dxhat.cwiseProduct(c.xhat).rowwise().sum();
    Eigen::MatrixXd dz = batch * dxhat;
    dz.colwise() -= sum_d;
    dz -= sum_dx.asDiagonal() * c.xhat;
    return (c.inv_std / batch).asDiagonal() * dz;
  }

  // Accumulates dense grads; returns dL/dx.
  static Eigen::MatrixXd dense_backward(const Network& n, const Network::DenseRef& d,
                                        const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& dz,
                                        Eigen::VectorXd& grad) {
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + d.w, d.out, d.in);
    gw.noalias() += dz * x.transpose();
    if (d.b != kNone)
      grad.segment(static_cast<Eigen::Index>(d.b), d.out) += dz.rowwise().sum();
    Eigen::MatrixXd dx(d.in, dz.cols());
    dx.noalias() = weight(n, d).transpose() * dz;
    return dx;
  }

  static Eigen::VectorXd backward(const Network& n, const ForwardCache& c,
                                  const Eigen::MatrixXd& dout) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n.params_.size());
    Eigen::MatrixXd dpre = dout;
    if (n.spec_.output_activation == OutputActivation::tanh)
      dpre = dpre.cwiseProduct((1.0 - c.output.array().square()).matrix());
    Eigen::MatrixXd dh = dense_backward(n, n.head_, c.head_input, dpre, grad);
    for (std::size_t k = n.blocks_.size(); k-- > 0;) {
      const Network::Block& b = n.blocks_[k];
      const BlockCache& bc = c.blocks[k];
      const Eigen::MatrixXd dsum =
          dh.cwiseProduct((bc.sum.array() > 0.0).cast<double>().matrix());
      Eigen::MatrixXd dz2 = norm_backward(n, b.norm2, bc.norm2, dsum, grad);
      Eigen::MatrixXd dhidden = dense_backward(n, b.dense2, bc.hidden, dz2, grad);
      dhidden = dhidden.cwiseProduct((bc.hidden.array() > 0.0).cast<double>().matrix());
      Eigen::MatrixXd dz1 = norm_backward(n, b.norm1, bc.norm1, dhidden, grad);
      dh = dense_backward(n, b.dense1, bc.input, dz1, grad);
      if (b.kind == BlockKind::reducing) {
        Eigen::MatrixXd dzp = norm_backward(n, b.norm_proj, bc.norm_proj, dsum, grad);
        dh += dense_backward(n, b.proj, bc.input, dzp, grad);
      } else {
        dh += dsum;
      }
    }
    return grad;
  }
};

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x, Mode mode,
                                 ForwardCache* cache) const {
  return Backprop::forward(*this, x, mode, cache);
}

Eigen::MatrixXd Network::infer(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(spec_.output_dim, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    out.col(c) = Backprop::forward(*this, x.col(c), Mode::inference, nullptr);
  return out;
}

Eigen::VectorXd Network::infer(const Eigen::VectorXd& x) const {
  return Backprop::forward(*this, x, Mode::inference, nullptr);
}

void Network::update_running_stats(const ForwardCache& cache, double momentum) {
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const Block& b = blocks_[k];
    const BlockCache& bc = cache.blocks.at(k);
    const std::pair<const NormRef*, const NormCache*> pairs[] = {
        {&b.norm1, &bc.norm1}, {&b.norm2, &bc.norm2}, {&b.norm_proj, &bc.norm_proj}};
    for (const auto& [r, c] : pairs) {
      if (!r->active || r->dim == 0) continue;
      const double batch = static_cast<double>(bc.input.cols());
      const double unbias = batch > 1.0 ? batch / (batch - 1.0) : 1.0;
      auto mean = running_.segment(static_cast<Eigen::Index>(r->running), r->dim);
      auto var = running_.segment(static_cast<Eigen::Index>(r->running) + r->dim, r->dim);
      mean = (1.0 - momentum) * mean + momentum * c->mean;
      var = (1.0 - momentum) * var + momentum * unbias * c->var;
    }
  }
}

LossAndGradient loss_and_gradients(const Network& net, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& y, ForwardCache* cache) {
  if (x.cols() == 0) throw InvalidInput("empty batch");
  if (y.rows() != net.spec().output_dim || y.cols() != x.cols())
    throw InvalidInput("target batch has the wrong shape");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const Eigen::MatrixXd out = net.forward(x, Mode::train, &c);
  const Eigen::MatrixXd resid = out - y;
  const double scale = 1.0 / static_cast<double>(resid.size());
  LossAndGradient r;
  r.loss = resid.squaredNorm() * scale;
  r.gradient = Backprop::backward(net, c, 2.0 * scale * resid);
  return r;
}

}  // namespace ensmooth::neural
