#include "multiprior/layers.hpp"

#include <cmath>

namespace multiprior {

void he_init(Parameter& p, int fan_in, float slope, const Rng& base) {
  Rng rng = base.substream(p.name);
  const double std =
      std::sqrt(2.0 / ((1.0 + double(slope) * slope) * double(fan_in)));
  for (float& v : p.value.data) v = float(std * rng.normal());
}

namespace {

// relu gradient factor from the pre-activation recovered as gamma*xhat+beta
Batch relu_backward_from_bn(const Batch& grad_y, const BnCache& cache,
                            const BatchNormState& bn, float slope) {
  Batch out(grad_y.size());
#pragma omp parallel for schedule(static)
  for (size_t e = 0; e < grad_y.size(); ++e) {
    const int C = grad_y[e].shape[0];
    Tensor g = grad_y[e];
    const size_t n = size_t(g.numel() / C);
    for (int c = 0; c < C; ++c) {
      const float ga = bn.gamma.value.data[c];
      const float be = bn.beta.value.data[c];
      const float* xh = cache.xhat[e].data.data() + size_t(c) * n;
      float* gd = g.data.data() + size_t(c) * n;
      for (size_t i = 0; i < n; ++i)
        if (!(ga * xh[i] + be > 0.0f)) gd[i] *= slope;
    }
    out[e] = std::move(g);
  }
  return out;
}

void apply_lrelu_from_bn(Batch& ys, float slope) {
  for (Tensor& y : ys)
    for (float& v : y.data)
      if (!(v > 0.0f)) v *= slope;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvBlock
// ---------------------------------------------------------------------------

ConvBlock::ConvBlock(const std::string& name, int c_in, int c_out, float slope,
                     bool same_pad)
    : kernel_(name + ".weight", {c_out, c_in, 3, 3, 3}),
      bias_(name + ".bias", {c_out}),
      bn_(name + ".bn", c_out),
      slope_(slope),
      same_pad_(same_pad) {}

void ConvBlock::init(Rng& rng) {
  he_init(kernel_, kernel_.value.shape[1] * 27, slope_, rng);
}

void ConvBlock::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
  out.push_back(&bn_.gamma);
  out.push_back(&bn_.beta);
}

void ConvBlock::collect_state(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(bn_.gamma.name + ".running_mean", &bn_.running_mean);
  out.emplace_back(bn_.gamma.name + ".running_var", &bn_.running_var);
}

Batch ConvBlock::forward(Batch&& x, Mode mode, bool update_running) {
  if (same_pad_)
    for (Tensor& t : x) t = pad3d_zero(t, 1);

  Batch conv_out(x.size());
  if (mode == Mode::Train) {
#pragma omp parallel for schedule(static)
    for (size_t e = 0; e < x.size(); ++e)
      conv_out[e] = conv3d_valid_gemm(x[e], kernel_.value, bias_.value);
    in_cache_ = std::move(x);
    Batch ys = batch_norm_forward(conv_out, bn_, Mode::Train, update_running,
                                  &bn_cache_);
    apply_lrelu_from_bn(ys, slope_);
    return ys;
  }
  const bool par_inside = x.size() == 1;
#pragma omp parallel for schedule(static) if (!par_inside)
  for (size_t e = 0; e < x.size(); ++e)
    conv_out[e] = conv3d_valid(x[e], kernel_.value, bias_.value, par_inside);
  Batch ys =
      batch_norm_forward(conv_out, bn_, Mode::Infer, false, nullptr);
  apply_lrelu_from_bn(ys, slope_);
  return ys;
}

Batch ConvBlock::backward(const Batch& grad_y) {
  if (bn_cache_.xhat.size() != grad_y.size())
    throw shape_error("ConvBlock::backward without a train-mode forward");
  Batch dbn = relu_backward_from_bn(grad_y, bn_cache_, bn_, slope_);
  Batch dconv = batch_norm_backward(dbn, bn_cache_, bn_);

  Batch din(grad_y.size());
  std::vector<Tensor> dk(grad_y.size()), db(grad_y.size());
#pragma omp parallel for schedule(static)
  for (size_t e = 0; e < grad_y.size(); ++e) {
    din[e] = conv3d_backward_input(in_cache_[e].shape, kernel_.value,
                                   dconv[e]);
    dk[e] = Tensor(kernel_.value.shape);
    db[e] = Tensor(bias_.value.shape);
    conv3d_backward_params(in_cache_[e], dconv[e], dk[e], db[e]);
    if (same_pad_) din[e] = crop3d(din[e], 1);
  }
  for (size_t e = 0; e < grad_y.size(); ++e) {
    for (size_t i = 0; i < dk[e].data.size(); ++i)
      kernel_.grad.data[i] += dk[e].data[i];
    for (size_t i = 0; i < db[e].data.size(); ++i)
      bias_.grad.data[i] += db[e].data[i];
  }
  in_cache_.clear();
  return din;
}

// ---------------------------------------------------------------------------
// DenseBlock
// ---------------------------------------------------------------------------

DenseBlock::DenseBlock(const std::string& name, int c_in, int c_out,
                       float slope, bool with_bn, Activation act)
    : weights_(name + ".weight", {c_out, c_in}),
      bias_(name + ".bias", {c_out}),
      slope_(slope),
      act_(act) {
  if (with_bn) bn_.emplace(name + ".bn", c_out);
}

void DenseBlock::init(Rng& rng) {
  he_init(weights_, weights_.value.shape[1], slope_, rng);
}

void DenseBlock::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&weights_);
  out.push_back(&bias_);
  if (bn_) {
    out.push_back(&bn_->gamma);
    out.push_back(&bn_->beta);
  }
}

void DenseBlock::collect_state(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  if (bn_) {
    out.emplace_back(bn_->gamma.name + ".running_mean", &bn_->running_mean);
    out.emplace_back(bn_->gamma.name + ".running_var", &bn_->running_var);
  }
}

Batch DenseBlock::forward(Batch&& x, Mode mode, bool update_running) {
  Batch lin(x.size());
#pragma omp parallel for schedule(static)
  for (size_t e = 0; e < x.size(); ++e)
    lin[e] = pointwise_dense(x[e], weights_.value, bias_.value);

  Batch ys;
  if (bn_) {
    BnCache* cache = mode == Mode::Train ? &bn_cache_ : nullptr;
    ys = batch_norm_forward(lin, *bn_, mode,
                            mode == Mode::Train && update_running, cache);
  } else {
    ys = std::move(lin);
  }

  switch (act_) {
    case Activation::LeakyRelu:
      apply_lrelu_from_bn(ys, slope_);
      break;
    case Activation::Softmax:
      for (Tensor& y : ys) y = softmax_channels(y);
      break;
    case Activation::None:
      break;
  }
  if (mode == Mode::Train) {
    in_cache_ = std::move(x);
    if (act_ == Activation::Softmax) out_cache_ = ys;
  }
  return ys;
}

Batch DenseBlock::backward(const Batch& grad_y) {
  if (in_cache_.size() != grad_y.size())
    throw shape_error("DenseBlock::backward without a train-mode forward");
  Batch dlin(grad_y.size());
  switch (act_) {
    case Activation::Softmax:
      for (size_t e = 0; e < grad_y.size(); ++e)
        dlin[e] = softmax_backward(out_cache_[e], grad_y[e]);
      break;
    case Activation::LeakyRelu: {
      if (!bn_)
        throw shape_error("DenseBlock: leaky relu without bn unsupported");
      dlin = relu_backward_from_bn(grad_y, bn_cache_, *bn_, slope_);
      break;
    }
    case Activation::None:
      dlin = grad_y;
      break;
  }
  if (bn_) dlin = batch_norm_backward(dlin, bn_cache_, *bn_);

  Batch din(grad_y.size());
  std::vector<Tensor> dw(grad_y.size()), db(grad_y.size());
#pragma omp parallel for schedule(static)
  for (size_t e = 0; e < grad_y.size(); ++e) {
    din[e] = pointwise_dense_backward_input(in_cache_[e].shape, weights_.value,
                                            dlin[e]);
    dw[e] = Tensor(weights_.value.shape);
    db[e] = Tensor(bias_.value.shape);
    pointwise_dense_backward_params(in_cache_[e], dlin[e], dw[e], db[e]);
  }
  for (size_t e = 0; e < grad_y.size(); ++e) {
    for (size_t i = 0; i < dw[e].data.size(); ++i)
      weights_.grad.data[i] += dw[e].data[i];
    for (size_t i = 0; i < db[e].data.size(); ++i)
      bias_.grad.data[i] += db[e].data[i];
  }
  in_cache_.clear();
  out_cache_.clear();
  return din;
}

// ---------------------------------------------------------------------------
// TConvBlock
// ---------------------------------------------------------------------------

TConvBlock::TConvBlock(const std::string& name, int c_in, int c_out,
                       float slope)
    : kernel_(name + ".weight", {c_in, c_out, 2, 2, 2}),
      bias_(name + ".bias", {c_out}),
      bn_(name + ".bn", c_out),
      slope_(slope) {}

void TConvBlock::init(Rng& rng) {
  he_init(kernel_, kernel_.value.shape[0] * 8, slope_, rng);
}

void TConvBlock::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
  out.push_back(&bn_.gamma);
  out.push_back(&bn_.beta);
}

void TConvBlock::collect_state(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(bn_.gamma.name + ".running_mean", &bn_.running_mean);
  out.emplace_back(bn_.gamma.name + ".running_var", &bn_.running_var);
}

Batch TConvBlock::forward(Batch&& x, Mode mode, bool update_running) {
  Batch up(x.size());
#pragma omp parallel for schedule(static)
  for (size_t e = 0; e < x.size(); ++e)
    up[e] = tconv2(x[e], kernel_.value, bias_.value);

  if (mode == Mode::Train) {
    in_cache_ = std::move(x);
    Batch ys =
        batch_norm_forward(up, bn_, Mode::Train, update_running, &bn_cache_);
    apply_lrelu_from_bn(ys, slope_);
    return ys;
  }
  Batch ys = batch_norm_forward(up, bn_, Mode::Infer, false, nullptr);
  apply_lrelu_from_bn(ys, slope_);
  return ys;
}

Batch TConvBlock::backward(const Batch& grad_y) {
  Batch dbn = relu_backward_from_bn(grad_y, bn_cache_, bn_, slope_);
  Batch dup = batch_norm_backward(dbn, bn_cache_, bn_);

  Batch din(grad_y.size());
  std::vector<Tensor> dk(grad_y.size()), db(grad_y.size());
#pragma omp parallel for schedule(static)
  for (size_t e = 0; e < grad_y.size(); ++e) {
    din[e] = tconv2_backward_input(in_cache_[e].shape, kernel_.value, dup[e]);
    dk[e] = Tensor(kernel_.value.shape);
    db[e] = Tensor(bias_.value.shape);
    tconv2_backward_params(in_cache_[e], dup[e], dk[e], db[e]);
  }
  for (size_t e = 0; e < grad_y.size(); ++e) {
    for (size_t i = 0; i < dk[e].data.size(); ++i)
      kernel_.grad.data[i] += dk[e].data[i];
    for (size_t i = 0; i < db[e].data.size(); ++i)
      bias_.grad.data[i] += db[e].data[i];
  }
  in_cache_.clear();
  return din;
}

}  // namespace multiprior
