#include "dssl/encoders.hpp"

#include <cmath>

namespace dssl::ssl {

BackboneKind backbone_from_string(const std::string& s) {
  if (s == "tiny_conv") return BackboneKind::tiny_conv;
  if (s == "resnet18") return BackboneKind::resnet18;
  throw ConfigError("unknown backbone '" + s + "'");
}

std::string to_string(BackboneKind k) {
  return k == BackboneKind::tiny_conv ? "tiny_conv" : "resnet18";
}

void EncoderSpec::validate() const {
  if (in_channels != 3 && in_channels != 4)
    throw ValidationError("encoder in_channels must be 3 or 4");
  if (feature_dim < 8) throw ValidationError("encoder feature_dim must be >= 8");
  if (backbone == BackboneKind::tiny_conv && feature_dim % 4 != 0)
    throw ValidationError("tiny_conv feature_dim must be divisible by 4");
  if (backbone == BackboneKind::resnet18 && feature_dim % 8 != 0)
    throw ValidationError("resnet18 feature_dim must be divisible by 8");
}

namespace {

void copy_state(Backbone& dst, const Backbone& src) {
  std::vector<nn::ParamRef> sp, dp;
  const_cast<Backbone&>(src).collect(sp);
  dst.collect(dp);
  if (sp.size() != dp.size())
    throw ShapeError("backbone copy: parameter count mismatch");
  for (size_t i = 0; i < sp.size(); ++i) {
    if (!sp[i].var->value.same_shape(dp[i].var->value))
      throw ShapeError("backbone copy: shape mismatch at " + dp[i].name);
    dp[i].var->value = sp[i].var->value;
  }
  std::vector<nn::BufferRef> sb, db;
  const_cast<Backbone&>(src).collect_buffers(sb);
  dst.collect_buffers(db);
  if (sb.size() != db.size())
    throw ShapeError("backbone copy: buffer count mismatch");
  for (size_t i = 0; i < sb.size(); ++i) *db[i].tensor = *sb[i].tensor;
}

// Four conv3x3(stride 2) + BN + ReLU blocks, then global average pooling.
// Channel plan: fd/4, fd/2, fd, fd.
class TinyConvNet : public Backbone {
 public:
  TinyConvNet(const EncoderSpec& spec, Rng& rng) : spec_(spec) {
    const int fd = spec.feature_dim;
    const int plan[4] = {fd / 4, fd / 2, fd, fd};
    int in = spec.in_channels;
    for (int i = 0; i < 4; ++i) {
      convs_.emplace_back(in, plan[i], 3, 2, 1, rng);
      norms_.emplace_back(plan[i]);
      in = plan[i];
    }
  }

  nn::Var forward(const nn::Var& x, bool training) override {
    nn::Var h = x;
    for (size_t i = 0; i < convs_.size(); ++i)
      h = nn::relu(norms_[i](convs_[i](h), training));
    return nn::global_avg_pool(h);
  }

  void collect(std::vector<nn::ParamRef>& out) override {
    for (size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].collect("backbone.conv" + std::to_string(i), out);
      norms_[i].collect("backbone.bn" + std::to_string(i), out);
    }
  }

  void collect_buffers(std::vector<nn::BufferRef>& out) override {
    for (size_t i = 0; i < norms_.size(); ++i)
      norms_[i].collect_buffers("backbone.bn" + std::to_string(i), out);
  }

  const EncoderSpec& spec() const override { return spec_; }
  nn::Var first_conv_weight() override { return convs_[0].weight; }

  std::unique_ptr<Backbone> clone() const override {
    Rng dummy(0);
    auto out = std::make_unique<TinyConvNet>(spec_, dummy);
    copy_state(*out, *this);
    return out;
  }

 private:
  EncoderSpec spec_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm> norms_;
};

struct BasicBlock {
  nn::Conv2d conv1, conv2;
  nn::BatchNorm bn1, bn2;
  bool has_down = false;
  nn::Conv2d down_conv;
  nn::BatchNorm down_bn;

  BasicBlock(int in, int out, int stride, Rng& rng)
      : conv1(in, out, 3, stride, 1, rng),
        conv2(out, out, 3, 1, 1, rng),
        bn1(out),
        bn2(out) {
    if (stride != 1 || in != out) {
      has_down = true;
      down_conv = nn::Conv2d(in, out, 1, stride, 0, rng);
      down_bn = nn::BatchNorm(out);
    }
  }

  nn::Var forward(const nn::Var& x, bool training) {
    nn::Var h = nn::relu(bn1(conv1(x), training));
    h = bn2(conv2(h), training);
    nn::Var skip = has_down ? down_bn(down_conv(x), training) : x;
    return nn::relu(nn::add(h, skip));
  }

  void collect(const std::string& p, std::vector<nn::ParamRef>& out) {
    conv1.collect(p + ".conv1", out);
    bn1.collect(p + ".bn1", out);
    conv2.collect(p + ".conv2", out);
    bn2.collect(p + ".bn2", out);
    if (has_down) {
      down_conv.collect(p + ".down_conv", out);
      down_bn.collect(p + ".down_bn", out);
    }
  }

  void collect_buffers(const std::string& p, std::vector<nn::BufferRef>& out) {
    bn1.collect_buffers(p + ".bn1", out);
    bn2.collect_buffers(p + ".bn2", out);
    if (has_down) down_bn.collect_buffers(p + ".down_bn", out);
  }
};

// Small-image ResNet-18 variant: 3x3 stem without max pooling, four stages
// of two basic blocks, widths fd/8 .. fd.
class ResNet18Like : public Backbone {
 public:
  ResNet18Like(const EncoderSpec& spec, Rng& rng)
      : spec_(spec),
        stem_(spec.in_channels, spec.feature_dim / 8, 3, 1, 1, rng),
        stem_bn_(spec.feature_dim / 8) {
    const int base = spec.feature_dim / 8;
    const int widths[4] = {base, base * 2, base * 4, base * 8};
    int in = base;
    for (int s = 0; s < 4; ++s) {
      const int stride = s == 0 ? 1 : 2;
      blocks_.emplace_back(in, widths[s], stride, rng);
      blocks_.emplace_back(widths[s], widths[s], 1, rng);
      in = widths[s];
    }
  }

  nn::Var forward(const nn::Var& x, bool training) override {
    nn::Var h = nn::relu(stem_bn_(stem_(x), training));
    for (BasicBlock& b : blocks_) h = b.forward(h, training);
    return nn::global_avg_pool(h);
  }

  void collect(std::vector<nn::ParamRef>& out) override {
    stem_.collect("backbone.stem", out);
    stem_bn_.collect("backbone.stem_bn", out);
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect("backbone.block" + std::to_string(i), out);
  }

  void collect_buffers(std::vector<nn::BufferRef>& out) override {
    stem_bn_.collect_buffers("backbone.stem_bn", out);
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect_buffers("backbone.block" + std::to_string(i), out);
  }

  const EncoderSpec& spec() const override { return spec_; }
  nn::Var first_conv_weight() override { return stem_.weight; }

  std::unique_ptr<Backbone> clone() const override {
    Rng dummy(0);
    auto out = std::make_unique<ResNet18Like>(spec_, dummy);
    copy_state(*out, *this);
    return out;
  }

 private:
  EncoderSpec spec_;
  nn::Conv2d stem_;
  nn::BatchNorm stem_bn_;
  std::vector<BasicBlock> blocks_;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(const EncoderSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.backbone) {
    case BackboneKind::tiny_conv:
      return std::make_unique<TinyConvNet>(spec, rng);
    case BackboneKind::resnet18:
      return std::make_unique<ResNet18Like>(spec, rng);
  }
  throw ConfigError("unhandled backbone kind");
}

AdapterInit adapter_init_from_string(const std::string& s) {
  if (s == "zero") return AdapterInit::zero;
  if (s == "mean_rgb") return AdapterInit::mean_rgb;
  throw ConfigError("unknown adapter init '" + s + "'");
}

nn::Tensor adapt_input_layer(const nn::Tensor& weights_3ch, AdapterInit mode) {
  if (weights_3ch.shape.size() != 4 || weights_3ch.dim(1) != 3)
    throw ShapeError("adapt_input_layer: expected [out,3,k,k] weights");
  const int out_ch = weights_3ch.dim(0);
  const int kh = weights_3ch.dim(2), kw = weights_3ch.dim(3);
  const int kk = kh * kw;
  nn::Tensor out(nn::Shape{out_ch, 4, kh, kw});
  for (int o = 0; o < out_ch; ++o) {
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < kk; ++i)
        out.data[(static_cast<size_t>(o) * 4 + c) * kk + i] =
            weights_3ch.data[(static_cast<size_t>(o) * 3 + c) * kk + i];
    for (int i = 0; i < kk; ++i) {
      double v = 0.0;
      if (mode == AdapterInit::mean_rgb) {
        for (int c = 0; c < 3; ++c)
          v += weights_3ch.data[(static_cast<size_t>(o) * 3 + c) * kk + i];
        v /= 3.0;
      }
      out.data[(static_cast<size_t>(o) * 4 + 3) * kk + i] = v;
    }
  }
  return out;
}

nn::Tensor drop_depth_filters(const nn::Tensor& weights_4ch) {
  if (weights_4ch.shape.size() != 4 || weights_4ch.dim(1) != 4)
    throw ShapeError("drop_depth_filters: expected [out,4,k,k] weights");
  const int out_ch = weights_4ch.dim(0);
  const int kh = weights_4ch.dim(2), kw = weights_4ch.dim(3);
  const int kk = kh * kw;
  nn::Tensor out(nn::Shape{out_ch, 3, kh, kw});
  for (int o = 0; o < out_ch; ++o)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < kk; ++i)
        out.data[(static_cast<size_t>(o) * 3 + c) * kk + i] =
            weights_4ch.data[(static_cast<size_t>(o) * 4 + c) * kk + i];
  return out;
}

std::unique_ptr<Backbone> adapt_encoder(const Backbone& encoder,
                                        AdapterInit mode) {
  if (encoder.spec().in_channels != 3)
    throw ShapeError("adapt_encoder: source must be a 3-channel encoder");
  EncoderSpec spec4 = encoder.spec();
  spec4.in_channels = 4;
  Rng dummy(0);
  std::unique_ptr<Backbone> out = make_backbone(spec4, dummy);

  std::vector<nn::ParamRef> sp, dp;
  const_cast<Backbone&>(encoder).collect(sp);
  out->collect(dp);
  if (sp.size() != dp.size())
    throw ShapeError("adapt_encoder: parameter count mismatch");
  const nn::Var first = out->first_conv_weight();
  const nn::Var src_first = const_cast<Backbone&>(encoder).first_conv_weight();
  for (size_t i = 0; i < sp.size(); ++i) {
    if (dp[i].var == first) {
      dp[i].var->value = adapt_input_layer(src_first->value, mode);
    } else {
      dp[i].var->value = sp[i].var->value;
    }
  }
  std::vector<nn::BufferRef> sb, db;
  const_cast<Backbone&>(encoder).collect_buffers(sb);
  out->collect_buffers(db);
  for (size_t i = 0; i < sb.size(); ++i) *db[i].tensor = *sb[i].tensor;
  return out;
}

}  // namespace dssl::ssl
