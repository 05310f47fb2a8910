#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dssl/nn.hpp"

namespace dssl::ssl {

enum class BackboneKind { tiny_conv, resnet18 };

BackboneKind backbone_from_string(const std::string& s);
std::string to_string(BackboneKind k);

struct EncoderSpec {
  BackboneKind backbone = BackboneKind::tiny_conv;
  int in_channels = 3;
  int feature_dim = 128;

  void validate() const;
};

class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual nn::Var forward(const nn::Var& x, bool training) = 0;
  virtual void collect(std::vector<nn::ParamRef>& out) = 0;
  virtual void collect_buffers(std::vector<nn::BufferRef>& out) = 0;
  virtual const EncoderSpec& spec() const = 0;
  // First convolution weight, [out, in_channels, k, k]; the depth-channel
  // adapter rewrites it.
  virtual nn::Var first_conv_weight() = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
};

std::unique_ptr<Backbone> make_backbone(const EncoderSpec& spec, Rng& rng);

enum class AdapterInit { zero, mean_rgb };

AdapterInit adapter_init_from_string(const std::string& s);

// [out, 3, k, k] -> [out, 4, k, k]. zero: new channel filters are zero;
// mean_rgb: each is the mean of the three RGB filters.
nn::Tensor adapt_input_layer(const nn::Tensor& weights_3ch, AdapterInit mode);

// Inverse of adapt_input_layer: drops the fourth channel.
nn::Tensor drop_depth_filters(const nn::Tensor& weights_4ch);

// Clones a 3-channel encoder into a 4-channel one; every parameter and
// buffer is copied except the first conv weight, which is adapted.
std::unique_ptr<Backbone> adapt_encoder(const Backbone& encoder,
                                        AdapterInit mode);

}  // namespace dssl::ssl
