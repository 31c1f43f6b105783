#pragma once
// The full network: fixed-bank channel representation in front, a stem
// (1x1 conv -> BN -> ReLU) mapping 186 planes to stem_width, a sequence of
// three layer types, then GAP -> FC.
//
//   TYPE1: y = ReLU(ReLU(BN(conv3x3 s1)) + x),      width preserved
//   TYPE2: y = ReLU(BN(conv3x3 s2) + BN(conv1x1 s2)), width change, spatial /2
//   TYPE3: y = ReLU(ReLU(BN(gconv3x3 s1, G groups)) + x), width preserved
//
// Convolutions carry no bias (BN follows each one); the 62-kernel bank is
// fixed and never trainable.

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ucnet/channelrep.hpp"
#include "ucnet/container.hpp"
#include "ucnet/filterbank.hpp"
#include "ucnet/nn.hpp"
#include "ucnet/rng.hpp"

namespace ucnet {

enum class LayerKind { Type1, Type2, Type3 };

struct LayerSpec {
  LayerKind kind = LayerKind::Type1;
  int width_in = 0, width_out = 0;
  int groups = 1;  // TYPE3 only
};

struct UcnetConfig {
  int stem_width = 32;
  std::vector<LayerSpec> stages;
  double truncation_t = 3.0;
  Domain domain = Domain::SpatialRgb;
  int classes = 2;
};

inline void validate_config(const UcnetConfig& cfg) {
  require(cfg.stem_width >= 1, Errc::invalid_argument, "stem_width must be >= 1");
  require(cfg.truncation_t > 0, Errc::invalid_argument, "truncation_T must be > 0");
  require(cfg.classes == 2, Errc::invalid_argument, "classifier is binary (classes = 2)");
  int width = cfg.stem_width;
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    const LayerSpec& s = cfg.stages[i];
    const std::string at = "stage " + std::to_string(i);
    require(s.width_in == width, Errc::invalid_argument, at + ": width_in breaks the chain");
    switch (s.kind) {
      case LayerKind::Type1:
        require(s.width_in == s.width_out, Errc::invalid_argument,
                at + ": TYPE1 requires width_in == width_out");
        break;
      case LayerKind::Type2:
        break;  // width change allowed
      case LayerKind::Type3:
        require(s.width_in == s.width_out, Errc::invalid_argument,
                at + ": TYPE3 requires width_in == width_out");
        require(s.groups >= 1 && s.width_in % s.groups == 0 && s.width_out % s.groups == 0,
                Errc::invalid_argument, at + ": groups must divide both widths");
        break;
    }
    width = s.width_out;
  }
}

// Desk-scale default: stem 32, then
// T3(32,g4) T1(32) T2(32->64) T3(64,g4) T1(64) T2(64->128) T1(128).
inline UcnetConfig desk_config(Domain domain) {
  UcnetConfig cfg;
  cfg.domain = domain;
  cfg.stem_width = 32;
  cfg.stages = {
      {LayerKind::Type3, 32, 32, 4}, {LayerKind::Type1, 32, 32, 1},
      {LayerKind::Type2, 32, 64, 1}, {LayerKind::Type3, 64, 64, 4},
      {LayerKind::Type1, 64, 64, 1}, {LayerKind::Type2, 64, 128, 1},
      {LayerKind::Type1, 128, 128, 1},
  };
  return cfg;
}

template <typename T>
struct ConvUnit {
  ConvParams<T> p;
  Tensor<T> grad;  // same shape as p.weights
};

template <typename T>
struct BnUnit {
  BnParams<T> p;
  std::vector<T> g_gamma, g_beta;
};

template <typename T>
struct Stage {
  LayerSpec spec;
  ConvUnit<T> conv;
  BnUnit<T> bn;
  ConvUnit<T> sc_conv;  // TYPE2 only
  BnUnit<T> sc_bn;      // TYPE2 only
};

template <typename T>
struct Model {
  UcnetConfig config;
  FilterBank bank;  // fixed, not trainable, not checkpointed
  ConvUnit<T> stem_conv;
  BnUnit<T> stem_bn;
  std::vector<Stage<T>> stages;
  Tensor<T> fc_w;  // (width, classes, 1, 1)
  std::vector<T> fc_b;
  Tensor<T> g_fc_w;
  std::vector<T> g_fc_b;
};

namespace modeldetail {

template <typename T>
ConvUnit<T> make_conv(int c_out, int c_in, int k, int stride, int pad, int groups, Rng& rng) {
  ConvUnit<T> u;
  u.p.weights = Tensor<T>(c_out, c_in / groups, k, k);
  u.p.stride = stride;
  u.p.pad = pad;
  u.p.groups = groups;
  const double fan_in = double(c_in / groups) * k * k;
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (auto& w : u.p.weights.v) w = T(std_dev * rng.normal());
  u.grad = Tensor<T>(c_out, c_in / groups, k, k);
  return u;
}

template <typename T>
BnUnit<T> make_bn_unit(int channels) {
  BnUnit<T> u;
  u.p = make_bn<T>(channels);
  u.g_gamma.assign(size_t(channels), T(0));
  u.g_beta.assign(size_t(channels), T(0));
  return u;
}

}  // namespace modeldetail

template <typename T>
Model<T> build_model(const UcnetConfig& cfg, uint64_t seed) {
  validate_config(cfg);
  Model<T> m;
  m.config = cfg;
  m.bank = full_bank();
  Rng rng(seed);
  m.stem_conv = modeldetail::make_conv<T>(cfg.stem_width, kRepPlanes, 1, 1, 0, 1, rng);
  m.stem_bn = modeldetail::make_bn_unit<T>(cfg.stem_width);
  for (const LayerSpec& s : cfg.stages) {
    Stage<T> st;
    st.spec = s;
    switch (s.kind) {
      case LayerKind::Type1:
        st.conv = modeldetail::make_conv<T>(s.width_out, s.width_in, 3, 1, 1, 1, rng);
        break;
      case LayerKind::Type3:
        st.conv = modeldetail::make_conv<T>(s.width_out, s.width_in, 3, 1, 1, s.groups, rng);
        break;
      case LayerKind::Type2:
        st.conv = modeldetail::make_conv<T>(s.width_out, s.width_in, 3, 2, 1, 1, rng);
        st.sc_conv = modeldetail::make_conv<T>(s.width_out, s.width_in, 1, 2, 0, 1, rng);
        st.sc_bn = modeldetail::make_bn_unit<T>(s.width_out);
        break;
    }
    st.bn = modeldetail::make_bn_unit<T>(s.width_out);
    m.stages.push_back(std::move(st));
  }
  const int head_width = cfg.stages.empty() ? cfg.stem_width : cfg.stages.back().width_out;
  m.fc_w = Tensor<T>(head_width, cfg.classes, 1, 1);
  const double std_dev = std::sqrt(2.0 / double(head_width));
  for (auto& w : m.fc_w.v) w = T(std_dev * rng.normal());
  m.fc_b.assign(size_t(cfg.classes), T(0));
  m.g_fc_w = Tensor<T>(head_width, cfg.classes, 1, 1);
  m.g_fc_b.assign(size_t(cfg.classes), T(0));
  return m;
}

// ---------------------------------------------------------------------------
// Parameter enumeration (fixed order; checkpoint and SGD both rely on it)

template <typename T>
struct ParamRef {
  std::string name;
  std::vector<uint32_t> dims;
  T* data;
  size_t count;
  T* grad;  // nullptr for non-trainable state (BN running stats)
  bool trainable;
};

template <typename T>
void visit_params(Model<T>& m, const std::function<void(const ParamRef<T>&)>& fn) {
  auto conv = [&](const std::string& name, ConvUnit<T>& u) {
    const auto& w = u.p.weights;
    fn({name + ".w",
        {uint32_t(w.n), uint32_t(w.c), uint32_t(w.h), uint32_t(w.w)},
        u.p.weights.data(),
        u.p.weights.size(),
        u.grad.data(),
        true});
  };
  auto bn = [&](const std::string& name, BnUnit<T>& u) {
    const auto n = uint32_t(u.p.gamma.size());
    fn({name + ".gamma", {n}, u.p.gamma.data(), u.p.gamma.size(), u.g_gamma.data(), true});
    fn({name + ".beta", {n}, u.p.beta.data(), u.p.beta.size(), u.g_beta.data(), true});
    fn({name + ".run_mean", {n}, u.p.running_mean.data(), u.p.running_mean.size(), nullptr,
        false});
    fn({name + ".run_var", {n}, u.p.running_var.data(), u.p.running_var.size(), nullptr, false});
  };
  conv("stem.conv", m.stem_conv);
  bn("stem.bn", m.stem_bn);
  for (size_t i = 0; i < m.stages.size(); ++i) {
    const std::string pre = "s" + std::to_string(i);
    conv(pre + ".conv", m.stages[i].conv);
    bn(pre + ".bn", m.stages[i].bn);
    if (m.stages[i].spec.kind == LayerKind::Type2) {
      conv(pre + ".sc_conv", m.stages[i].sc_conv);
      bn(pre + ".sc_bn", m.stages[i].sc_bn);
    }
  }
  fn({"fc.w",
      {uint32_t(m.fc_w.n), uint32_t(m.fc_w.c)},
      m.fc_w.data(),
      m.fc_w.size(),
      m.g_fc_w.data(),
      true});
  fn({"fc.b", {uint32_t(m.fc_b.size())}, m.fc_b.data(), m.fc_b.size(), m.g_fc_b.data(), true});
}

// Trainable parameter count; the fixed filter bank is excluded by
// construction (it is not a parameter).
template <typename T>
size_t param_count(Model<T>& m) {
  size_t total = 0;
  visit_params<T>(m, [&](const ParamRef<T>& p) {
    if (p.trainable) total += p.count;
  });
  return total;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct StageCache {
  Tensor<T> in;
  BnCache<T> bn;
  Tensor<T> bn_out;  // TYPE1/TYPE3 only (ReLU mask of the branch)
  BnCache<T> sc_bn;  // TYPE2 only
  Tensor<T> sum;     // pre final ReLU
};

template <typename T>
struct ForwardCache {
  Tensor<T> input;
  Tensor<T> stem_conv_out;
  BnCache<T> stem_bn;
  Tensor<T> stem_bn_out;
  Tensor<T> stem_act;
  std::vector<StageCache<T>> stages;
  Tensor<T> gap_in;  // output of the last stage
  Tensor<T> gap_out;
};

template <typename T>
Tensor<T> forward(Model<T>& m, const Tensor<T>& rep, Mode mode, ForwardCache<T>* cache = nullptr,
                  int workers = 1) {
  require(rep.c == kRepPlanes, Errc::invalid_argument,
          "expected a 186-channel representation, got " + std::to_string(rep.c) + " channels");
  if (cache) {
    cache->stages.clear();
    cache->input = rep;
  }

  Tensor<T> x = conv2d(rep, m.stem_conv.p, workers);
  if (cache) cache->stem_conv_out = x;
  x = batch_norm(x, m.stem_bn.p, mode, cache ? &cache->stem_bn : nullptr, workers);
  if (cache) cache->stem_bn_out = x;
  x = relu(x);
  if (cache) cache->stem_act = x;

  for (auto& st : m.stages) {
    StageCache<T> sc;
    if (cache) sc.in = x;
    Tensor<T> main = conv2d(x, st.conv.p, workers);
    main = batch_norm(main, st.bn.p, mode, cache ? &sc.bn : nullptr, workers);

    Tensor<T> sum;
    if (st.spec.kind == LayerKind::Type2) {
      Tensor<T> sc_out = conv2d(x, st.sc_conv.p, workers);
      sc_out = batch_norm(sc_out, st.sc_bn.p, mode, cache ? &sc.sc_bn : nullptr, workers);
      sum = std::move(main);
      for (size_t i = 0; i < sum.size(); ++i) sum.v[i] += sc_out.v[i];
    } else {
      if (cache) sc.bn_out = main;
      Tensor<T> act = relu(main);
      sum = std::move(act);
      for (size_t i = 0; i < sum.size(); ++i) sum.v[i] += x.v[i];
    }
    if (cache) sc.sum = sum;
    x = relu(sum);
    if (cache) cache->stages.push_back(std::move(sc));
  }

  if (cache) cache->gap_in = x;
  Tensor<T> pooled = global_avg_pool(x);
  if (cache) cache->gap_out = pooled;
  return fully_connected(pooled, m.fc_w, m.fc_b);
}

// Fills every parameter's grad buffer (overwriting) and returns nothing;
// requires a cache produced by a TRAIN-mode forward pass.
template <typename T>
void backward(Model<T>& m, const ForwardCache<T>& cache, const Tensor<T>& grad_logits,
              int workers = 1) {
  FcGrads<T> fcg = fully_connected_grad(cache.gap_out, m.fc_w, grad_logits);
  m.g_fc_w = std::move(fcg.weights);
  m.g_fc_b = std::move(fcg.bias);
  Tensor<T> dx = global_avg_pool_grad(cache.gap_in, fcg.x);

  for (size_t si = m.stages.size(); si-- > 0;) {
    Stage<T>& st = m.stages[si];
    const StageCache<T>& sc = cache.stages[si];
    // Through the closing ReLU(sum).
    Tensor<T> dsum = relu_grad(sc.sum, dx);

    if (st.spec.kind == LayerKind::Type2) {
      BnGrads<T> bng = batch_norm_grad(st.bn.p, sc.bn, dsum, workers);
      st.bn.g_gamma = std::move(bng.gamma);
      st.bn.g_beta = std::move(bng.beta);
      ConvGrads<T> cg = conv2d_grad(sc.in, st.conv.p, bng.x, workers);
      st.conv.grad = std::move(cg.weights);

      BnGrads<T> sbng = batch_norm_grad(st.sc_bn.p, sc.sc_bn, dsum, workers);
      st.sc_bn.g_gamma = std::move(sbng.gamma);
      st.sc_bn.g_beta = std::move(sbng.beta);
      ConvGrads<T> scg = conv2d_grad(sc.in, st.sc_conv.p, sbng.x, workers);
      st.sc_conv.grad = std::move(scg.weights);

      dx = std::move(cg.x);
      for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += scg.x.v[i];
    } else {
      // Branch: ReLU(BN(conv)); skip: identity.
      Tensor<T> dact = relu_grad(sc.bn_out, dsum);
      BnGrads<T> bng = batch_norm_grad(st.bn.p, sc.bn, dact, workers);
      st.bn.g_gamma = std::move(bng.gamma);
      st.bn.g_beta = std::move(bng.beta);
      ConvGrads<T> cg = conv2d_grad(sc.in, st.conv.p, bng.x, workers);
      st.conv.grad = std::move(cg.weights);
      dx = std::move(cg.x);
      for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dsum.v[i];
    }
  }

  Tensor<T> dstem_act = relu_grad(cache.stem_bn_out, dx);
  BnGrads<T> bng = batch_norm_grad(m.stem_bn.p, cache.stem_bn, dstem_act, workers);
  m.stem_bn.g_gamma = std::move(bng.gamma);
  m.stem_bn.g_beta = std::move(bng.beta);
  ConvGrads<T> cg = conv2d_grad(cache.input, m.stem_conv.p, bng.x, workers);
  m.stem_conv.grad = std::move(cg.weights);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::string stages_to_string(const std::vector<LayerSpec>& stages) {
  std::string out;
  for (size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ",";
    const LayerSpec& s = stages[i];
    switch (s.kind) {
      case LayerKind::Type1: out += "T1:" + std::to_string(s.width_out); break;
      case LayerKind::Type2:
        out += "T2:" + std::to_string(s.width_in) + "-" + std::to_string(s.width_out);
        break;
      case LayerKind::Type3:
        out += "T3:" + std::to_string(s.width_out) + ":" + std::to_string(s.groups);
        break;
    }
  }
  return out;
}

inline std::vector<LayerSpec> stages_from_string(const std::string& text, int stem_width) {
  std::vector<LayerSpec> out;
  int width = stem_width;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    LayerSpec s;
    auto parse_int = [&](const std::string& str) {
      require(!str.empty() && str.find_first_not_of("0123456789") == std::string::npos,
              Errc::bad_format, "bad stage token: " + tok);
      return std::stoi(str);
    };
    if (tok.rfind("T1:", 0) == 0) {
      s.kind = LayerKind::Type1;
      s.width_in = s.width_out = parse_int(tok.substr(3));
    } else if (tok.rfind("T2:", 0) == 0) {
      const size_t dash = tok.find('-', 3);
      require(dash != std::string::npos, Errc::bad_format, "bad stage token: " + tok);
      s.kind = LayerKind::Type2;
      s.width_in = parse_int(tok.substr(3, dash - 3));
      s.width_out = parse_int(tok.substr(dash + 1));
    } else if (tok.rfind("T3:", 0) == 0) {
      const size_t colon = tok.find(':', 3);
      require(colon != std::string::npos, Errc::bad_format, "bad stage token: " + tok);
      s.kind = LayerKind::Type3;
      s.width_in = s.width_out = parse_int(tok.substr(3, colon - 3));
      s.groups = parse_int(tok.substr(colon + 1));
    } else {
      fail(Errc::bad_format, "bad stage token: " + tok);
    }
    (void)width;
    width = s.width_out;
    out.push_back(s);
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> config_to_kv(const UcnetConfig& cfg) {
  char tbuf[32];
  std::snprintf(tbuf, sizeof tbuf, "%.9g", cfg.truncation_t);
  return {
      {"kind", "model"},
      {"domain", domain_name(cfg.domain)},
      {"truncation_t", tbuf},
      {"stem_width", std::to_string(cfg.stem_width)},
      {"stages", stages_to_string(cfg.stages)},
      {"classes", std::to_string(cfg.classes)},
  };
}

inline UcnetConfig config_from_container(const Container& c) {
  require(c.config_or_fail("kind") == "model", Errc::config_mismatch,
          "container is not a model checkpoint");
  UcnetConfig cfg;
  cfg.domain = domain_from_name(c.config_or_fail("domain"));
  cfg.truncation_t = std::stod(c.config_or_fail("truncation_t"));
  cfg.stem_width = std::stoi(c.config_or_fail("stem_width"));
  cfg.stages = stages_from_string(c.config_or_fail("stages"), cfg.stem_width);
  cfg.classes = std::stoi(c.config_or_fail("classes"));
  validate_config(cfg);
  return cfg;
}

inline void save_checkpoint(Model<float>& m, const std::string& path) {
  Container c;
  c.config = config_to_kv(m.config);
  visit_params<float>(m, [&](const ParamRef<float>& p) {
    TensorRecord t;
    t.name = p.name;
    t.dims = p.dims;
    t.data.assign(p.data, p.data + p.count);
    c.tensors.push_back(std::move(t));
  });
  write_container(path, c);
}

// Compares configs field by field so mismatches are reported by name.
inline void check_config_match(const UcnetConfig& expected, const UcnetConfig& actual) {
  auto check = [](bool ok, const std::string& field) {
    if (!ok) fail(Errc::config_mismatch, "checkpoint config mismatch in field '" + field + "'");
  };
  check(expected.domain == actual.domain, "domain");
  check(expected.truncation_t == actual.truncation_t, "truncation_t");
  check(expected.stem_width == actual.stem_width, "stem_width");
  check(stages_to_string(expected.stages) == stages_to_string(actual.stages), "stages");
  check(expected.classes == actual.classes, "classes");
}

inline Model<float> load_checkpoint(const std::string& path,
                                    const UcnetConfig* expected = nullptr) {
  const Container c = read_container(path);
  const UcnetConfig cfg = config_from_container(c);
  if (expected) check_config_match(*expected, cfg);
  Model<float> m = build_model<float>(cfg, 0);
  size_t next = 0;
  visit_params<float>(m, [&](const ParamRef<float>& p) {
    require(next < c.tensors.size(), Errc::bad_format, "checkpoint is missing tensors");
    const TensorRecord& t = c.tensors[next++];
    require(t.name == p.name, Errc::bad_format,
            "checkpoint tensor order mismatch: expected '" + p.name + "', got '" + t.name + "'");
    require(t.data.size() == p.count, Errc::bad_format,
            "checkpoint tensor '" + t.name + "' has wrong size");
    std::copy(t.data.begin(), t.data.end(), p.data);
  });
  require(next == c.tensors.size(), Errc::bad_format, "checkpoint holds extra tensors");
  return m;
}

}  // namespace ucnet
