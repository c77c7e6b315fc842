// SPDX-License-Identifier: Apache-2.0
#include "nsnet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "nsnet/error.hpp"
#include "nsnet/numerics.hpp"

namespace nsnet {

namespace {

std::string layer_prefix(std::size_t l) { return "enc" + std::to_string(l) + "."; }

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(origin_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void ModelConfig::validate() const {
  require(light_dim >= 2, "light feature dimension must be >= 2");
  require(num_classes >= 1, "model needs at least one class");
  require(heads >= 1 && light_dim % heads == 0, "light_dim must be divisible by heads");
  require(max_frames >= 1, "max_frames must be >= 1");
  for (double r : {dropout_pos_enc, dropout_cls, dropout_attn}) require(r >= 0.0 && r < 1.0, "dropout rates must lie in [0, 1)");
  require(gamma >= 0.0, "gamma must be >= 0");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "light_dim=" << light_dim << '\n'
     << "num_classes=" << num_classes << '\n'
     << "encoder_layers=" << encoder_layers << '\n'
     << "heads=" << heads << '\n'
     << "ffn_dim=" << ffn_width() << '\n'
     << "max_frames=" << max_frames << '\n'
     << "dropout_pos_enc=" << dropout_pos_enc << '\n'
     << "dropout_cls=" << dropout_cls << '\n'
     << "dropout_attn=" << dropout_attn << '\n'
     << "gamma=" << gamma << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model config line without '=': " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "light_dim") cfg.light_dim = std::stoul(val);
      else if (key == "num_classes") cfg.num_classes = std::stoul(val);
      else if (key == "encoder_layers") cfg.encoder_layers = std::stoul(val);
      else if (key == "heads") cfg.heads = std::stoul(val);
      else if (key == "ffn_dim") cfg.ffn_dim = std::stoul(val);
      else if (key == "max_frames") cfg.max_frames = std::stoul(val);
      else if (key == "dropout_pos_enc") cfg.dropout_pos_enc = std::stod(val);
      else if (key == "dropout_cls") cfg.dropout_cls = std::stod(val);
      else if (key == "dropout_attn") cfg.dropout_attn = std::stod(val);
      else if (key == "gamma") cfg.gamma = std::stod(val);
      else throw FormatError("unknown model config key '" + key + "'");
    } catch (const std::logic_error&) {
      throw FormatError("bad value for model config key '" + key + "': " + val);
    }
  }
  cfg.validate();
  return cfg;
}

SamplerModel::SamplerModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.light_dim, f = cfg_.ffn_width(), k = cfg_.num_classes + 1;
  add_param("pos_embedding", Array({cfg_.max_frames, d}));
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = layer_prefix(l);
    add_param(p + "ln1.gain", Array({d}, 1.0));
    add_param(p + "ln1.bias", Array({d}));
    for (const char* w : {"wq", "wk", "wv", "wo"}) add_param(p + "attn." + w, Array({d, d}));
    for (const char* b : {"bq", "bk", "bv", "bo"}) add_param(p + "attn." + b, Array({d}));
    add_param(p + "ln2.gain", Array({d}, 1.0));
    add_param(p + "ln2.bias", Array({d}));
    add_param(p + "ffn.w1", Array({d, f}));
    add_param(p + "ffn.b1", Array({f}));
    add_param(p + "ffn.w2", Array({f, d}));
    add_param(p + "ffn.b2", Array({d}));
  }
  add_param("fsm.weight", Array({d, k}));
  add_param("fsm.bias", Array({k}));
  add_param("vgm.attn.weight", Array({d, 1}));
  add_param("vgm.attn.bias", Array({1}));
  add_param("vgm.cls.weight", Array({d, k}));
  add_param("vgm.cls.bias", Array({k}));
}

SamplerModel::SamplerModel(const ModelConfig& cfg, Rng& init_rng) : SamplerModel(cfg) {
  std::normal_distribution<double> pos(0.0, 0.02);
  for (auto& p : params_) {
    if (p.name == "pos_embedding") {
      for (auto& v : p.value.data()) v = pos(init_rng);
    } else if (p.value.rank() == 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : p.value.data()) v = u(init_rng);
    }
  }
}

SamplerModel SamplerModel::zeros(const ModelConfig& cfg) {
  SamplerModel m(cfg);
  for (auto& p : m.params_) std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
  return m;
}

void SamplerModel::add_param(std::string name, Array value) { params_.emplace_back(std::move(name), std::move(value)); }

std::size_t SamplerModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ContractError("no parameter named '" + name + "'");
}

std::vector<ParamTensor*> SamplerModel::param_ptrs() {
  std::vector<ParamTensor*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

ParamTensor& SamplerModel::param(const std::string& name) { return params_[index_of(name)]; }
const ParamTensor& SamplerModel::param(const std::string& name) const { return params_[index_of(name)]; }

std::size_t SamplerModel::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Var SamplerModel::read(Tape& tape, const std::string& name, bool tracked) const {
  const ParamTensor& p = params_[index_of(name)];
  // Tracked reads only happen through the non-const entry points.
  return tracked ? tape.param(const_cast<ParamTensor&>(p)) : tape.constant(p.value);
}

Var SamplerModel::encode_impl(Tape& tape, const Array& features, Rng* dropout_rng, bool tracked) const {
  const std::size_t t = features.rows(), d = cfg_.light_dim;
  if (features.rank() != 2 || features.cols() != d) {
    throw ShapeError("encoder expects T x " + std::to_string(d) + " features, got " + shape_str(features.shape()));
  }
  if (t == 0 || t > cfg_.max_frames) {
    throw ContractError("sequence of " + std::to_string(t) + " frames exceeds positional capacity " +
                        std::to_string(cfg_.max_frames));
  }
  Var x = ag::add(tape.constant(features), ag::slice_rows(read(tape, "pos_embedding", tracked), 0, t));
  if (dropout_rng) x = ag::dropout(x, cfg_.dropout_pos_enc, *dropout_rng);

  const std::size_t hd = cfg_.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = layer_prefix(l);
    auto linear = [&](Var in, const std::string& w, const std::string& b) {
      return ag::add_row_bias(ag::matmul(in, read(tape, p + w, tracked)), read(tape, p + b, tracked));
    };
    Var h = ag::layer_norm(x, read(tape, p + "ln1.gain", tracked), read(tape, p + "ln1.bias", tracked));
    Var q = linear(h, "attn.wq", "attn.bq");
    Var k = linear(h, "attn.wk", "attn.bk");
    Var v = linear(h, "attn.wv", "attn.bv");
    std::vector<Var> heads;
    heads.reserve(cfg_.heads);
    for (std::size_t hh = 0; hh < cfg_.heads; ++hh) {
      Var qh = ag::slice_cols(q, hh * hd, hd);
      Var kh = ag::slice_cols(k, hh * hd, hd);
      Var vh = ag::slice_cols(v, hh * hd, hd);
      Var scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
      heads.push_back(ag::matmul(ag::softmax_rows(scores), vh));
    }
    Var attn = linear(cfg_.heads == 1 ? heads[0] : ag::concat_cols(heads), "attn.wo", "attn.bo");
    x = ag::add(x, attn);
    Var h2 = ag::layer_norm(x, read(tape, p + "ln2.gain", tracked), read(tape, p + "ln2.bias", tracked));
    Var ffn = linear(ag::gelu(linear(h2, "ffn.w1", "ffn.b1")), "ffn.w2", "ffn.b2");
    x = ag::add(x, ffn);
  }
  return x;
}

Var SamplerModel::fsm_impl(Tape& tape, Var encoded, Rng* dropout_rng, bool tracked) const {
  Var in = dropout_rng ? ag::dropout(encoded, cfg_.dropout_cls, *dropout_rng) : encoded;
  return ag::add_row_bias(ag::matmul(in, read(tape, "fsm.weight", tracked)), read(tape, "fsm.bias", tracked));
}

Var SamplerModel::attention_impl(Tape& tape, Var encoded, Rng* dropout_rng, bool tracked) const {
  Var in = dropout_rng ? ag::dropout(encoded, cfg_.dropout_attn, *dropout_rng) : encoded;
  Var raw = ag::add_row_bias(ag::matmul(in, read(tape, "vgm.attn.weight", tracked)),
                             read(tape, "vgm.attn.bias", tracked));
  Var alpha = ag::l1_normalize(ag::sigmoid(raw));
  return ag::reshape(alpha, {encoded.value().rows()});
}

Var SamplerModel::classify_impl(Tape& tape, Var representation, Rng* dropout_rng, bool tracked) const {
  Var in = dropout_rng ? ag::dropout(representation, cfg_.dropout_cls, *dropout_rng) : representation;
  Var logits = ag::add_row_bias(ag::matmul(in, read(tape, "vgm.cls.weight", tracked)),
                                read(tape, "vgm.cls.bias", tracked));
  return ag::reshape(logits, {cfg_.num_classes + 1});
}

std::pair<Var, Var> SamplerModel::vgm_representations(Var encoded, Var attn) const {
  const std::size_t t = encoded.value().rows();
  if (attn.value().size() != t) throw ShapeError("attention length does not match frame count");
  Var row = ag::reshape(attn, {1, t});
  Var salient = ag::matmul(row, encoded);
  const double inv_t = 1.0 / static_cast<double>(t);
  Var complement = ag::affine(row, -inv_t, inv_t);
  Var nonsalient = ag::matmul(complement, encoded);
  return {salient, nonsalient};
}

ForwardVars SamplerModel::forward_impl(Tape& tape, const Array& features, Rng* dropout_rng, bool tracked) const {
  ForwardVars out;
  out.encoded = encode_impl(tape, features, dropout_rng, tracked);
  out.fsm_logits = fsm_impl(tape, out.encoded, dropout_rng, tracked);
  out.attn = attention_impl(tape, out.encoded, dropout_rng, tracked);
  auto [sal, ns] = vgm_representations(out.encoded, out.attn);
  out.salient_logits = classify_impl(tape, sal, dropout_rng, tracked);
  out.nonsalient_logits = classify_impl(tape, ns, dropout_rng, tracked);
  return out;
}

Var SamplerModel::encode(Tape& tape, const Array& features, Rng* dropout_rng) {
  return encode_impl(tape, features, dropout_rng, true);
}
Var SamplerModel::fsm_forward(Tape& tape, Var encoded, Rng* dropout_rng) {
  return fsm_impl(tape, encoded, dropout_rng, true);
}
Var SamplerModel::vgm_attention(Tape& tape, Var encoded, Rng* dropout_rng) {
  return attention_impl(tape, encoded, dropout_rng, true);
}
Var SamplerModel::vgm_classify(Tape& tape, Var representation, Rng* dropout_rng) {
  return classify_impl(tape, representation, dropout_rng, true);
}
ForwardVars SamplerModel::forward(Tape& tape, const Array& features, Rng* dropout_rng) {
  return forward_impl(tape, features, dropout_rng, true);
}

ForwardOutput SamplerModel::infer(const Array& features) const {
  Tape tape;
  ForwardVars v = forward_impl(tape, features, nullptr, false);
  return ForwardOutput{v.encoded.value(), v.fsm_logits.value(), v.attn.value(), v.salient_logits.value(),
                       v.nonsalient_logits.value()};
}

Var fsm_loss(Var fsm_logits, const Array& targets) {
  if (fsm_logits.value().rows() != targets.rows()) {
    throw ContractError("frame loss: " + std::to_string(fsm_logits.value().rows()) + " frames but " +
                        std::to_string(targets.rows()) + " pseudo labels");
  }
  return ag::soft_cross_entropy_rows(fsm_logits, targets);
}

Var vgm_loss(Var salient_logits, Var nonsalient_logits, std::size_t label, double gamma, Var* classify,
             Var* suppress) {
  const std::size_t k = salient_logits.value().size();
  require(k >= 2 && label + 1 < k, "video label " + std::to_string(label) + " outside the real classes");
  Array sal_target({k}), ns_target({k});
  sal_target[label] = 1.0;
  ns_target[k - 1] = 1.0;
  Var cls = ag::soft_cross_entropy_rows(salient_logits, sal_target);
  Var ns = ag::soft_cross_entropy_rows(nonsalient_logits, ns_target);
  if (classify) *classify = cls;
  if (suppress) *suppress = ns;
  return ag::add(cls, ag::scale(ns, gamma));
}

LossVars total_loss(const ForwardVars& out, const Array& frame_targets, std::size_t label, double gamma) {
  LossVars l;
  l.frame = fsm_loss(out.fsm_logits, frame_targets);
  Var video = vgm_loss(out.salient_logits, out.nonsalient_logits, label, gamma, &l.classify, &l.suppress);
  l.total = ag::add(video, l.frame);
  return l;
}

std::vector<double> fsm_saliency(const Array& fsm_logits) {
  require(fsm_logits.rank() == 2 && fsm_logits.cols() >= 2, "frame logits must be T x (C + 1)");
  const std::size_t t = fsm_logits.rows(), c = fsm_logits.cols() - 1;
  std::vector<double> conf(t);
  for (std::size_t i = 0; i < t; ++i) {
    const auto p = softmax(fsm_logits.row(i));
    conf[i] = *std::max_element(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(c));
  }
  return softmax(conf);
}

std::vector<double> vgm_saliency(const Array& attn) { return attn.data(); }

std::string checkpoint_bytes(const SamplerModel& model) {
  std::string out = "NSC1";
  put_le(out, model.params().size(), 4);
  for (const auto& p : model.params()) {
    if (p.name.size() > 0xffff) throw ContractError("parameter name too long: " + p.name);
    put_le(out, p.name.size(), 2);
    out += p.name;
    put_le(out, p.value.rank(), 4);
    for (auto dim : p.value.shape()) put_le(out, dim, 4);
    for (double v : p.value.data()) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  }
  return out;
}

void save_checkpoint(const fs::path& path, const SamplerModel& model) {
  atomic_write(path, checkpoint_bytes(model));
  fs::path side = path;
  side += ".cfg";
  atomic_write(side, model.config().to_text());
}

SamplerModel load_checkpoint(const fs::path& path) {
  fs::path side = path;
  side += ".cfg";
  SamplerModel model = SamplerModel::zeros(ModelConfig::from_text(read_file_bytes(side)));
  const std::string bytes = read_file_bytes(path);
  ByteReader in(bytes, path.string());
  if (in.str(4) != "NSC1") throw FormatError(path.string() + ": bad magic, not an NSC1 checkpoint");
  const auto count = in.le(4);
  if (count != model.params().size()) {
    throw FormatError(path.string() + ": holds " + std::to_string(count) + " parameters, configuration expects " +
                      std::to_string(model.params().size()));
  }
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = in.str(in.le(2));
    ParamTensor& p = model.param(name);
    const auto rank = in.le(4);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(in.le(4));
    if (shape != p.value.shape()) {
      throw FormatError(path.string() + ": parameter " + name + " has shape " + shape_str(shape) + ", expected " +
                        shape_str(p.value.shape()));
    }
    for (auto& v : p.value.data()) v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(in.le(4))));
  }
  if (!in.done()) throw FormatError(path.string() + ": trailing bytes after last parameter");
  return model;
}

}  // namespace nsnet
