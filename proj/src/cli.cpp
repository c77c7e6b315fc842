// SPDX-License-Identifier: Apache-2.0
#include "nsnet/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "nsnet/error.hpp"
#include "nsnet/evaluation.hpp"
#include "nsnet/supervision.hpp"

namespace nsnet {

namespace {

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::vector<VideoRecord> load_split(const fs::path& manifest_path) {
  return load_records(read_manifest(manifest_path));
}

}  // namespace

std::string cmd_synth(const SynthArgs& args) {
  require(!args.out_dir.empty(), "synth needs an output directory");
  const SyntheticDataset ds = generate_synthetic(args.data);
  write_dataset(args.out_dir, "train", args.data.num_classes, ds.train);
  if (!ds.val.empty()) write_dataset(args.out_dir, "val", args.data.num_classes, ds.val);
  std::ostringstream os;
  os << "synth: C=" << args.data.num_classes << " train=" << ds.train.size() << " val=" << ds.val.size()
     << " N=" << args.data.num_frames << " D_l=" << args.data.light_dim << " D_g=" << args.data.guiding_dim
     << " -> " << args.out_dir.string();
  return os.str();
}

std::string cmd_prototypes(const PrototypeArgs& args) {
  const DatasetManifest manifest = read_manifest(args.manifest);
  const auto records = load_records(manifest);
  const PrototypeBank bank = build_prototypes(records, manifest.num_classes, args.epsilon);
  save_prototypes(args.out, bank, fnv1a_hex(read_file_bytes(args.manifest)));
  return "prototypes: C=" + std::to_string(bank.num_classes()) + " D_g=" + std::to_string(bank.dim()) + " -> " +
         args.out.string();
}

TrainResult cmd_train(const TrainArgs& args) {
  const DatasetManifest manifest = read_manifest(args.train_manifest);
  const auto train_set = load_records(manifest);
  std::vector<VideoRecord> val_set;
  if (!args.val_manifest.empty()) val_set = load_split(args.val_manifest);
  ModelConfig model = args.model;
  model.num_classes = manifest.num_classes;
  if (!train_set.empty()) model.light_dim = train_set.front().light_features.cols();
  std::optional<PrototypeBank> bank;
  if (!args.prototypes.empty()) bank = load_prototypes(args.prototypes);
  if (args.train.frame_target == FrameTarget::ns && args.train.guiding == GuidingSource::prototype)
    require(bank.has_value(), "ns targets with prototype guidance need --prototypes");
  if (!args.train.out_dir.empty()) fs::create_directories(args.train.out_dir);
  return train(train_set, val_set, bank ? &*bank : nullptr, model, args.train);
}

std::string cmd_sample(const SampleArgs& args) {
  require(!args.out_dir.empty(), "sample needs an output directory");
  const SamplerModel model = load_checkpoint(args.checkpoint);
  const auto records = load_split(args.manifest);
  const PresampleConfig pre{args.frames, false};
  for (const auto& raw : records) {
    const VideoRecord r = presample(raw, pre);
    const SaliencyProfile p = sample_video(model, r, args.fusion);
    std::vector<char> chosen(p.s_f.size(), 0);
    for (auto i : p.selected) chosen[i] = 1;
    std::ostringstream os;
    os << "frame,s_f,s_v,fused,selected\n";
    for (std::size_t i = 0; i < p.s_f.size(); ++i) {
      os << i << ',' << format_double("%.9g", p.s_f[i]) << ',' << format_double("%.9g", p.s_v[i]) << ',';
      if (p.fused_scores) os << format_double("%.9g", (*p.fused_scores)[i]);
      os << ',' << int(chosen[i]) << '\n';
    }
    atomic_write(args.out_dir / (raw.video_id + ".csv"), os.str());
  }
  return "sample: " + std::to_string(records.size()) + " videos, K=" + std::to_string(args.fusion.k) + ", " +
         to_string(args.fusion.mode) + " -> " + args.out_dir.string();
}

std::string cmd_eval(const EvalArgs& args) {
  const SamplerModel model = load_checkpoint(args.checkpoint);
  const auto raw = load_split(args.manifest);
  const CostTable costs = args.costs.empty() ? CostTable{} : CostTable::load(args.costs);
  std::vector<VideoRecord> records;
  records.reserve(raw.size());
  for (const auto& r : raw) records.push_back(presample(r, PresampleConfig{args.frames, false}));
  const auto rows = run_comparison(records, model, args.fusion, args.k_list, costs, args.seed);
  const std::string csv = frontier_csv(rows);
  if (!args.out.empty()) atomic_write(args.out, csv);
  return csv;
}

std::string cmd_flops(const fs::path& cost_table, std::size_t k, std::size_t t) {
  const CostTable costs = CostTable::load(cost_table);
  return format_double("%.2f", flops_total(costs.budget(k, t)));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive temporal frame sampler: synthesize data, build prototypes, train, sample, evaluate."};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // synth
  SynthArgs synth;
  synth.data.val_videos_per_class = 0;
  auto* s = app.add_subcommand("synth", "Generate a planted-saliency synthetic dataset");
  s->add_option("--classes", synth.data.num_classes, "Number of classes C");
  s->add_option("--videos_per_class", synth.data.videos_per_class, "Training videos per class");
  s->add_option("--val_videos_per_class", synth.data.val_videos_per_class, "Validation videos per class");
  s->add_option("--frames", synth.data.num_frames, "Frames per video N");
  s->add_option("--light_dim", synth.data.light_dim, "Lightweight feature dim D_l");
  s->add_option("--guiding_dim", synth.data.guiding_dim, "Recognizer feature dim D_g");
  s->add_option("--salient_fraction", synth.data.salient_fraction, "Planted salient fraction, in (0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  s->add_option("--noise", synth.data.noise_sigma, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  s->add_option("--seed", synth.data.seed, "Seed");
  s->add_option("--out", synth.out_dir, "Output directory")->required();

  // prototypes
  PrototypeArgs proto;
  auto* p = app.add_subcommand("prototypes", "Build class prototypes from a training manifest");
  p->add_option("--manifest", proto.manifest, "Training manifest (.nsm)")->required()->check(CLI::ExistingFile);
  p->add_option("--epsilon", proto.epsilon, "Percent of most confident frames kept")->check(CLI::Range(0.0, 100.0));
  p->add_option("--out", proto.out, "Output NSF1 file")->required();

  // train
  TrainArgs tr;
  std::string frame_target = "ns", guiding = "prototype", train_fusion = "index_union";
  std::size_t train_frames = tr.train.presample.num_frames;
  bool no_shift = false;
  auto* t = app.add_subcommand("train", "Train the sampler");
  std::string train_config;
  t->add_option("--config", train_config, "key=value configuration file; flags override it")
      ->check(CLI::ExistingFile);
  t->allow_config_extras(CLI::config_extras_mode::error);
  auto* train_manifest_opt =
      t->add_option("--train_manifest", tr.train_manifest, "Training manifest (required)")->check(CLI::ExistingFile);
  t->add_option("--val_manifest", tr.val_manifest, "Validation manifest")->check(CLI::ExistingFile);
  t->add_option("--prototypes", tr.prototypes, "Prototype bank (NSF1)")->check(CLI::ExistingFile);
  auto* out_dir_opt = t->add_option("--out_dir", tr.train.out_dir, "Directory for checkpoints and metrics.csv (required)");
  t->add_option("--epochs", tr.train.epochs, "Epochs");
  t->add_option("--batch_size", tr.train.batch_size, "Videos per batch");
  t->add_option("--lr", tr.train.base_lr, "Base learning rate");
  t->add_option("--lr_decay_epochs", tr.train.lr_decay_epochs, "Epochs at which the rate decays");
  t->add_option("--decay_factor", tr.train.decay_factor, "Decay factor");
  t->add_option("--momentum", tr.train.momentum, "SGD momentum");
  t->add_option("--seed", tr.train.seed, "Seed for init, shuffle and dropout streams");
  t->add_option("--frames", train_frames, "Pre-sampled frames T");
  t->add_flag("--no_shift", no_shift, "Disable presample shift augmentation");
  t->add_option("--frame_target", frame_target, "Frame-head targets")->check(CLI::IsMember({"ns", "hard"}));
  t->add_option("--guiding", guiding, "Guiding score source")->check(CLI::IsMember({"prototype", "response"}));
  t->add_option("--layers", tr.model.encoder_layers, "Encoder layers");
  t->add_option("--heads", tr.model.heads, "Attention heads");
  t->add_option("--ffn_dim", tr.model.ffn_dim, "Feed-forward width (0 = D_l)");
  t->add_option("--max_frames", tr.model.max_frames, "Positional embedding length");
  t->add_option("--dropout_pos_enc", tr.model.dropout_pos_enc, "Dropout after the positional embedding");
  t->add_option("--dropout_cls", tr.model.dropout_cls, "Dropout before the classifiers");
  t->add_option("--dropout_attn", tr.model.dropout_attn, "Dropout before the temporal attention");
  t->add_option("--gamma", tr.model.gamma, "Weight of the non-salient loss");
  t->add_option("--k", tr.train.eval_fusion.k, "K for validation");
  t->add_option("--fusion", train_fusion, "Fusion used for validation");
  t->add_option("--ratio", tr.train.eval_fusion.ratio, "Frame-head weight in add/union fusion");

  // sample
  SampleArgs sa;
  std::string sample_fusion = "index_union";
  auto* sm = app.add_subcommand("sample", "Dump per-frame saliency and the selected frames");
  sm->add_option("--checkpoint", sa.checkpoint, "Checkpoint (.nsc)")->required()->check(CLI::ExistingFile);
  sm->add_option("--manifest", sa.manifest, "Manifest (.nsm)")->required()->check(CLI::ExistingFile);
  sm->add_option("--fusion", sample_fusion, "Fusion mode");
  sm->add_option("--ratio", sa.fusion.ratio, "Frame-head weight in add/union fusion");
  sm->add_option("--k", sa.fusion.k, "Frames to select K");
  sm->add_option("--frames", sa.frames, "Pre-sampled frames T");
  sm->add_option("--out", sa.out_dir, "Output directory")->required();

  // eval
  EvalArgs ev;
  std::string eval_fusion = "index_union";
  auto* e = app.add_subcommand("eval", "Compare the sampler with baselines over K");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint (.nsc)")->required()->check(CLI::ExistingFile);
  e->add_option("--manifest", ev.manifest, "Manifest (.nsm)")->required()->check(CLI::ExistingFile);
  e->add_option("--k", ev.k_list, "K values")->delimiter(',');
  e->add_option("--frames", ev.frames, "Pre-sampled frames T");
  e->add_option("--fusion", eval_fusion, "Fusion mode");
  e->add_option("--ratio", ev.fusion.ratio, "Frame-head weight in add/union fusion");
  e->add_option("--costs", ev.costs, "Cost table (name=gflops lines)")->check(CLI::ExistingFile);
  e->add_option("--seed", ev.seed, "Seed for the random baseline");
  e->add_option("--out", ev.out, "Output CSV");

  // flops
  fs::path cost_path;
  std::size_t flops_k = 5, flops_t = 16;
  auto* f = app.add_subcommand("flops", "Per-video GFLOPs of the sampler pipeline");
  f->add_option("--costs", cost_path, "Cost table (name=gflops lines)")->required()->check(CLI::ExistingFile);
  f->add_option("--k", flops_k, "Frames sent to the recognizer K");
  f->add_option("--frames", flops_t, "Frames observed by the sampler T");

  try {
    app.parse(argc, argv);
    if (t->parsed()) {
      // keys the command line already set keep their flag values
      if (!train_config.empty()) {
        std::ifstream in(train_config);
        if (!in) throw CLI::FileError::Missing(train_config);
        t->parse_from_stream(in);
      }
      if (train_manifest_opt->count() == 0) throw CLI::RequiredError("--train_manifest");
      if (out_dir_opt->count() == 0) throw CLI::RequiredError("--out_dir");
    }
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }

  try {
    if (s->parsed()) {
      out << cmd_synth(synth) << '\n';
    } else if (p->parsed()) {
      out << cmd_prototypes(proto) << '\n';
    } else if (t->parsed()) {
      tr.train.frame_target = parse_frame_target(frame_target);
      tr.train.guiding = parse_guiding_source(guiding);
      tr.train.eval_fusion.mode = parse_fusion_mode(train_fusion);
      tr.train.presample = PresampleConfig{train_frames, !no_shift};
      const TrainResult res = cmd_train(tr);
      const auto& last = res.metrics.back();
      out << "train: " << res.metrics.size() << " epochs, final loss " << format_double("%.6f", last.loss)
          << ", best epoch " << res.best_epoch << " (val top-1 "
          << format_double("%.4f", res.metrics[res.best_epoch].val_top1) << ") -> " << tr.train.out_dir.string()
          << '\n';
    } else if (sm->parsed()) {
      sa.fusion.mode = parse_fusion_mode(sample_fusion);
      out << cmd_sample(sa) << '\n';
    } else if (e->parsed()) {
      ev.fusion.mode = parse_fusion_mode(eval_fusion);
      out << cmd_eval(ev);
    } else if (f->parsed()) {
      out << cmd_flops(cost_path, flops_k, flops_t) << '\n';
    }
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nsnet
