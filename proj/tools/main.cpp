#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "autopool/autopool.hpp"
#include "autopool/binary_io.hpp"
#include "autopool/parallel.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using namespace autopool;
using cli::RunManifest;

namespace {

// ---------------------------------------------------------------------------
// Shared option groups

struct ImageSource {
  std::string cifar_dir;
  std::string cifar_batch;
  std::string split = "train";
  int per_class = 0;
  std::uint64_t subsample_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--cifar-dir", cifar_dir, "CIFAR-10 binary directory (data_batch_*.bin, test_batch.bin)");
    app->add_option("--cifar-batch", cifar_batch, "single CIFAR-10 format batch file");
    app->add_option("--split", split, "train or test (with --cifar-dir)")
        ->check(CLI::IsMember({"train", "test"}));
    app->add_option("--per-class", per_class, "keep this many images per class (0 = all)");
    app->add_option("--subsample-seed", subsample_seed, "seed for per-class subsampling");
  }
  bool given() const { return !cifar_dir.empty() || !cifar_batch.empty(); }

  LabeledImageSet load(RunManifest& manifest) const {
    require(cifar_dir.empty() != cifar_batch.empty(), ErrorCode::kInvalidConfig,
            "give exactly one of --cifar-dir and --cifar-batch");
    std::optional<LabeledImageSet> set;
    if (!cifar_batch.empty()) {
      manifest.input(cifar_batch);
      set = load_cifar10_batch(cifar_batch);
    } else {
      const auto which = split == "test" ? CifarSplit::kTest : CifarSplit::kTrain;
      set = load_cifar10(cifar_dir, which);
      if (which == CifarSplit::kTest) {
        manifest.input(fs::path(cifar_dir) / "test_batch.bin");
      } else {
        for (int b = 1; b <= 5; ++b) manifest.input(fs::path(cifar_dir) / ("data_batch_" + std::to_string(b) + ".bin"));
      }
    }
    if (per_class > 0) return subsample_per_class(*set, per_class, subsample_seed);
    return std::move(*set);
  }
};

/// Patch side and channel count of an autoencoder trained on square patches.
std::pair<int, int> sae_patch_geometry(const SparseAutoencoder<double>& sae, int channels_hint) {
  const Index d = sae.input_dim();
  auto side_for = [&](int c) -> int {
    if (d % c) return 0;
    const int s = static_cast<int>(std::lround(std::sqrt(double(d / c))));
    return Index(s) * s * c == d ? s : 0;
  };
  if (channels_hint > 0) {
    const int s = side_for(channels_hint);
    require(s > 0, ErrorCode::kDimensionMismatch,
            "autoencoder input " + std::to_string(d) + " is not a square patch with " +
                std::to_string(channels_hint) + " channels");
    return {s, channels_hint};
  }
  if (const int s = side_for(1); s > 0) return {s, 1};
  if (const int s = side_for(3); s > 0) return {s, 3};
  throw Error(ErrorCode::kDimensionMismatch, "cannot infer patch shape of autoencoder input " + std::to_string(d));
}

/// Model files that exist but fail to decode are reported as ModelParse.
template <typename Loader>
auto load_model(const std::string& path, Loader loader) {
  try {
    return loader(fs::path(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoFailure) throw;
    throw Error(ErrorCode::kModelParse, path + ": " + e.what());
  }
}

SparseAutoencoder<double> read_sae(const std::string& path) { return load_model(path, load_sae); }
PoolingMatrix<double> read_pooling(const std::string& path) { return load_model(path, load_pooling); }
LinearClassifier read_classifier(const std::string& path) { return load_model(path, load_classifier); }

fs::path manifest_path(const std::string& flag, const fs::path& primary) {
  if (!flag.empty()) return flag;
  return primary.string() + ".manifest.json";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

/// Feature vectors for every image, one column each, optionally reduced by a
/// pooling matrix or spatial grids as they are produced.
Eigen::MatrixXd image_features(const LabeledImageSet& images, const SparseAutoencoder<double>& sae,
                               const PoolingMatrix<double>* pooling, const SpatialGridSpec* grids) {
  const ConvLayout layout = conv_layout_for(sae, images.height(), images.width(), images.channels());
  Index out_dim = layout.feature_dim();
  if (pooling) {
    require(pooling->feature_dim() == layout.feature_dim(), ErrorCode::kDimensionMismatch,
            "pooling matrix has " + std::to_string(pooling->feature_dim()) + " columns but features have " +
                std::to_string(layout.feature_dim()));
    out_dim = pooling->clusters();
  } else if (grids) {
    grids->validate(layout);
    out_dim = layout.n_maps * grids->cells();
  }
  Eigen::MatrixXd out(out_dim, images.size());
  constexpr int kChunk = 16;
  const int chunks = (images.size() + kChunk - 1) / kChunk;
  // Each chunk writes only its own columns; pooling accumulates in a fixed
  // order, so the result is independent of the thread count.
  const auto run_chunk = [&](std::size_t c) {
    const int begin = static_cast<int>(c) * kChunk;
    const int end = std::min(images.size(), begin + kChunk);
    Eigen::MatrixXd raw(layout.feature_dim(), end - begin);
    for (int i = begin; i < end; ++i) raw.col(i - begin) = conv_extract(sae, images.image(i), layout);
    if (pooling) {
      out.middleCols(begin, end - begin) = pool(*pooling, raw);
    } else if (grids) {
      for (int i = begin; i < end; ++i) out.col(i) = spatial_pool(raw.col(i - begin), layout, *grids);
    } else {
      out.middleCols(begin, end - begin) = raw;
    }
  };
  if (pooling) {
    // pool() already parallelises over columns.
    for (int c = 0; c < chunks; ++c) run_chunk(static_cast<std::size_t>(c));
  } else {
    parallel_for(static_cast<std::size_t>(chunks), run_chunk);
  }
  return out;
}

FeaturePairs<double> pair_features(const PatchPairSet& pairs, const SparseAutoencoder<double>& sae) {
  const ConvLayout layout = conv_layout_for(sae, pairs.height(), pairs.width(), pairs.channels());
  FeaturePairs<double> out{Eigen::MatrixXd(layout.feature_dim(), pairs.n_pairs()),
                           Eigen::MatrixXd(layout.feature_dim(), pairs.n_pairs())};
  parallel_for(static_cast<std::size_t>(pairs.n_pairs()), [&](std::size_t i) {
    const int p = static_cast<int>(i);
    out.first.col(p) = conv_extract(sae, pairs.first(p), layout);
    out.second.col(p) = conv_extract(sae, pairs.second(p), layout);
  });
  return out;
}

// ---------------------------------------------------------------------------
// gen-synth

struct GenSynth {
  SynthConfig cfg;
  std::string pattern = "bar";
  std::string transform = "translate";
  double mag = 2.0;
  double angle = 0.0;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("gen-synth", "generate a synthetic patch-pair dataset");
    app->add_option("--pairs", cfg.n_pairs, "number of pairs");
    app->add_option("--size", cfg.size, "frame side in pixels");
    app->add_option("--channels", cfg.channels, "1 or 3");
    app->add_option("--pattern", pattern, "bar or blob")->check(CLI::IsMember({"bar", "blob"}));
    app->add_option("--transform", transform, "translate, rotate or both")
        ->check(CLI::IsMember({"translate", "rotate", "both"}));
    app->add_option("--mag", mag, "per-step magnitude: pixels (translate, both) or degrees (rotate)");
    app->add_option("--angle", angle, "rotation in degrees per step for --transform both");
    app->add_option("--groups", cfg.n_groups, "number of ground-truth prototype groups");
    app->add_option("--noise", cfg.noise_stddev, "gaussian pixel noise stddev");
    app->add_option("--seed", cfg.seed, "random seed");
    app->add_option("--out", out, "output APPD file")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("gen-synth", *app);
    cfg.pattern = pattern == "blob" ? PatternKind::kBlob : PatternKind::kBar;
    cfg.transform = transform == "rotate" ? TransformKind::kRotate
                    : transform == "both" ? TransformKind::kBoth
                                          : TransformKind::kTranslate;
    cfg.shift_px = cfg.transform == TransformKind::kRotate ? 0.0 : mag;
    cfg.rotate_deg = cfg.transform == TransformKind::kRotate ? mag : angle;
    const auto data = generate_synthetic(cfg);
    save_pairs(data.pairs, out);
    m.output(out);

    const fs::path sidecar = out + ".groups.csv";
    std::string csv = "pair,group\n";
    for (std::size_t i = 0; i < data.groups.size(); ++i)
      csv += std::to_string(i) + "," + std::to_string(data.groups[i]) + "\n";
    write_text(sidecar, csv);
    m.output(sidecar);
    m.write(manifest_path(manifest, out));
  }
};

// ---------------------------------------------------------------------------
// train-sae

struct TrainSae {
  std::string pairs;
  ImageSource images;
  int patch = 0;
  int hidden = 100;
  int samples = 10000;
  SaeTrainConfig cfg;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("train-sae", "train a sparse autoencoder on image patches");
    app->add_option("--pairs", pairs, "APPD file; both frames of every pair are used");
    images.add(app);
    app->add_option("--patch", patch, "patch side (0 = whole frame)");
    app->add_option("--hidden", hidden, "number of hidden units");
    app->add_option("--samples", samples, "random patches to draw (ignored for whole-frame patches)");
    app->add_option("--epochs", cfg.epochs, "training epochs");
    app->add_option("--lr", cfg.learning_rate, "learning rate");
    app->add_option("--batch", cfg.batch_size, "mini-batch size (0 = full batch)");
    app->add_option("--sparsity", cfg.sparsity_target, "target mean activation");
    app->add_option("--beta", cfg.sparsity_weight, "sparsity penalty weight");
    app->add_option("--decay", cfg.weight_decay, "weight decay");
    app->add_option("--seed", cfg.seed, "random seed");
    app->add_option("--out", out, "output APSE file")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("train-sae", *app);
    require(pairs.empty() != !images.given(), ErrorCode::kInvalidConfig,
            "give exactly one of --pairs and a CIFAR source");
    std::optional<PatchPairSet> pair_set;
    std::optional<LabeledImageSet> image_set;
    std::vector<ImageView> views;
    if (!pairs.empty()) {
      m.input(pairs);
      pair_set = load_pairs(pairs);
      for (int i = 0; i < pair_set->n_pairs(); ++i) {
        views.push_back(pair_set->first(i));
        views.push_back(pair_set->second(i));
      }
    } else {
      image_set = images.load(m);
      for (int i = 0; i < image_set->size(); ++i) views.push_back(image_set->image(i));
    }
    require(!views.empty(), ErrorCode::kEmptySet, "no images");
    const int side = views.front().height;
    const int p = patch == 0 ? side : patch;

    Eigen::MatrixXd x;
    if (p == views.front().height && p == views.front().width) {
      x.resize(Index(p) * p * views.front().channels, Index(views.size()));
      for (std::size_t i = 0; i < views.size(); ++i) x.col(Index(i)) = extract_patch(views[i], 0, 0, p);
    } else {
      x = sample_patches(views, p, samples, cfg.seed);
    }
    const auto trained = train_sae<double>(x, hidden, cfg);
    save_sae(trained.model, out);
    m.output(out);
    m.results()["patches"] = x.cols();
    m.results()["patch"] = p;
    m.results()["initial_loss"] = trained.initial_loss;
    m.results()["final_loss"] = trained.loss_curve.empty() ? trained.initial_loss : trained.loss_curve.back();
    m.write(manifest_path(manifest, out));
  }
};

// ---------------------------------------------------------------------------
// extract / spool

struct Extract {
  std::string pairs;
  ImageSource images;
  std::string sae;
  int channels = 0;
  int bank = 0;
  std::string pooling;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("extract", "compute feature pairs (APFP) or labeled features (APLF)");
    app->add_option("--pairs", pairs, "APPD file -> feature pairs");
    images.add(app);
    app->add_option("--sae", sae, "APSE model; applied convolutionally when smaller than the frame");
    app->add_option("--channels", channels, "channels of the autoencoder patches (0 = infer)");
    app->add_option("--bank", bank, "use an oriented line bank with this many orientations instead of --sae");
    app->add_option("--pool", pooling, "APPM matrix applied to labeled image features");
    app->add_option("--out", out, "output file")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("extract", *app);
    require(pairs.empty() != !images.given(), ErrorCode::kInvalidConfig,
            "give exactly one of --pairs and a CIFAR source");
    require(sae.empty() != (bank == 0), ErrorCode::kInvalidConfig, "give exactly one of --sae and --bank");
    if (!pairs.empty()) {
      require(pooling.empty(), ErrorCode::kInvalidConfig, "--pool applies to labeled images only");
      m.input(pairs);
      const auto set = load_pairs(pairs);
      FeaturePairs<double> fp;
      if (bank > 0) {
        require(set.height() == set.width(), ErrorCode::kDimensionMismatch, "line bank needs square frames");
        fp = extract_pairs(set, OrientedLineBank(set.height(), bank));
      } else {
        m.input(sae);
        const auto model = read_sae(sae);
        sae_patch_geometry(model, channels ? channels : set.channels());
        fp = pair_features(set, model);
      }
      save_feature_pairs(fp, out);
      m.results()["pairs"] = fp.size();
      m.results()["feature_dim"] = fp.dim();
    } else {
      require(bank == 0, ErrorCode::kInvalidConfig, "--bank applies to pair datasets only");
      const auto set = images.load(m);
      m.input(sae);
      const auto model = read_sae(sae);
      std::optional<PoolingMatrix<double>> p;
      if (!pooling.empty()) {
        m.input(pooling);
        p = read_pooling(pooling);
      }
      const LabeledFeatures lf{image_features(set, model, p ? &*p : nullptr, nullptr), set.labels(),
                               set.n_classes()};
      save_labeled_features(lf, out);
      m.results()["examples"] = lf.size();
      m.results()["feature_dim"] = lf.features.rows();
    }
    m.output(out);
    m.write(manifest_path(manifest, out));
  }
};

struct Spool {
  std::string features;
  ImageSource images;
  std::string sae;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<int> grids{2};
  std::string matrix_out;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("spool", "spatial sum pooling over grid cells of convolutional feature maps");
    app->add_option("--features", features, "APFP or APLF file of raw convolutional features");
    images.add(app);
    app->add_option("--sae", sae, "APSE model defining the feature maps")->required();
    app->add_option("--channels", channels, "image channels (0 = infer from the model)");
    app->add_option("--height", height, "image height for --features input");
    app->add_option("--width", width, "image width for --features input");
    app->add_option("--grids", grids, "grid sides, concatenated in order")->delimiter(',');
    app->add_option("--matrix-out", matrix_out, "also write the equivalent 0/1 APPM matrix");
    app->add_option("--out", out, "output file (same kind as the input)")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("spool", *app);
    require(features.empty() != !images.given(), ErrorCode::kInvalidConfig,
            "give exactly one of --features and a CIFAR source");
    m.input(sae);
    const auto model = read_sae(sae);
    const SpatialGridSpec spec{grids};
    ConvLayout layout;
    if (images.given()) {
      const auto set = images.load(m);
      layout = conv_layout_for(model, set.height(), set.width(), set.channels());
      const LabeledFeatures lf{image_features(set, model, nullptr, &spec), set.labels(), set.n_classes()};
      save_labeled_features(lf, out);
      m.results()["examples"] = lf.size();
      m.results()["feature_dim"] = lf.features.rows();
    } else {
      m.input(features);
      require(height > 0 && width > 0, ErrorCode::kInvalidConfig, "--height and --width are required with --features");
      const auto [side, c] = sae_patch_geometry(model, channels);
      (void)side;
      layout = conv_layout_for(model, height, width, c);
      const auto magic = io::read_file_bytes(features);
      const bool labeled = magic.size() >= 4 && std::string(magic.begin(), magic.begin() + 4) == "APLF";
      auto reduce = [&](const Eigen::MatrixXd& raw) {
        Eigen::MatrixXd z(layout.n_maps * spec.cells(), raw.cols());
        parallel_for(static_cast<std::size_t>(raw.cols()),
                     [&](std::size_t i) { z.col(Index(i)) = spatial_pool(raw.col(Index(i)), layout, spec); });
        return z;
      };
      if (labeled) {
        auto lf = load_labeled_features(features);
        lf.features = reduce(lf.features);
        save_labeled_features(lf, out);
        m.results()["examples"] = lf.size();
      } else {
        auto fp = load_feature_pairs(features);
        fp = {reduce(fp.first), reduce(fp.second)};
        save_feature_pairs(fp, out);
        m.results()["pairs"] = fp.size();
      }
    }
    m.output(out);
    if (!matrix_out.empty()) {
      save_pooling(spatial_pool_matrix(layout, spec), matrix_out);
      m.output(matrix_out);
    }
    m.results()["clusters"] = layout.n_maps * spec.cells();
    m.write(manifest_path(manifest, out));
  }
};

// ---------------------------------------------------------------------------
// train-pool

void add_pool_train_options(CLI::App* app, PoolTrainConfig& cfg) {
  app->add_option("--lr", cfg.learning_rate, "learning rate");
  app->add_option("--epochs", cfg.epochs, "training epochs");
  app->add_option("--batch", cfg.batch_size, "mini-batch size (0 = full batch)");
  app->add_option("--init-scale", cfg.init_scale, "upper bound of the uniform init (0 = 0.01/sqrt(M))");
  app->add_option("--tolerance", cfg.tolerance, "relative improvement below which training stops (0 = never)");
  app->add_option("--seed", cfg.seed, "random seed");
}

struct TrainPool {
  std::string features;
  Index clusters = 2;
  PoolTrainConfig cfg;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("train-pool", "learn a pooling matrix from feature pairs");
    app->add_option("--features", features, "APFP feature pairs")->required();
    app->add_option("--clusters", clusters, "number of pooled units K");
    app->add_option("--lambda", cfg.lambda, "weight of the temporal coherence cost");
    add_pool_train_options(app, cfg);
    app->add_option("--out", out, "output APPM file")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("train-pool", *app);
    m.input(features);
    const auto fp = load_feature_pairs(features);
    const auto trained = train_autopool(fp, clusters, cfg);
    save_pooling(trained.pooling, out);
    m.output(out);

    const fs::path curve = out + ".loss.csv";
    std::string csv = "epoch,j1,j2,total\n";
    csv += "0," + fmt(trained.initial.j1) + "," + fmt(trained.initial.j2) + "," + fmt(trained.initial.total()) + "\n";
    for (std::size_t e = 0; e < trained.curve.size(); ++e) {
      const auto& c = trained.curve[e];
      csv += std::to_string(e + 1) + "," + fmt(c.j1) + "," + fmt(c.j2) + "," + fmt(c.total()) + "\n";
    }
    write_text(curve, csv);
    m.output(curve);

    const auto& last = trained.curve.empty() ? trained.initial : trained.curve.back();
    m.results()["initial_total"] = trained.initial.total();
    m.results()["final_j1"] = last.j1;
    m.results()["final_j2"] = last.j2;
    m.results()["final_total"] = last.total();
    m.results()["final_learning_rate"] = trained.final_learning_rate;
    m.write(manifest_path(manifest, out));
  }
};

// ---------------------------------------------------------------------------
// score / sweep

struct Score {
  std::string features;
  std::string pooling;
  std::uint64_t seed = 1;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("score", "invariance score F = H / G of raw or pooled features");
    app->add_option("--features", features, "APFP feature pairs")->required();
    app->add_option("--pool", pooling, "APPM matrix; score P y instead of y");
    app->add_option("--seed", seed, "permutation seed");
    app->add_option("--out", out, "output JSON report")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("score", *app);
    m.input(features);
    auto fp = load_feature_pairs(features);
    if (!pooling.empty()) {
      m.input(pooling);
      const auto p = read_pooling(pooling);
      fp = {pool(p, fp.first), pool(p, fp.second)};
    }
    const auto r = invariance_score(fp, seed);
    nlohmann::ordered_json report;
    report["pairs"] = fp.size();
    report["dim"] = fp.dim();
    report["g_mean"] = r.g_mean;
    report["h_mean"] = r.h_mean;
    report["f_score"] = json_number(r.f_score);
    report["permutation_seed"] = r.permutation_seed;
    write_text(out, report.dump(2) + "\n");
    m.output(out);
    m.results() = report;
    m.write(manifest_path(manifest, out));
  }
};

struct Sweep {
  std::string features;
  std::string pairs;
  int bank = 2;
  SweepConfig cfg;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("sweep", "invariance of raw and pooled features across lambda values");
    app->add_option("--features", features, "APFP feature pairs");
    app->add_option("--pairs", pairs, "APPD pairs, featurised with an oriented line bank");
    app->add_option("--bank", bank, "orientations of the line bank used with --pairs");
    cfg.lambdas = {0.01, 0.1, 1, 10, 100};
    app->add_option("--lambdas", cfg.lambdas, "strictly increasing lambda values")->delimiter(',');
    app->add_option("--clusters", cfg.clusters, "number of pooled units K");
    app->add_option("--holdout", cfg.holdout_fraction, "trailing fraction of pairs used only for scoring");
    app->add_option("--score-seed", cfg.score_seed, "permutation seed of the invariance score");
    add_pool_train_options(app, cfg.base);
    app->add_option("--out", out, "output CSV (lambda,f_raw,f_pooled)")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("sweep", *app);
    require(features.empty() != pairs.empty(), ErrorCode::kInvalidConfig, "give exactly one of --features and --pairs");
    SweepResult r;
    if (!features.empty()) {
      m.input(features);
      r = lambda_sweep(load_feature_pairs(features), cfg);
    } else {
      m.input(pairs);
      const auto set = load_pairs(pairs);
      require(set.height() == set.width(), ErrorCode::kDimensionMismatch, "line bank needs square frames");
      r = lambda_sweep(set, OrientedLineBank(set.height(), bank), cfg);
    }
    write_sweep_csv(r, out);
    m.output(out);
    m.note("scoring", "invariance scores are computed on held-out pairs not used for training");
    m.results()["train_pairs"] = r.train_pairs;
    m.results()["heldout_pairs"] = r.heldout_pairs;
    m.write(manifest_path(manifest, out));
  }
};

// ---------------------------------------------------------------------------
// train-clf / eval

struct TrainClf {
  std::string train;
  ClassifierTrainConfig cfg;
  bool no_standardize = false;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("train-clf", "train a one-vs-rest linear classifier");
    app->add_option("--train", train, "APLF labeled features")->required();
    app->add_option("--reg", cfg.regularization, "L2 regularisation strength");
    app->add_option("--lr", cfg.learning_rate, "learning rate multiplier");
    app->add_option("--epochs", cfg.epochs, "full-batch epochs");
    app->add_flag("--no-standardize", no_standardize, "use raw features");
    app->add_option("--out", out, "output APLC file")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("train-clf", *app);
    m.input(train);
    cfg.standardize = !no_standardize;
    const auto set = load_labeled_features(train);
    const auto trained = train_classifier(set.features, set.labels, set.n_classes, cfg);
    save_classifier(trained.classifier, out);
    m.output(out);
    m.results()["initial_objective"] = trained.initial_objective;
    m.results()["final_objective"] =
        trained.objective_curve.empty() ? trained.initial_objective : trained.objective_curve.back();
    m.results()["train_accuracy"] = evaluate_classifier(trained.classifier, set.features, set.labels);
    m.write(manifest_path(manifest, out));
  }
};

struct Eval {
  std::string model;
  std::string test;
  std::string out;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("eval", "accuracy of a classifier on labeled features");
    app->add_option("--model", model, "APLC classifier")->required();
    app->add_option("--test", test, "APLF labeled features")->required();
    app->add_option("--out", out, "output JSON report")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run() {
    RunManifest m("eval", *app);
    m.input(model);
    m.input(test);
    const auto clf = read_classifier(model);
    const auto set = load_labeled_features(test);
    nlohmann::ordered_json report;
    report["examples"] = set.size();
    report["accuracy"] = evaluate_classifier(clf, set.features, set.labels);
    write_text(out, report.dump(2) + "\n");
    m.output(out);
    m.results() = report;
    m.write(manifest_path(manifest, out));
  }
};

// ---------------------------------------------------------------------------
// viz

struct Viz {
  std::string pooling;
  std::string sae;
  int channels = 0;
  int height = 0;
  int width = 0;
  int bank = 0;
  int bank_size = 16;
  double eps = 0.0;
  int top = 15;
  int max_tiles = 64;
  int scale = 4;
  std::string out_dir;
  std::string manifest;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("viz", "render pooled clusters as PGM/PPM montages");
    app->add_option("--pool", pooling, "APPM matrix")->required();
    app->add_option("--sae", sae, "APSE model whose features were pooled");
    app->add_option("--channels", channels, "patch channels (0 = infer)");
    app->add_option("--height", height, "image height of convolutional features (0 = patch size)");
    app->add_option("--width", width, "image width of convolutional features (0 = patch size)");
    app->add_option("--bank", bank, "pooled features come from a line bank with this many orientations");
    app->add_option("--bank-size", bank_size, "frame side of the line bank");
    app->add_option("--eps", eps, "show features with P_ij > eps (non-convolutional models)");
    app->add_option("--top", top, "maps per cluster, by pooling area (convolutional models)");
    app->add_option("--max-tiles", max_tiles, "cap on tiles per cluster image");
    app->add_option("--scale", scale, "integer upscaling of every tile");
    app->add_option("--out-dir", out_dir, "output directory")->required();
    app->add_option("--manifest", manifest, "manifest path (default: <out-dir>/manifest.json)");
  }

  // Feature images: one tile per feature of a non-convolutional source.
  std::vector<Raster> feature_tiles(Index m, int* tile_channels) const {
    std::vector<Raster> tiles;
    if (!sae.empty()) {
      const auto model = read_sae(sae);
      const auto [side, c] = sae_patch_geometry(model, channels);
      require(model.hidden_dim() == m, ErrorCode::kDimensionMismatch, "model hidden size differs from P columns");
      for (Index j = 0; j < m; ++j) {
        const Eigen::VectorXd w = model.w_enc.row(j).transpose();
        tiles.push_back(weight_tile({w.data(), std::size_t(w.size())}, side, side, c));
      }
      *tile_channels = c;
    } else if (bank > 0) {
      const OrientedLineBank lines(bank_size, bank);
      require(lines.feature_dim() == m, ErrorCode::kDimensionMismatch, "line bank size differs from P columns");
      for (Index j = 0; j < m; ++j) {
        const Eigen::VectorXd w = lines.templates().row(j).transpose();
        tiles.push_back(weight_tile({w.data(), std::size_t(w.size())}, bank_size, bank_size, 1));
      }
      *tile_channels = 1;
    } else {
      // No feature images: each member feature is drawn as one white cell.
      for (Index j = 0; j < m; ++j) tiles.emplace_back(1, 1, 1, 255);
      *tile_channels = 1;
    }
    return tiles;
  }

  void run() {
    RunManifest mf("viz", *app);
    require(eps >= 0, ErrorCode::kBadThreshold, "threshold must be >= 0");
    require(sae.empty() || bank == 0, ErrorCode::kInvalidConfig, "give at most one of --sae and --bank");
    mf.input(pooling);
    const auto p = read_pooling(pooling);
    if (!sae.empty()) mf.input(sae);
    fs::create_directories(out_dir);

    std::optional<ConvLayout> layout;
    std::optional<SparseAutoencoder<double>> model;
    if (!sae.empty()) {
      model = read_sae(sae);
      const auto [side, c] = sae_patch_geometry(*model, channels);
      const int h = height ? height : side, w = width ? width : side;
      if (h != side || w != side) layout = conv_layout_for(*model, h, w, c);
    }

    int written = 0;
    if (layout) {
      require(layout->feature_dim() == p.feature_dim(), ErrorCode::kDimensionMismatch,
              "layout feature dim differs from P columns");
      const auto [side, c] = sae_patch_geometry(*model, channels);
      const auto ranked = top_maps_by_pool_area(p, *layout, top);
      const double vmax = p.matrix().maxCoeff();
      const int cell = std::max(layout->map_rows(), side) * scale;
      for (Index i = 0; i < p.clusters(); ++i) {
        const auto& maps = ranked[std::size_t(i)];
        Montage mon(2, std::max<int>(1, int(maps.size())), cell, cell, c);
        for (std::size_t t = 0; t < maps.size(); ++t) {
          const int k = maps[t];
          const Eigen::VectorXd region =
              p.matrix().row(i).segment(Index(k) * layout->map_size(), layout->map_size()).transpose();
          mon.place(0, int(t),
                    upscale(heatmap_tile({region.data(), std::size_t(region.size())}, layout->map_rows(),
                                         layout->map_cols(), vmax),
                            scale));
          const Eigen::VectorXd w = model->w_enc.row(k).transpose();
          mon.place(1, int(t), upscale(weight_tile({w.data(), std::size_t(w.size())}, side, side, c), scale));
        }
        written += save_cluster(mon.image(), i, mf);
      }
    } else {
      int tile_channels = 1;
      const auto tiles = feature_tiles(p.feature_dim(), &tile_channels);
      const auto members = clusters_above_threshold(p, eps);
      for (Index i = 0; i < p.clusters(); ++i) {
        auto ids = members[std::size_t(i)];
        std::stable_sort(ids.begin(), ids.end(), [&](Index a, Index b) { return p(i, a) > p(i, b); });
        if (int(ids.size()) > max_tiles) ids.resize(std::size_t(max_tiles));
        const int n = std::max<int>(1, int(ids.size()));
        const int cols = static_cast<int>(std::ceil(std::sqrt(double(n))));
        const int rows = (n + cols - 1) / cols;
        const int th = tiles.front().height * scale, tw = tiles.front().width * scale;
        Montage mon(rows, cols, th, tw, tile_channels);
        for (std::size_t t = 0; t < ids.size(); ++t)
          mon.place(int(t) / cols, int(t) % cols, upscale(tiles[std::size_t(ids[t])], scale));
        written += save_cluster(mon.image(), i, mf);
      }
    }
    mf.results()["images"] = written;
    mf.write(manifest.empty() ? fs::path(out_dir) / "manifest.json" : fs::path(manifest));
  }

  int save_cluster(const Raster& image, Index i, RunManifest& mf) const {
    char name[32];
    std::snprintf(name, sizeof(name), "cluster_%04lld.%s", static_cast<long long>(i),
                  image.channels == 1 ? "pgm" : "ppm");
    const fs::path path = fs::path(out_dir) / name;
    write_pnm(image, path);
    mf.output(path);
    return 1;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"autopool: learned pooling of features from image pairs"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML file of option values; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenSynth gen_synth;
  TrainSae train_sae_cmd;
  Extract extract;
  TrainPool train_pool;
  Spool spool;
  Score score;
  Sweep sweep;
  TrainClf train_clf;
  Eval eval;
  Viz viz;
  gen_synth.add(app);
  train_sae_cmd.add(app);
  extract.add(app);
  train_pool.add(app);
  spool.add(app);
  score.add(app);
  sweep.add(app);
  train_clf.add(app);
  eval.add(app);
  viz.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ConfigError& e) {
    std::cerr << error_name(ErrorCode::kConfigParse) << ": " << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_synth.app->parsed()) gen_synth.run();
    if (train_sae_cmd.app->parsed()) train_sae_cmd.run();
    if (extract.app->parsed()) extract.run();
    if (train_pool.app->parsed()) train_pool.run();
    if (spool.app->parsed()) spool.run();
    if (score.app->parsed()) score.run();
    if (sweep.app->parsed()) sweep.run();
    if (train_clf.app->parsed()) train_clf.run();
    if (eval.app->parsed()) eval.run();
    if (viz.app->parsed()) viz.run();
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << error_name(ErrorCode::kIoFailure) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "InternalError: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
