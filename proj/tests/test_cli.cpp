#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "autopool/binary_io.hpp"
#include "autopool/dataset.hpp"
#include "autopool/evaluation.hpp"
#include "autopool/features.hpp"
#include "autopool/image_io.hpp"
#include "autopool/pooling.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace autopool;

namespace {

struct Run {
  int exit_code;
  std::string err;
};

fs::path work_dir() {
  const auto dir = oracle::temp_path("cli");
  fs::create_directories(dir);
  return dir;
}

Run autopool_cli(const std::string& args) {
  const auto err_path = work_dir() / "stderr.txt";
  const std::string cmd = "cd '" + work_dir().string() + "' && '" AUTOPOOL_CLI "' " + args + " > /dev/null 2> '" +
                          err_path.string() + "'";
  const int status = std::system(cmd.c_str());
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gen-synth writes a loadable dataset, a sidecar and a manifest") {
  const auto r = autopool_cli("gen-synth --pairs 100 --size 16 --transform translate --mag 1 --seed 7 --out g.appd");
  REQUIRE(r.exit_code == 0);
  const auto set = load_pairs(work_dir() / "g.appd");
  CHECK(set.n_pairs() == 100);
  CHECK(set.height() == 16);

  const auto csv = read_text(work_dir() / "g.appd.groups.csv");
  CHECK(csv.rfind("pair,group\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);

  const auto manifest = nlohmann::json::parse(read_text(work_dir() / "g.appd.manifest.json"));
  CHECK(manifest["command"] == "gen-synth");
  CHECK(manifest["seeds"]["seed"] == "7");
  CHECK(manifest["outputs"][0]["fnv1a64"] == io::file_checksum(work_dir() / "g.appd"));
  CHECK(manifest.contains("duration_seconds"));
}

TEST_CASE("gen-synth with zero magnitude and noise gives identical frames") {
  for (const char* t : {"translate", "rotate", "both"}) {
    REQUIRE(autopool_cli(std::string("gen-synth --pairs 20 --mag 0 --noise 0 --transform ") + t + " --out z.appd")
                .exit_code == 0);
    const auto set = load_pairs(work_dir() / "z.appd");
    for (int i = 0; i < set.n_pairs(); ++i) {
      const auto a = set.first(i), b = set.second(i);
      CHECK(std::equal(a.pixels.begin(), a.pixels.end(), b.pixels.begin()));
    }
  }
}

TEST_CASE("identical flags give identical checksums") {
  REQUIRE(autopool_cli("gen-synth --pairs 50 --seed 3 --out r1.appd").exit_code == 0);
  REQUIRE(autopool_cli("gen-synth --pairs 50 --seed 3 --out r2.appd").exit_code == 0);
  CHECK(io::file_checksum(work_dir() / "r1.appd") == io::file_checksum(work_dir() / "r2.appd"));
  REQUIRE(autopool_cli("gen-synth --pairs 50 --seed 4 --out r3.appd").exit_code == 0);
  CHECK(io::file_checksum(work_dir() / "r1.appd") != io::file_checksum(work_dir() / "r3.appd"));
}

TEST_CASE("sweep over three lambdas gives three rows with a constant raw column") {
  REQUIRE(autopool_cli("gen-synth --pairs 120 --seed 1 --out sw.appd").exit_code == 0);
  REQUIRE(autopool_cli("extract --pairs sw.appd --bank 2 --out sw.apfp").exit_code == 0);
  REQUIRE(autopool_cli("sweep --features sw.apfp --lambdas 0.1,1,10 --epochs 30 --out sw.csv").exit_code == 0);
  std::istringstream csv(read_text(work_dir() / "sw.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "lambda,f_raw,f_pooled");
  std::vector<std::string> raw;
  while (std::getline(csv, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    raw.push_back(line.substr(a + 1, b - a - 1));
  }
  REQUIRE(raw.size() == 3);
  CHECK(raw[0] == raw[1]);
  CHECK(raw[1] == raw[2]);
  const auto manifest = nlohmann::json::parse(read_text(work_dir() / "sw.csv.manifest.json"));
  CHECK(manifest["notes"]["scoring"].get<std::string>().find("held-out") != std::string::npos);
}

TEST_CASE("train-pool with lambda 0 then score completes with a finite F") {
  REQUIRE(autopool_cli("gen-synth --pairs 80 --seed 2 --out tp.appd").exit_code == 0);
  REQUIRE(autopool_cli("extract --pairs tp.appd --bank 2 --out tp.apfp").exit_code == 0);
  REQUIRE(autopool_cli("train-pool --features tp.apfp --clusters 2 --lambda 0 --epochs 40 --out tp.appm").exit_code ==
          0);
  REQUIRE(autopool_cli("score --features tp.apfp --pool tp.appm --out tp.json").exit_code == 0);
  const auto report = nlohmann::json::parse(read_text(work_dir() / "tp.json"));
  REQUIRE(report["f_score"].is_number());
  CHECK(std::isfinite(report["f_score"].get<double>()));
  CHECK(fs::exists(work_dir() / "tp.appm.loss.csv"));
}

TEST_CASE("viz of an identity matrix writes one singleton image per cluster") {
  save_pooling(PoolingMatrix<double>::identity(5), work_dir() / "id.appm");
  fs::remove_all(work_dir() / "id_viz");
  REQUIRE(autopool_cli("viz --pool id.appm --eps 0.5 --scale 1 --out-dir id_viz").exit_code == 0);
  int images = 0;
  for (const auto& e : fs::directory_iterator(work_dir() / "id_viz")) {
    if (e.path().extension() != ".pgm") continue;
    ++images;
    const auto r = read_pnm(e.path());
    // One 1x1 tile inside a one-pixel gutter.
    CHECK(r.width == 3);
    CHECK(r.height == 3);
    CHECK(r.at(1, 1) == 255);
  }
  CHECK(images == 5);
}

TEST_CASE("viz of a convolutional model writes parseable montages") {
  REQUIRE(autopool_cli("gen-synth --pairs 40 --size 12 --seed 5 --out cv.appd").exit_code == 0);
  REQUIRE(autopool_cli("train-sae --pairs cv.appd --patch 4 --hidden 6 --samples 300 --epochs 10 --out cv.apse")
              .exit_code == 0);
  REQUIRE(autopool_cli("extract --pairs cv.appd --sae cv.apse --out cv.apfp").exit_code == 0);
  REQUIRE(autopool_cli("train-pool --features cv.apfp --clusters 3 --epochs 10 --out cv.appm").exit_code == 0);
  fs::remove_all(work_dir() / "cv_viz");
  REQUIRE(autopool_cli("viz --pool cv.appm --sae cv.apse --height 12 --width 12 --top 3 --out-dir cv_viz").exit_code ==
          0);
  for (int i = 0; i < 3; ++i) {
    const auto r = read_pnm(work_dir() / "cv_viz" / ("cluster_000" + std::to_string(i) + ".pgm"));
    CHECK(r.width > 0);
  }
}

TEST_CASE("spool matches the library and its matrix form") {
  REQUIRE(autopool_cli("gen-synth --pairs 10 --size 12 --seed 6 --out sp.appd").exit_code == 0);
  REQUIRE(autopool_cli("train-sae --pairs sp.appd --patch 3 --hidden 4 --samples 200 --epochs 5 --out sp.apse")
              .exit_code == 0);
  REQUIRE(autopool_cli("extract --pairs sp.appd --sae sp.apse --out sp_raw.apfp").exit_code == 0);
  REQUIRE(autopool_cli("spool --features sp_raw.apfp --sae sp.apse --height 12 --width 12 --grids 2,3 "
                       "--matrix-out sp.appm --out sp.apfp")
              .exit_code == 0);
  const auto raw = load_feature_pairs(work_dir() / "sp_raw.apfp");
  const auto pooled = load_feature_pairs(work_dir() / "sp.apfp");
  const auto p = load_pooling(work_dir() / "sp.appm");
  CHECK(pooled.dim() == 4 * 13);
  CHECK(pool(p, raw.first) == pooled.first);
  CHECK(pool(p, raw.second) == pooled.second);
}

TEST_CASE("errors exit non-zero with the error name on stderr") {
  auto r = autopool_cli("score --features missing.apfp --out x.json");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("IoFailure") != std::string::npos);

  save_pooling(PoolingMatrix<double>::identity(2), work_dir() / "e.appm");
  r = autopool_cli("viz --pool e.appm --eps -0.5 --out-dir e_viz");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("BadThreshold") != std::string::npos);

  {
    std::ofstream(work_dir() / "broken.appm") << "not a model";
  }
  r = autopool_cli("viz --pool broken.appm --out-dir e_viz");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("ModelParse") != std::string::npos);

  r = autopool_cli("gen-synth --mag -1 --out neg.appd");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("InvalidConfig") != std::string::npos);

  {
    std::ofstream(work_dir() / "bad.toml") << "[gen-synth]\nno_such_key = 1\n";
  }
  r = autopool_cli("--config bad.toml gen-synth --out cfg.appd");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("ConfigParse") != std::string::npos);
}

TEST_CASE("config file values apply and flags override them") {
  {
    std::ofstream(work_dir() / "run.toml") << "[gen-synth]\npairs = 12\nsize = 10\nseed = 9\n";
  }
  REQUIRE(autopool_cli("--config run.toml gen-synth --size 14 --out cfg.appd").exit_code == 0);
  const auto set = load_pairs(work_dir() / "cfg.appd");
  CHECK(set.n_pairs() == 12);
  CHECK(set.height() == 14);
}

TEST_CASE("classification commands on a CIFAR-format batch") {
  // Tiny stand-in batch: two classes distinguished by mean brightness.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.f, 0.5f);
  std::vector<float> px(std::size_t(40) * 32 * 32 * 3);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) {
    labels[std::size_t(i)] = i % 2;
    for (std::size_t k = 0; k < 32 * 32 * 3; ++k)
      px[std::size_t(i) * 32 * 32 * 3 + k] = std::round((u(rng) + 0.5f * float(i % 2)) * 255.f) / 255.f;
  }
  save_cifar10_batch(LabeledImageSet(32, 32, 3, 10, px, labels), work_dir() / "mini.bin");
  save_sae(init_sae<double>(6 * 6 * 3, 4, 1), work_dir() / "mini.apse");

  REQUIRE(autopool_cli("spool --cifar-batch mini.bin --sae mini.apse --grids 2 --out mini_sp.aplf").exit_code == 0);
  REQUIRE(autopool_cli("train-clf --train mini_sp.aplf --epochs 100 --out mini.aplc").exit_code == 0);
  REQUIRE(autopool_cli("eval --model mini.aplc --test mini_sp.aplf --out mini_eval.json").exit_code == 0);
  const auto report = nlohmann::json::parse(read_text(work_dir() / "mini_eval.json"));
  CHECK(report["examples"] == 40);
  CHECK(report["accuracy"].get<double>() == 1.0);

  const ConvLayout layout{32, 32, 3, 6, 4};
  save_pooling(PoolingMatrix<double>(Eigen::MatrixXd::Constant(3, layout.feature_dim(), 0.01)),
               work_dir() / "mini.appm");
  REQUIRE(autopool_cli("extract --cifar-batch mini.bin --sae mini.apse --pool mini.appm --out mini_ap.aplf")
              .exit_code == 0);
  const auto ap = load_labeled_features(work_dir() / "mini_ap.aplf");
  CHECK(ap.features.rows() == 3);
  CHECK(ap.size() == 40);
}
