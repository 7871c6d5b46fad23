#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "autopool/binary_io.hpp"
#include "autopool/dataset.hpp"
#include "oracles.hpp"

using namespace autopool;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> appd_header(const char* magic, std::uint32_t version, std::uint32_t n, std::uint16_t h,
                                       std::uint16_t w, std::uint8_t c) {
  io::Writer out;
  out.magic({magic, 4});
  out.put(version);
  out.put(n);
  out.put(h);
  out.put(w);
  out.put(c);
  out.put<std::uint8_t>(0);
  return out.bytes();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an autopool::Error");
  return ErrorCode::kUndefined;
}

}  // namespace

TEST_CASE("load_pairs reads a minimal all-zero file") {
  auto bytes = appd_header("APPD", 1, 1, 2, 2, 1);
  bytes.resize(bytes.size() + 2 * 4 * sizeof(float), 0);
  const auto path = oracle::temp_path("minimal.appd");
  write_bytes(path, bytes);
  const auto set = load_pairs(path);
  CHECK(set.n_pairs() == 1);
  CHECK(set.height() == 2);
  CHECK(set.width() == 2);
  CHECK(set.channels() == 1);
  for (float v : set.data()) CHECK(v == 0.f);
}

TEST_CASE("load_pairs error paths") {
  const auto path = oracle::temp_path("bad.appd");

  auto bad_magic = appd_header("XXXX", 1, 1, 2, 2, 1);
  bad_magic.resize(bad_magic.size() + 32, 0);
  write_bytes(path, bad_magic);
  CHECK(code_of([&] { load_pairs(path); }) == ErrorCode::kBadMagic);

  auto bad_version = appd_header("APPD", 2, 1, 2, 2, 1);
  bad_version.resize(bad_version.size() + 32, 0);
  write_bytes(path, bad_version);
  CHECK(code_of([&] { load_pairs(path); }) == ErrorCode::kUnsupportedVersion);

  auto truncated = appd_header("APPD", 1, 1, 2, 2, 1);
  truncated.resize(truncated.size() + 31, 0);
  write_bytes(path, truncated);
  CHECK(code_of([&] { load_pairs(path); }) == ErrorCode::kTruncatedFile);

  write_bytes(path, {'A', 'P', 'P', 'D', 1, 0});
  CHECK(code_of([&] { load_pairs(path); }) == ErrorCode::kTruncatedFile);

  auto out_of_range = appd_header("APPD", 1, 1, 2, 2, 1);
  std::vector<float> px(8, 0.f);
  px[5] = 1.5f;
  const auto* raw = reinterpret_cast<const unsigned char*>(px.data());
  out_of_range.insert(out_of_range.end(), raw, raw + px.size() * sizeof(float));
  write_bytes(path, out_of_range);
  CHECK(code_of([&] { load_pairs(path); }) == ErrorCode::kValueOutOfRange);
}

TEST_CASE("save_pairs header encodes the dimensions") {
  SynthConfig cfg;
  cfg.n_pairs = 3;
  cfg.size = 16;
  const auto set = generate_synthetic(cfg).pairs;
  const auto path = oracle::temp_path("header.appd");
  save_pairs(set, path);
  const auto bytes = io::read_file_bytes(path);
  REQUIRE(bytes.size() == 18 + 3 * 2 * 16 * 16 * 4);
  CHECK(std::memcmp(bytes.data(), "APPD", 4) == 0);
  std::uint32_t version, n;
  std::uint16_t h, w;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&n, bytes.data() + 8, 4);
  std::memcpy(&h, bytes.data() + 12, 2);
  std::memcpy(&w, bytes.data() + 14, 2);
  CHECK(version == 1);
  CHECK(n == 3);
  CHECK(h == 16);
  CHECK(w == 16);
  CHECK(bytes[16] == 1);
  CHECK(bytes[17] == 0);
}

TEST_CASE("APPD round trip is byte exact on randomised sets") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    SynthConfig cfg;
    cfg.n_pairs = 1 + static_cast<int>(rng() % 20);
    cfg.size = 4 + static_cast<int>(rng() % 20);
    cfg.channels = (rng() % 2) ? 3 : 1;
    cfg.pattern = (rng() % 2) ? PatternKind::kBlob : PatternKind::kBar;
    cfg.transform = static_cast<TransformKind>(rng() % 3);
    cfg.rotate_deg = 10;
    cfg.noise_stddev = 0.1;
    cfg.seed = rng();
    const auto set = generate_synthetic(cfg).pairs;
    const auto a = oracle::temp_path("rt_a.appd");
    const auto b = oracle::temp_path("rt_b.appd");
    save_pairs(set, a);
    const auto loaded = load_pairs(a);
    CHECK(loaded == set);
    save_pairs(loaded, b);
    CHECK(io::read_file_bytes(a) == io::read_file_bytes(b));
  }
}

TEST_CASE("save_pairs to an unwritable path fails with IoFailure") {
  SynthConfig cfg;
  cfg.n_pairs = 1;
  const auto set = generate_synthetic(cfg).pairs;
  CHECK(code_of([&] { save_pairs(set, "/nonexistent_dir/x/y.appd"); }) == ErrorCode::kIoFailure);
}

TEST_CASE("generate_synthetic with zero magnitude and zero noise gives identical frames") {
  for (auto t : {TransformKind::kTranslate, TransformKind::kRotate, TransformKind::kBoth}) {
    SynthConfig cfg;
    cfg.n_pairs = 20;
    cfg.shift_px = 0;
    cfg.rotate_deg = 0;
    cfg.noise_stddev = 0;
    cfg.transform = t;
    const auto set = generate_synthetic(cfg).pairs;
    for (int i = 0; i < set.n_pairs(); ++i) {
      const auto a = set.first(i), b = set.second(i);
      CHECK(std::equal(a.pixels.begin(), a.pixels.end(), b.pixels.begin()));
    }
  }
}

TEST_CASE("translate-by-one second frame is the explicit pixel shift of the first") {
  SynthConfig cfg;
  cfg.n_pairs = 40;
  cfg.shift_px = 1;
  cfg.noise_stddev = 0;
  const auto out = generate_synthetic(cfg);
  for (int i = 0; i < cfg.n_pairs; ++i) {
    const auto a = out.pairs.first(i), b = out.pairs.second(i);
    const int dx = static_cast<int>(out.motions[i].dx), dy = static_cast<int>(out.motions[i].dy);
    REQUIRE(std::abs(dx) + std::abs(dy) == 1);
    for (int r = 0; r < cfg.size; ++r)
      for (int c = 0; c < cfg.size; ++c) {
        const int sr = r - dy, sc = c - dx;
        const float expected = (sr >= 0 && sr < cfg.size && sc >= 0 && sc < cfg.size) ? a.at(sr, sc) : 0.f;
        CHECK(b.at(r, c) == expected);
      }
  }
}

TEST_CASE("generate_synthetic is deterministic and clamps") {
  SynthConfig cfg;
  cfg.n_pairs = 30;
  cfg.channels = 3;
  cfg.size = 32;
  cfg.transform = TransformKind::kBoth;
  cfg.rotate_deg = 12;
  cfg.noise_stddev = 0.5;
  cfg.seed = 99;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  CHECK(a.pairs == b.pairs);
  CHECK(a.groups == b.groups);
  for (float v : a.pairs.data()) CHECK((v >= 0.f && v <= 1.f));
  cfg.seed = 100;
  CHECK_FALSE(generate_synthetic(cfg).pairs == a.pairs);
}

TEST_CASE("generate_synthetic rejects invalid configs") {
  SynthConfig cfg;
  cfg.shift_px = -1;
  CHECK(code_of([&] { generate_synthetic(cfg); }) == ErrorCode::kInvalidConfig);
  cfg = {};
  cfg.n_groups = 0;
  CHECK(code_of([&] { generate_synthetic(cfg); }) == ErrorCode::kInvalidConfig);
  cfg = {};
  cfg.n_pairs = 0;
  CHECK(code_of([&] { generate_synthetic(cfg); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("ground truth groups cover every prototype") {
  SynthConfig cfg;
  cfg.n_pairs = 200;
  cfg.n_groups = 4;
  const auto out = generate_synthetic(cfg);
  std::vector<int> seen(4, 0);
  for (int g : out.groups) seen.at(g)++;
  for (int s : seen) CHECK(s > 0);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<unsigned char> cifar_records(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<unsigned char> bytes(std::size_t(n) * kCifarRecordBytes);
  for (int r = 0; r < n; ++r) {
    bytes[r * kCifarRecordBytes] = static_cast<unsigned char>(r % 10);
    for (std::size_t p = 1; p < kCifarRecordBytes; ++p) bytes[r * kCifarRecordBytes + p] = rng() & 0xff;
  }
  return bytes;
}

}  // namespace

TEST_CASE("load_cifar10_batch decodes a full batch") {
  const auto path = oracle::temp_path("data_batch_full.bin");
  auto bytes = cifar_records(10000, 3);
  bytes[1] = 255;                 // first red byte of record 0
  bytes[1 + 1024 + 5] = 0;        // green byte at pixel 5
  bytes[1 + 2048 + 1023] = 128;   // last blue byte
  write_bytes(path, bytes);
  const auto set = load_cifar10_batch(path);
  CHECK(set.size() == 10000);
  CHECK(set.height() == 32);
  CHECK(set.width() == 32);
  CHECK(set.channels() == 3);
  CHECK(set.image(0).at(0, 0, 0) == 1.0f);
  CHECK(set.image(0).at(0, 5, 1) == 0.0f);
  CHECK(set.image(0).at(31, 31, 2) == 128 / 255.0f);
  CHECK(set.label(17) == 7);
}

TEST_CASE("CIFAR loader error paths") {
  const auto path = oracle::temp_path("data_batch_bad.bin");
  auto bytes = cifar_records(3, 4);
  bytes[kCifarRecordBytes] = 12;
  write_bytes(path, bytes);
  CHECK(code_of([&] { load_cifar10_batch(path); }) == ErrorCode::kLabelOutOfRange);

  bytes = cifar_records(2, 4);
  bytes.pop_back();
  write_bytes(path, bytes);
  CHECK(code_of([&] { load_cifar10_batch(path); }) == ErrorCode::kRecordSizeMismatch);

  const auto dir = oracle::temp_path("empty_cifar_dir");
  std::filesystem::create_directories(dir);
  CHECK(code_of([&] { load_cifar10(dir); }) == ErrorCode::kMissingFiles);
  CHECK(code_of([&] { load_cifar10(dir, CifarSplit::kTest); }) == ErrorCode::kMissingFiles);
}

TEST_CASE("CIFAR save and load agree") {
  const auto dir = oracle::temp_path("cifar_rt");
  std::filesystem::create_directories(dir);
  write_bytes(dir / "test_batch.bin", cifar_records(25, 8));
  const auto set = load_cifar10(dir, CifarSplit::kTest);
  save_cifar10_batch(set, dir / "copy.bin");
  CHECK(io::read_file_bytes(dir / "copy.bin") == io::read_file_bytes(dir / "test_batch.bin"));
}

TEST_CASE("subsample_per_class") {
  const auto path = oracle::temp_path("sub.bin");
  write_bytes(path, cifar_records(100, 5));
  const auto set = load_cifar10_batch(path);

  const auto a = subsample_per_class(set, 4, 1);
  CHECK(a.size() == 40);
  for (int c = 0; c < 10; ++c) CHECK(std::count(a.labels().begin(), a.labels().end(), c) == 4);
  CHECK(subsample_per_class(set, 4, 1) == a);
  CHECK_FALSE(subsample_per_class(set, 4, 2) == a);

  // Full class size: a per-class permutation of the original images.
  const auto full = subsample_per_class(set, 10, 3);
  CHECK(full.size() == 100);
  for (int c = 0; c < 10; ++c) {
    std::vector<std::vector<float>> orig, got;
    for (int i = 0; i < set.size(); ++i)
      if (set.label(i) == c) orig.emplace_back(set.image(i).pixels.begin(), set.image(i).pixels.end());
    for (int i = 0; i < full.size(); ++i)
      if (full.label(i) == c) got.emplace_back(full.image(i).pixels.begin(), full.image(i).pixels.end());
    std::sort(orig.begin(), orig.end());
    std::sort(got.begin(), got.end());
    CHECK(orig == got);
  }

  CHECK(code_of([&] { subsample_per_class(set, 11, 0); }) == ErrorCode::kInsufficientClassCount);
}
