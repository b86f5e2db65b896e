#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "doctest.h"
#include "mtgp/dataset.hpp"

using namespace mtgp;
using namespace mtgp::data;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mtgp_test_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string tiny_pgm(int h, int w, unsigned char start) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (int i = 0; i < h * w; ++i) s.push_back(static_cast<char>(start + i));
  return s;
}

}  // namespace

TEST_CASE("parse_pgm decodes a 2x2 image with exact scaling") {
  std::string bytes = "P5\n2 2\n255\n";
  const unsigned char pix[4] = {0, 255, 128, 64};
  for (unsigned char p : pix) bytes.push_back(static_cast<char>(p));

  const Image img = parse_pgm(bytes);
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.at(0, 0) == 0.0);
  CHECK(img.at(0, 1) == 1.0);
  CHECK(img.at(1, 0) == 128.0 / 255.0);
  CHECK(img.at(1, 1) == 64.0 / 255.0);
}

TEST_CASE("parse_pgm tolerates comments and odd whitespace") {
  std::string bytes = "P5 # binary\n# a comment line\n  2\t1 # dims\n 255\n";
  bytes.push_back(static_cast<char>(10));
  bytes.push_back(static_cast<char>(200));
  const Image img = parse_pgm(bytes);
  CHECK(img.height == 1);
  CHECK(img.width == 2);
  CHECK(img.at(0, 0) == 10.0 / 255.0);
  CHECK(img.at(0, 1) == 200.0 / 255.0);
}

TEST_CASE("parse_pgm rejects bad input") {
  CHECK_THROWS_AS(parse_pgm("P2\n2 2\n255\n0 0 0 0"), std::runtime_error);
  CHECK_THROWS_AS(parse_pgm("P5\n2 2\n255\nab"), std::runtime_error);  // truncated
  std::string wide = "P5\n1 1\n65535\n";
  wide.push_back('x');
  wide.push_back('y');
  CHECK_THROWS_AS(parse_pgm(wide), std::runtime_error);
  CHECK_THROWS_AS(parse_pgm("P5\n0 3\n255\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_pgm(""), std::runtime_error);
}

TEST_CASE("write_pgm then parse_pgm is lossless for byte-grid pixels") {
  Image img(3, 5);
  for (int i = 0; i < 15; ++i) img.pix[i] = static_cast<double>((i * 17) % 256) / 255.0;
  const Image back = parse_pgm(write_pgm(img));
  REQUIRE(back.same_shape(img));
  for (int i = 0; i < 15; ++i) CHECK(back.pix[i] == img.pix[i]);

  Image wild(2, 2);
  wild.pix = {-0.5, 0.25, 1.5, 1.0};  // out-of-range values clamp on write
  const Image clamped = parse_pgm(write_pgm(wild));
  CHECK(clamped.at(0, 0) == 0.0);
  CHECK(clamped.at(1, 0) == 1.0);
}

TEST_CASE("load_dataset reads a manifest with two classes") {
  TempDir dir("manifest");
  write_file(dir.path / "a.pgm", tiny_pgm(8, 8, 0));
  write_file(dir.path / "b.pgm", tiny_pgm(8, 8, 10));
  write_file(dir.path / "c.pgm", tiny_pgm(8, 8, 20));
  write_file(dir.path / "d.pgm", tiny_pgm(8, 8, 30));
  write_file(dir.path / "manifest.csv",
             "path,label,split\n"
             "a.pgm,cat,train\n"
             "b.pgm,dog,train\n"
             "c.pgm,cat,test\n"
             "d.pgm,dog,test\n");

  const Dataset ds = load_dataset(dir.path);
  REQUIRE(ds.images.size() == 4);
  CHECK(ds.num_classes == 2);
  CHECK(ds.labels == std::vector<int>{0, 1, 0, 1});  // first-appearance order
  CHECK(ds.splits[0] == Split::Train);
  CHECK(ds.splits[2] == Split::Test);
  CHECK(ds.images[0].height == 8);

  const mt::TaskSpec task = to_task(ds);
  CHECK(task.train_images.size() == 2);
  CHECK(task.test_images.size() == 2);
  CHECK(task.train_labels == std::vector<int>{0, 1});
  CHECK(task.num_classes == 2);
}

TEST_CASE("load_dataset reports the offending manifest row") {
  TempDir dir("badsplit");
  write_file(dir.path / "a.pgm", tiny_pgm(8, 8, 0));
  write_file(dir.path / "manifest.csv",
             "path,label,split\n"
             "a.pgm,cat,validation\n");
  try {
    load_dataset(dir.path);
    FAIL("expected a split error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("validation") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);  // 1-based row number
  }
}

TEST_CASE("load_dataset rejects structural problems") {
  TempDir dir("structure");
  write_file(dir.path / "a.pgm", tiny_pgm(8, 8, 0));
  write_file(dir.path / "b.pgm", tiny_pgm(8, 8, 1));
  write_file(dir.path / "small.pgm", tiny_pgm(4, 4, 0));

  // class present only in train
  write_file(dir.path / "manifest.csv",
             "path,label,split\n"
             "a.pgm,cat,train\n"
             "b.pgm,cat,train\n");
  CHECK_THROWS_AS(load_dataset(dir.path), std::runtime_error);

  // image below the 8x8 minimum
  write_file(dir.path / "manifest.csv",
             "path,label,split\n"
             "small.pgm,cat,train\n"
             "a.pgm,cat,test\n");
  CHECK_THROWS_AS(load_dataset(dir.path), std::runtime_error);

  // wrong field count
  write_file(dir.path / "manifest.csv", "path,label,split\na.pgm,cat\n");
  CHECK_THROWS_AS(load_dataset(dir.path), std::runtime_error);

  CHECK_THROWS_AS(load_dataset(dir.path / "missing"), std::runtime_error);
}

TEST_CASE("save_dataset and load_dataset round-trip") {
  TempDir dir("roundtrip");
  SynthSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.train_per_class = 3;
  spec.test_per_class = 2;
  spec.seed = 7;
  const Dataset ds = generate_synth(spec, SynthTask::Frequency);
  save_dataset(ds, dir.path / ds.name);
  const Dataset back = load_dataset(dir.path / ds.name);

  REQUIRE(back.images.size() == ds.images.size());
  CHECK(back.num_classes == ds.num_classes);
  CHECK(back.labels == ds.labels);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(back.splits[i] == ds.splits[i]);
    REQUIRE(back.images[i].same_shape(ds.images[i]));
    // PGM quantises to 1/255 steps, so round-tripping moves a pixel by at
    // most half a step
    for (std::size_t p = 0; p < ds.images[i].pix.size(); ++p) {
      CHECK(std::abs(back.images[i].pix[p] - ds.images[i].pix[p]) <=
            0.5 / 255.0 + 1e-12);
    }
  }
}

TEST_CASE("synthetic defaults produce the documented split sizes") {
  const SynthSpec spec;  // 32x32, 10 train / 100 test per class
  const Dataset orient = generate_synth(spec, SynthTask::Orientation);
  CHECK(orient.num_classes == 4);
  int train = 0, test = 0;
  for (Split s : orient.splits) (s == Split::Train ? train : test)++;
  CHECK(train == 40);
  CHECK(test == 400);
  for (const Image& img : orient.images) {
    CHECK(img.height == 32);
    CHECK(img.width == 32);
    for (double v : img.pix) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  const Dataset freq = generate_synth(spec, SynthTask::Frequency);
  CHECK(freq.num_classes == 2);
  CHECK(freq.images.size() == 2 * (10 + 100));
}

TEST_CASE("synthetic generation is bitwise deterministic") {
  SynthSpec spec;
  spec.train_per_class = 4;
  spec.test_per_class = 3;
  const Dataset a = generate_synth(spec, SynthTask::Orientation);
  const Dataset b = generate_synth(spec, SynthTask::Orientation);
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i].pix == b.images[i].pix);
  }

  SynthSpec other = spec;
  other.seed = spec.seed + 1;
  const Dataset c = generate_synth(other, SynthTask::Orientation);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.images.size() && !any_diff; ++i) {
    any_diff = a.images[i].pix != c.images[i].pix;
  }
  CHECK(any_diff);
}

TEST_CASE("generate_synth_pair yields evolution-ready tasks") {
  SynthSpec spec;
  spec.train_per_class = 5;
  spec.test_per_class = 2;
  const auto [a, b] = generate_synth_pair(spec, spec);
  CHECK(a.name == "synth_orientation");
  CHECK(b.name == "synth_frequency");
  CHECK_NOTHROW(a.validate(3));
  CHECK_NOTHROW(b.validate(3));
  CHECK(a.num_classes == 4);
  CHECK(b.num_classes == 2);
  CHECK(a.train_images.size() == 20);
  CHECK(b.train_images.size() == 10);
}

TEST_CASE("SynthSpec validation rejects unusable settings") {
  SynthSpec spec;
  CHECK_NOTHROW(spec.validate());
  SynthSpec bad = spec;
  bad.height = 7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.train_per_class = 2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.test_per_class = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.noise_std = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
