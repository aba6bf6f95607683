#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "entk/data.hpp"
#include "entk/errors.hpp"

using namespace entk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "entk_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Two 2x3 images and their labels, written byte by byte.
void write_fixture(const fs::path& img, const fs::path& lab) {
  write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3,  //
                    0, 51, 102, 153, 204, 255,                       //
                    255, 0, 0, 0, 0, 255});
  write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 2, 7, 2});
}

}  // namespace

TEST_CASE("idx images and labels parse big-endian headers") {
  const fs::path img = scratch("fix-img"), lab = scratch("fix-lab");
  write_fixture(img, lab);
  const Dataset d = load_idx(img, lab);
  REQUIRE(d.size() == 2);
  REQUIRE(d.dim() == 6);
  CHECK(d.labels == std::vector<int>{7, 2});
  CHECK(d.classes == 8);
  CHECK(d.inputs(1, 0) == doctest::Approx(0.2));
  CHECK(d.inputs(5, 0) == 1.0);
  CHECK(d.inputs(0, 1) == 1.0);
  CHECK(d.inputs(1, 1) == 0.0);
}

TEST_CASE("idx errors name the problem") {
  const fs::path img = scratch("bad-img"), lab = scratch("bad-lab");
  write_fixture(img, lab);
  write_bytes(img, {0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3});
  try {
    load_idx(img, lab);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("0x00000802") != std::string::npos);
  }
  write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3, 1, 2, 3});
  CHECK_THROWS_AS(load_idx(img, lab), LengthError);
  CHECK_THROWS_AS(load_idx(scratch("missing"), lab), Error);
  // Label count disagreeing with image count.
  write_fixture(img, lab);
  write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 1, 7});
  CHECK_THROWS_AS(load_idx(img, lab), Error);
}

TEST_CASE("idx write then read round-trips byte-valued data") {
  const fs::path img = scratch("fix-img2"), lab = scratch("fix-lab2");
  write_fixture(img, lab);
  const Dataset d = load_idx(img, lab);
  const fs::path img2 = scratch("rt-img"), lab2 = scratch("rt-lab");
  write_idx(d, img2, lab2, 2, 3);
  const Dataset back = load_idx(img2, lab2);
  CHECK(back.inputs == d.inputs);
  CHECK(back.labels == d.labels);
  std::ifstream a(img, std::ios::binary), b(img2, std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST_CASE("bundled mnist subset loads") {
  const Dataset d = load_idx(fs::path(ENTK_DATA_DIR) / "mnist-subset/train-images-idx3-ubyte",
                             fs::path(ENTK_DATA_DIR) / "mnist-subset/train-labels-idx1-ubyte");
  CHECK(d.size() == 5000);
  CHECK(d.dim() == 784);
  CHECK(d.classes == 10);
  CHECK(d.inputs.minCoeff() >= 0.0);
  CHECK(d.inputs.maxCoeff() <= 1.0);
}

TEST_CASE("gaussian blobs") {
  const Dataset a = synth_blobs(4, 30, 3, 5, 0.1);
  CHECK(a.size() == 150);
  CHECK(a.classes == 5);
  CHECK(a.inputs == synth_blobs(4, 30, 3, 5, 0.1).inputs);
  CHECK(a.inputs != synth_blobs(5, 30, 3, 5, 0.1).inputs);
  // Class 3 sits at -5 along axis 1; the sample mean lies within a few standard errors.
  Vector mean = Vector::Zero(3);
  for (Index s = 0; s < a.size(); ++s)
    if (a.labels[static_cast<std::size_t>(s)] == 3) mean += a.inputs.col(s) / 30.0;
  CHECK(std::abs(mean[1] + 5.0) < 0.1);
  CHECK(std::abs(mean[0]) < 0.1);
  CHECK_THROWS_AS(synth_blobs(1, 10, 2, 5, 1.0), Error);
}

TEST_CASE("probe sampling") {
  const Dataset d = synth_blobs(1, 20, 2, 4, 1.0);

  SUBCASE("full size keeps every index in order") {
    const ProbeSet p = probe_sample(d, d.size(), 3, false);
    for (Index i = 0; i < d.size(); ++i) CHECK(p.indices[static_cast<std::size_t>(i)] == i);
  }
  SUBCASE("deterministic, sorted, distinct") {
    const ProbeSet p = probe_sample(d, 13, 5, false);
    CHECK(p.indices == probe_sample(d, 13, 5, false).indices);
    CHECK(std::is_sorted(p.indices.begin(), p.indices.end()));
    CHECK(std::set<Index>(p.indices.begin(), p.indices.end()).size() == 13);
    CHECK(p.id() == probe_sample(d, 13, 5, false).id());
    CHECK(p.id() != probe_sample(d, 13, 6, false).id());
    for (Index i = 0; i < p.size(); ++i) {
      CHECK(p.inputs.col(i) == d.inputs.col(p.indices[static_cast<std::size_t>(i)]));
      CHECK(p.labels[static_cast<std::size_t>(i)] == d.labels[static_cast<std::size_t>(p.indices[static_cast<std::size_t>(i)])]);
    }
  }
  SUBCASE("stratified splits evenly, remainder to the lowest classes") {
    const ProbeSet p = probe_sample(d, 10, 2, true);
    std::map<int, int> count;
    for (int y : p.labels) ++count[y];
    CHECK(count[0] == 3);
    CHECK(count[1] == 3);
    CHECK(count[2] == 2);
    CHECK(count[3] == 2);
  }
  SUBCASE("size errors") {
    CHECK_THROWS_AS(probe_sample(d, 1, 0, false), UsageError);
    CHECK_THROWS_AS(probe_sample(d, d.size() + 1, 0, false), UsageError);
  }
}

TEST_CASE("dataset gather and head") {
  const Dataset d = synth_blobs(2, 5, 2, 2, 1.0);
  const std::vector<Index> idx{4, 0};
  const Batch b = d.gather(idx);
  CHECK(b.inputs.col(0) == d.inputs.col(4));
  CHECK(b.labels == std::vector<int>{d.labels[4], d.labels[0]});
  CHECK(d.head(3).size() == 3);
  CHECK(d.head(100).size() == d.size());
}
